"""Correlation-matrix calibration benchmark.

Find the matrix nearest, in the Frobenius sense, to a given symmetric data
matrix ``C`` subject to being positive semidefinite and having entries in a
box. The two constraint sets are split across three consensus copies with
pairwise-equality coupling, which puts the problem in the multi-block
solver's form:

* copies 1 and 2 carry the positive semidefinite cone,
* copy 3 carries the box,
* the coupling rows force copy 1 = copy 2, copy 1 = copy 3, copy 2 = copy 3.

Each copy keeps the full distance-to-data objective, so the block
subproblems have spherical quadratics and their constrained minimisers are
plain projections of a closed-form point; the oracles here exploit that.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .operators import BlockSignMap, ScaledIdentity, SymmetricOperator, gram_spectral_norm
from .problem import BlockProblem, BlockSpec, PrimalDualPoint
from .serialization import atomic_write_text, read_matrix, write_matrix

__all__ = [
    "DEFAULT_BOUND",
    "CalibrationInstance",
    "StackedMaps",
    "splitmix64_uniform",
    "generate_instance",
    "project_psd",
    "project_box",
    "stacked_maps",
    "verify_stacked_maps",
    "calibration_block_oracle",
    "projected_gradient_oracle",
    "build_problem",
    "default_metrics",
    "dump_instance",
    "load_instance",
]

DEFAULT_BOUND = 0.1


def splitmix64_uniform(seed: int, count: int) -> np.ndarray:
    """Deterministic uniform[0, 1) draws from a 64-bit splitmix generator.

    The state advances by the 64-bit golden-ratio increment and each output
    is finalized by two xor-shift-multiply rounds; the top 53 bits become
    the float mantissa. Platform-independent for a given seed.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    mask = (1 << 64) - 1
    golden = np.uint64(0x9E3779B97F4A7C15)
    steps = np.arange(1, count + 1, dtype=np.uint64)
    z = np.uint64(seed & mask) + steps * golden
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


@dataclass(frozen=True)
class CalibrationInstance:
    """Data matrix and box bounds for one calibration problem."""

    n: int
    c: np.ndarray
    h_lower: np.ndarray
    h_upper: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "h_lower", np.asarray(self.h_lower, dtype=float))
        object.__setattr__(self, "h_upper", np.asarray(self.h_upper, dtype=float))
        if c.shape != (self.n, self.n):
            raise ValueError(f"data matrix has shape {c.shape}, expected ({self.n}, {self.n})")
        scale = 1.0 + float(np.abs(c).max(initial=0.0))
        if np.abs(c - c.T).max(initial=0.0) > 1e-12 * scale:
            raise ValueError("data matrix must be symmetric")
        if self.h_lower.shape != c.shape or self.h_upper.shape != c.shape:
            raise ValueError("bound matrices must match the data matrix shape")
        if np.any(self.h_lower > self.h_upper):
            raise ValueError("lower bounds exceed upper bounds somewhere")


def generate_instance(n: int, seed: int, bound: float = DEFAULT_BOUND) -> CalibrationInstance:
    """Random instance: ``C = R' + R - ones + eye`` with uniform[0,1) ``R``.

    Entries of ``C`` land in (-1, 1) off the diagonal; the diagonal entry
    ``i`` equals twice the uniform draw ``R_ii``. Box bounds are the
    constant ``bound`` on every entry.
    """
    if n < 1:
        raise ValueError("n must be positive")
    r = splitmix64_uniform(seed, n * n).reshape(n, n)
    c = r.T + r - np.ones((n, n)) + np.eye(n)
    h_upper = np.full((n, n), float(bound))
    return CalibrationInstance(n=n, c=c, h_lower=-h_upper, h_upper=h_upper, seed=seed)


def project_psd(a: np.ndarray) -> np.ndarray:
    """Nearest positive semidefinite matrix: clamp negative eigenvalues.

    The input is symmetrised first, so roundoff-asymmetric inputs are fine.
    """
    sym = 0.5 * (np.asarray(a, dtype=float) + np.asarray(a, dtype=float).T)
    evals, evecs = np.linalg.eigh(sym)
    clipped = np.maximum(evals, 0.0)
    return (evecs * clipped) @ evecs.T


def project_box(a: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Elementwise clamp into ``[lower, upper]``."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(lower > upper):
        raise ValueError("lower bounds exceed upper bounds somewhere")
    return np.clip(np.asarray(a, dtype=float), lower, upper)


@dataclass(frozen=True)
class StackedMaps:
    """The three consensus coupling maps and the constraint layout.

    Each map stacks three signed identity slots over the pairwise-equality
    rows (copy1 - copy2, copy1 - copy3, copy2 - copy3):
    copy 1 enters with signs (+, +, 0), copy 2 with (-, 0, +),
    copy 3 with (0, -, -). The Gram products are structural:
    ``A_i'A_i = 2 I`` for every copy and ``A_i'A_j = -I`` for every pair.
    """

    a1: BlockSignMap
    a2: BlockSignMap
    a3: BlockSignMap
    n: int

    @property
    def constraint_dim(self) -> int:
        return 3 * self.n * self.n


def stacked_maps(n: int) -> StackedMaps:
    d = n * n
    return StackedMaps(
        a1=BlockSignMap((1, 1, 0), d),
        a2=BlockSignMap((-1, 0, 1), d),
        a3=BlockSignMap((0, -1, -1), d),
        n=n,
    )


def verify_stacked_maps(maps: StackedMaps, rng: np.random.Generator | None = None,
                        tol: float = 1e-12) -> float:
    """Probe the structural Gram products; returns the worst defect.

    ``A_i'A_i v = 2 v`` and ``A_i'A_j v = -v`` must hold for random probes.
    Raises ``ValueError`` beyond ``tol``.
    """
    rng = rng or np.random.default_rng(0)
    trio = (maps.a1, maps.a2, maps.a3)
    worst = 0.0
    for i, ai in enumerate(trio):
        for j, aj in enumerate(trio):
            v = rng.standard_normal(ai.in_dim)
            expected = 2.0 * v if i == j else -v
            defect = float(np.max(np.abs(ai.adjoint(aj.apply(v)) - expected)))
            worst = max(worst, defect)
    if worst > tol:
        raise ValueError(f"stacked maps lost their structural Gram products "
                         f"(defect {worst:.3e})")
    return worst


def calibration_block_oracle(c: np.ndarray, amap: BlockSignMap, projection):
    """Exact subproblem oracle for one consensus copy.

    Solves ``min 0.5 ||X - C||^2 + (rho/2) ||A X - target||^2
    + (sigma/2) ||X - center||^2`` over the copy's constraint set. Because
    ``A'A = 2 I`` here, the quadratic is spherical and the constrained
    minimiser is the projection of ``(C + sigma * center + rho * A'target)
    / (1 + 2 rho + sigma)``.

    Only spherical (scaled-identity) proximal metrics keep that exactness;
    anything else raises, with a pointer at what would be needed instead.
    """
    n = c.shape[0]
    c_flat = c.reshape(-1)

    def oracle(target: np.ndarray, center: np.ndarray, rho: float,
               metric: SymmetricOperator) -> np.ndarray:
        if not isinstance(metric, ScaledIdentity) or metric.scale < 0.0:
            raise ValueError(
                "the closed-form calibration oracle is exact only for "
                "nonnegative scaled-identity proximal metrics; supply an "
                "iterative subproblem solver for general metrics")
        sigma = metric.scale
        pulled = amap.adjoint(target)
        candidate = (c_flat + sigma * center + rho * pulled) / (1.0 + 2.0 * rho + sigma)
        return projection(candidate.reshape(n, n)).reshape(-1)

    return oracle


def projected_gradient_oracle(c: np.ndarray, amap: BlockSignMap, projection,
                              target: np.ndarray, center: np.ndarray,
                              rho: float, sigma: float,
                              iterations: int = 80) -> np.ndarray:
    """Independent route to the same subproblem, for cross-validation.

    Plain projected gradient on the block subproblem, deliberately not
    reusing the closed form: the smoothness constant comes from a power
    iteration on the Gram operator, and the step is half its inverse so the
    iteration takes many genuinely contractive steps rather than jumping to
    the unconstrained minimiser.
    """
    n = c.shape[0]
    c_flat = c.reshape(-1)
    gram_norm = gram_spectral_norm(amap)
    lipschitz = 1.0 + rho * gram_norm + sigma
    step = 0.5 / lipschitz
    x = np.array(center, dtype=float)
    for _ in range(iterations):
        gradient = (x - c_flat
                    + rho * amap.adjoint(amap.apply(x) - target)
                    + sigma * (x - center))
        x = projection((x - step * gradient).reshape(n, n)).reshape(-1)
    return x


def build_problem(instance: CalibrationInstance) -> BlockProblem:
    """Assemble the three-copy consensus problem for an instance."""
    n = instance.n
    d = n * n
    maps = stacked_maps(n)
    verify_stacked_maps(maps)
    c_flat = instance.c.reshape(-1)

    def objective(x: np.ndarray) -> float:
        return 0.5 * float(np.sum((x - c_flat) ** 2))

    def psd_projection(mat: np.ndarray) -> np.ndarray:
        return project_psd(mat)

    def box_projection(mat: np.ndarray) -> np.ndarray:
        return project_box(mat, instance.h_lower, instance.h_upper)

    def flat(projection):
        return lambda v: projection(v.reshape(n, n)).reshape(-1)

    blocks = (
        BlockSpec(
            dim=d, linear_map=maps.a1,
            subproblem_oracle=calibration_block_oracle(instance.c, maps.a1, psd_projection),
            objective_oracle=objective,
            projection=flat(psd_projection),
        ),
        BlockSpec(
            dim=d, linear_map=maps.a2,
            subproblem_oracle=calibration_block_oracle(instance.c, maps.a2, psd_projection),
            objective_oracle=objective,
            projection=flat(psd_projection),
        ),
        BlockSpec(
            dim=d, linear_map=maps.a3,
            subproblem_oracle=calibration_block_oracle(instance.c, maps.a3, box_projection),
            objective_oracle=objective,
            projection=flat(box_projection),
        ),
    )
    return BlockProblem(blocks=blocks, rhs=np.zeros(maps.constraint_dim),
                        constraint_dim=maps.constraint_dim)


def default_metrics(instance: CalibrationInstance,
                    scale: float = 0.5) -> tuple[SymmetricOperator, ...]:
    """The benchmark's spherical proximal metrics, ``scale * I`` per copy."""
    d = instance.n * instance.n
    return tuple(ScaledIdentity(d, scale) for _ in range(3))


def dump_instance(instance: CalibrationInstance, directory: str) -> None:
    """Write the data matrix (plain text) and a JSON sidecar of scalars.

    Only uniform box bounds are dumped; the sidecar keeps the single bound
    value alongside ``n`` and the generator seed.
    """
    bound = float(instance.h_upper.flat[0])
    if not (np.all(instance.h_upper == bound) and np.all(instance.h_lower == -bound)):
        raise ValueError("only uniform symmetric box bounds can be dumped")
    os.makedirs(directory, exist_ok=True)
    write_matrix(os.path.join(directory, "c_matrix.txt"), instance.c)
    sidecar = {"n": instance.n, "seed": instance.seed, "bound": bound}
    atomic_write_text(os.path.join(directory, "instance.json"),
                      json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load_instance(directory: str) -> CalibrationInstance:
    """Inverse of :func:`dump_instance`."""
    with open(os.path.join(directory, "instance.json")) as handle:
        sidecar = json.load(handle)
    c = read_matrix(os.path.join(directory, "c_matrix.txt"))
    n = int(sidecar["n"])
    bound = float(sidecar["bound"])
    h_upper = np.full((n, n), bound)
    seed = sidecar.get("seed")
    return CalibrationInstance(n=n, c=c, h_lower=-h_upper, h_upper=h_upper,
                               seed=None if seed is None else int(seed))
