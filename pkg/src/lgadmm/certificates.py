"""Runtime certificates for the relaxed multi-block splitting scheme.

The scheme's convergence theory is phrased through three structured
matrices on the primal-dual space, ordered as (first-phase blocks, last
block, multiplier):

* ``Q`` couples an auxiliary point to the variational inequality of the
  problem (one step satisfies a mixed inequality against every feasible
  point, with ``Q`` on the right-hand side);
* ``M`` turns the auxiliary point into the actual update,
  ``w_next = w - M (w - w_bar)``;
* ``H``, symmetric, factors ``Q = H M`` and induces the norm in which the
  iterates contract toward the solution set.

``N = Q' + Q - M'H M`` is block diagonal and measures the per-step
decrease. Every certificate below evaluates one provable inequality on a
recorded trajectory, with an explicit scale-aware slack for floating-point
error, and reports the worst margin observed. Checks whose proofs need
matrix conditions the configuration does not satisfy are skipped with a
recorded reason, never silently passed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .operators import LinearMap, SymmetricOperator, gram_min_eigenvalue, _power_method
from .problem import (
    BlockProblem,
    PrimalDualPoint,
    ViOperatorValue,
    evaluate_objective,
    pack_vi_value,
    vi_operator,
)

if TYPE_CHECKING:
    from .solver import IterationState, SolverConfig, TrajectoryRecord

__all__ = [
    "DENSE_DIM_CAP",
    "CertificateError",
    "MetricConsistencyError",
    "ProbeFeasibilityError",
    "MetricMatrices",
    "CertificateReport",
    "assemble_metrics",
    "apply_metric",
    "weighted_norm_sq",
    "sigma_gamma",
    "inequality_slack",
    "check_probe_feasible",
    "fejer_check",
    "nonergodic_monotonicity_check",
    "nonergodic_rate_check",
    "ergodic_average",
    "ergodic_gap_check",
    "cross_term_check",
    "update_recurrence_check",
    "step_inequality_probe",
    "step_inequality_check",
]

DENSE_DIM_CAP = 5000

EIG_ZERO_TOL = 1e-10

SLACK_COEFF = 1e-8


class CertificateError(Exception):
    """Base class for certificate-engine errors."""


class MetricConsistencyError(CertificateError):
    """The assembled metrics violate an identity they provably satisfy."""


class ProbeFeasibilityError(CertificateError):
    """A probe point lies outside the feasible set beyond tolerance."""


def inequality_slack(*terms: float) -> float:
    """Additive floating-point slack, scaled by the largest term magnitude."""
    biggest = max((abs(t) for t in terms), default=0.0)
    return SLACK_COEFF * (1.0 + biggest)


def sigma_gamma(gamma: float) -> float:
    """The rate constant ``min{(2 - gamma)/gamma, 1}``, positive on (0, 2)."""
    if not 0.0 < gamma < 2.0:
        raise ValueError(f"gamma must lie strictly between 0 and 2, got {gamma}")
    return min((2.0 - gamma) / gamma, 1.0)


def _pack(point: PrimalDualPoint) -> np.ndarray:
    return np.concatenate([*point.primal, point.dual])


# ---------------------------------------------------------------------------
# First-phase coupled metric, shared with solver validation.

def first_phase_apply(problem: BlockProblem, prox: Sequence[SymmetricOperator],
                      rho: float, r: np.ndarray) -> np.ndarray:
    """Apply the coupled first-phase metric (prox metrics on the diagonal,
    ``-rho A_i'A_j`` off it) to a concatenated first-phase vector."""
    blocks = problem.blocks[:-1]
    pieces = []
    offset = 0
    for block in blocks:
        pieces.append(r[offset:offset + block.dim])
        offset += block.dim
    images = [block.linear_map.apply(x) for block, x in zip(blocks, pieces)]
    total = np.sum(images, axis=0) if images else np.zeros(problem.constraint_dim)
    out = []
    for i, (block, x) in enumerate(zip(blocks, pieces)):
        out.append(prox[i].apply(x) - rho * block.linear_map.adjoint(total - images[i]))
    return np.concatenate(out)


def first_phase_dense(problem: BlockProblem, prox: Sequence[SymmetricOperator],
                      rho: float) -> np.ndarray:
    """Materialise the coupled first-phase metric."""
    blocks = problem.blocks[:-1]
    dims = [block.dim for block in blocks]
    offsets = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    out = np.zeros((offsets[-1], offsets[-1]))
    dense_maps = [block.linear_map.dense() for block in blocks]
    for i, block in enumerate(blocks):
        sl = slice(offsets[i], offsets[i + 1])
        out[sl, sl] = prox[i].dense()
    for i in range(len(blocks)):
        for j in range(i + 1, len(blocks)):
            cross = -rho * (dense_maps[i].T @ dense_maps[j])
            out[offsets[i]:offsets[i + 1], offsets[j]:offsets[j + 1]] = cross
            out[offsets[j]:offsets[j + 1], offsets[i]:offsets[i + 1]] = cross.T
    return out


def _symmetric_min_eig_power(apply_fn, dim: int) -> float:
    """Smallest eigenvalue of a symmetric operator via two power sweeps."""
    top = _power_method(apply_fn, dim)
    if top == 0.0:
        return 0.0
    shift = top * (1.0 + 1e-12)
    residual = _power_method(lambda v: shift * v - apply_fn(v), dim)
    return shift - residual


def first_phase_min_eig_estimate(problem: BlockProblem,
                                 prox: Sequence[SymmetricOperator],
                                 rho: float,
                                 dense_cap: int) -> tuple[float, str]:
    """Smallest eigenvalue of the coupled first-phase metric, with method tag."""
    first_dim = sum(block.dim for block in problem.blocks[:-1])
    if problem.num_blocks == 2:
        # No couplings: the metric is the first block's prox metric itself.
        return prox[0].min_eigenvalue(), "operator"
    if first_dim <= dense_cap:
        dense = first_phase_dense(problem, prox, rho)
        return float(np.linalg.eigvalsh(dense)[0]), "dense"
    value = _symmetric_min_eig_power(
        lambda r: first_phase_apply(problem, prox, rho, r), first_dim)
    return value, "power"


def last_condition_min_eig_estimate(problem: BlockProblem,
                                    p_m: SymmetricOperator,
                                    rho: float, gamma: float,
                                    dense_cap: int) -> tuple[float, str]:
    """Smallest eigenvalue of ``P_m + (rho/gamma) A_m'A_m``, with method tag."""
    last = problem.blocks[-1]
    coeff = rho / gamma
    bound = p_m.min_eigenvalue() + coeff * gram_min_eigenvalue(last.linear_map)
    if bound > EIG_ZERO_TOL:
        return bound, "bound"
    if last.dim <= dense_cap:
        am = last.linear_map.dense()
        dense = p_m.dense() + coeff * (am.T @ am)
        return float(np.linalg.eigvalsh(dense)[0]), "dense"
    value = _symmetric_min_eig_power(
        lambda x: p_m.apply(x) + coeff * last.linear_map.adjoint(last.linear_map.apply(x)),
        last.dim)
    return value, "power"


# ---------------------------------------------------------------------------
# Metric assembly.

@dataclass
class MetricMatrices:
    """The certificate metrics for one (problem, config) pair.

    Dense realisations (``g1``, ``q``, ``m_mat``, ``h``, ``n_mat``) are
    present when the total dimension fits under the cap; the structural
    (matrix-free) evaluators work either way and are the ones every check
    uses. ``strict_ok`` records whether the matrix conditions behind the
    contraction certificates hold for this configuration.
    """

    rho: float
    gamma: float
    prox: tuple[SymmetricOperator, ...]
    maps: tuple[LinearMap, ...]
    block_dims: tuple[int, ...]
    constraint_dim: int
    dense: dict[str, np.ndarray] | None
    g1_min_eig: float
    g1_method: str
    last_condition_min_eig: float
    last_condition_method: str
    p_m_min_eig: float
    h_min_eig: float | None
    n_min_eig: float | None
    strict_ok: bool
    strict_reason: str | None
    _problem: BlockProblem = field(repr=False, default=None)

    @property
    def matrix_free(self) -> bool:
        return self.dense is None

    @property
    def g1(self) -> np.ndarray | None:
        return None if self.dense is None else self.dense["g1"]

    @property
    def q(self) -> np.ndarray | None:
        return None if self.dense is None else self.dense["q"]

    @property
    def m_mat(self) -> np.ndarray | None:
        return None if self.dense is None else self.dense["m"]

    @property
    def h(self) -> np.ndarray | None:
        return None if self.dense is None else self.dense["h"]

    @property
    def n_mat(self) -> np.ndarray | None:
        return None if self.dense is None else self.dense["n"]

    @property
    def first_dim(self) -> int:
        return sum(self.block_dims[:-1])

    @property
    def total_dim(self) -> int:
        return sum(self.block_dims) + self.constraint_dim

    def split(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        first = self.first_dim
        last = first + self.block_dims[-1]
        return v[:first], v[first:last], v[last:]

    def to_dict(self) -> dict:
        return {
            "g1_min_eig": self.g1_min_eig,
            "g1_method": self.g1_method,
            "last_condition_min_eig": self.last_condition_min_eig,
            "last_condition_method": self.last_condition_method,
            "p_m_min_eig": self.p_m_min_eig,
            "h_min_eig": self.h_min_eig,
            "n_min_eig": self.n_min_eig,
            "strict_ok": self.strict_ok,
            "strict_reason": self.strict_reason,
            "matrix_free": self.matrix_free,
        }


def assemble_metrics(problem: BlockProblem, config: "SolverConfig",
                     mode: str = "auto",
                     dense_cap: int = DENSE_DIM_CAP) -> MetricMatrices:
    """Build the certificate metrics, densely when the dimension allows.

    The dense path cross-checks the factorization ``Q = H M`` and the two
    independent constructions of ``N`` (the block-diagonal closed form
    against ``Q' + Q - M'H M``), and verifies that positive definiteness of
    the first-phase metric propagates to ``H`` and ``N`` as the theory
    guarantees. Violations raise ``MetricConsistencyError``; they would mean
    the assembly itself is wrong.

    Parameters
    ----------
    mode : {"auto", "dense", "matrix_free"}
        ``dense`` insists on dense realisations and raises ``ValueError``
        above the cap; ``auto`` assembles densely when the total dimension
        fits.
    """
    if mode not in ("auto", "dense", "matrix_free"):
        raise ValueError(f"unknown mode {mode!r}")
    rho, gamma = config.rho, config.gamma
    if not 0.0 < gamma < 2.0:
        raise ValueError(f"gamma must lie strictly between 0 and 2, got {gamma}")
    prox = tuple(config.proximal_metrics)
    if len(prox) != problem.num_blocks:
        raise ValueError(f"{len(prox)} proximal metrics for {problem.num_blocks} blocks")
    maps = tuple(block.linear_map for block in problem.blocks)
    total_dim = problem.total_dim
    if mode == "dense" and total_dim > dense_cap:
        raise ValueError(
            f"total dimension {total_dim} exceeds the dense cap {dense_cap}")
    dense_mode = mode == "dense" or (mode == "auto" and total_dim <= dense_cap)

    p_m = prox[-1]
    p_m_min = p_m.min_eigenvalue()

    dense = None
    h_min = n_min = None
    if dense_mode:
        first = sum(problem.block_dims[:-1])
        last_dim = problem.block_dims[-1]
        ell = problem.constraint_dim
        fp = slice(0, first)
        lb = slice(first, first + last_dim)
        du = slice(first + last_dim, first + last_dim + ell)

        g1 = first_phase_dense(problem, prox, rho)
        am = maps[-1].dense()
        gram_m = am.T @ am
        pm_dense = p_m.dense()
        eye_ell = np.eye(ell)

        q = np.zeros((total_dim, total_dim))
        q[fp, fp] = g1
        q[lb, lb] = rho * gram_m + pm_dense
        q[lb, du] = (1.0 - gamma) * am.T
        q[du, lb] = -am
        q[du, du] = eye_ell / rho

        m_mat = np.eye(total_dim)
        m_mat[du, lb] = -rho * am
        m_mat[du, du] = gamma * eye_ell

        h = np.zeros((total_dim, total_dim))
        h[fp, fp] = g1
        h[lb, lb] = pm_dense + (rho / gamma) * gram_m
        h[lb, du] = ((1.0 - gamma) / gamma) * am.T
        h[du, lb] = ((1.0 - gamma) / gamma) * am
        h[du, du] = eye_ell / (gamma * rho)

        n_mat = np.zeros((total_dim, total_dim))
        n_mat[fp, fp] = g1
        n_mat[lb, lb] = pm_dense
        n_mat[du, du] = ((2.0 - gamma) / rho) * eye_ell

        scale = 1.0 + max(np.abs(q).max(), np.abs(h).max(), np.abs(m_mat).max())
        factor_defect = np.abs(q - h @ m_mat).max()
        if factor_defect > 1e-12 * scale:
            raise MetricConsistencyError(
                f"Q does not factor as H M (defect {factor_defect:.3e})")
        n_from_identity = q.T + q - m_mat.T @ h @ m_mat
        n_defect = np.abs(n_from_identity - n_mat).max()
        if n_defect > 1e-10 * scale:
            raise MetricConsistencyError(
                f"the two constructions of N disagree (defect {n_defect:.3e})")

        g1_min = float(np.linalg.eigvalsh(g1)[0]) if first else 0.0
        g1_method = "dense"
        last_cond = float(np.linalg.eigvalsh(pm_dense + (rho / gamma) * gram_m)[0])
        last_method = "dense"
        h_min = float(np.linalg.eigvalsh(h)[0])
        n_min = float(np.linalg.eigvalsh(n_mat)[0])
        dense = {"g1": g1, "q": q, "m": m_mat, "h": h, "n": n_mat}
    else:
        g1_min, g1_method = first_phase_min_eig_estimate(
            problem, prox, rho, dense_cap=0)
        last_cond, last_method = last_condition_min_eig_estimate(
            problem, p_m, rho, gamma, dense_cap=0)

    strict_ok = g1_min > EIG_ZERO_TOL and last_cond > EIG_ZERO_TOL
    strict_reason = None
    if not strict_ok:
        pieces = []
        if g1_min <= EIG_ZERO_TOL:
            pieces.append(
                f"coupled first-phase metric min eigenvalue {g1_min:.6g} ({g1_method})")
        if last_cond <= EIG_ZERO_TOL:
            pieces.append(
                f"last-block condition min eigenvalue {last_cond:.6g} ({last_method})")
        strict_reason = ("configuration outside provable territory: "
                         + "; ".join(pieces))

    if dense_mode and strict_ok:
        # Positive definiteness of the first-phase metric propagates to H
        # and N for any relaxation factor in (0, 2); a violation here would
        # be an assembly bug, not a property of the input.
        if h_min <= 0 or n_min <= 0:
            raise MetricConsistencyError(
                f"H or N lost positive definiteness (h {h_min:.3e}, n {n_min:.3e}) "
                "despite a positive definite first-phase metric")

    return MetricMatrices(
        rho=rho, gamma=gamma, prox=prox, maps=maps,
        block_dims=problem.block_dims, constraint_dim=problem.constraint_dim,
        dense=dense,
        g1_min_eig=g1_min, g1_method=g1_method,
        last_condition_min_eig=last_cond, last_condition_method=last_method,
        p_m_min_eig=p_m_min, h_min_eig=h_min, n_min_eig=n_min,
        strict_ok=strict_ok, strict_reason=strict_reason,
        _problem=problem,
    )


def apply_metric(metrics: MetricMatrices, which: str, v: np.ndarray) -> np.ndarray:
    """Structural (matrix-free) product of one certificate matrix with ``v``.

    ``which`` is one of ``"q"``, ``"m"``, ``"h"``, ``"n"``; ``v`` is a packed
    full-space vector.
    """
    r, xm, y = metrics.split(v)
    problem = metrics._problem
    rho, gamma = metrics.rho, metrics.gamma
    a_m = metrics.maps[-1]
    p_m = metrics.prox[-1]
    g1_r = (first_phase_apply(problem, metrics.prox, rho, r)
            if r.size else r)
    if which == "h":
        am_x = a_m.apply(xm)
        out_m = (p_m.apply(xm) + (rho / gamma) * a_m.adjoint(am_x)
                 + ((1.0 - gamma) / gamma) * a_m.adjoint(y))
        out_y = ((1.0 - gamma) / gamma) * am_x + y / (gamma * rho)
    elif which == "n":
        out_m = p_m.apply(xm)
        out_y = ((2.0 - gamma) / rho) * y
    elif which == "q":
        am_x = a_m.apply(xm)
        out_m = rho * a_m.adjoint(am_x) + p_m.apply(xm) + (1.0 - gamma) * a_m.adjoint(y)
        out_y = -am_x + y / rho
    elif which == "m":
        am_x = a_m.apply(xm)
        return np.concatenate([r, xm, -rho * am_x + gamma * y])
    else:
        raise ValueError(f"unknown metric {which!r}")
    return np.concatenate([g1_r, out_m, out_y])


def weighted_norm_sq(metrics: MetricMatrices, v: np.ndarray, which: str) -> float:
    """Quadratic form ``v' W v`` for ``W`` in {H, N, G1, P_m}.

    ``v`` is always a packed full-space vector; the first-phase and
    last-block forms act on the corresponding slice of it.
    """
    which = which.lower()
    if which in ("h", "n"):
        return float(v @ apply_metric(metrics, which, v))
    r, xm, _ = metrics.split(v)
    if which == "g1":
        if not r.size:
            return 0.0
        return float(r @ first_phase_apply(metrics._problem, metrics.prox,
                                           metrics.rho, r))
    if which == "p_m":
        return metrics.prox[-1].quad(xm)
    raise ValueError(f"unknown metric {which!r}")


# ---------------------------------------------------------------------------
# Certificate checks.

@dataclass(frozen=True)
class CertificateReport:
    """Outcome of one certificate check over a trajectory.

    ``passed`` is ``None`` when the check was skipped because its
    preconditions do not hold for the configuration; ``skipped_reason``
    says why. ``worst_margin`` is the smallest slack-adjusted margin
    observed; negative means the inequality failed there.
    """

    check: str
    iterations_checked: int
    worst_margin: float | None
    passed: bool | None
    skipped_reason: str | None = None
    details: dict = field(default_factory=dict)

    @property
    def skipped(self) -> bool:
        return self.passed is None

    def to_dict(self) -> dict:
        out = {
            "check": self.check,
            "iterations_checked": self.iterations_checked,
            "worst_margin": self.worst_margin,
            "passed": self.passed,
            "skipped_reason": self.skipped_reason,
        }
        if self.details:
            out["details"] = self.details
        return out


def _skipped(check: str, reason: str) -> CertificateReport:
    return CertificateReport(check=check, iterations_checked=0,
                             worst_margin=None, passed=None,
                             skipped_reason=reason)


def _finish(check: str, margins: list[float], details: dict | None = None,
            iterations: int | None = None) -> CertificateReport:
    if not margins:
        # Nothing to compare: vacuously true, distinct from a gated skip.
        return CertificateReport(check=check, iterations_checked=0,
                                 worst_margin=None, passed=True,
                                 details={"vacuous": True})
    worst = min(margins)
    out_details = dict(details or {})
    out_details["worst_index"] = int(np.argmin(margins))
    return CertificateReport(
        check=check,
        iterations_checked=len(margins) if iterations is None else iterations,
        worst_margin=float(worst),
        passed=bool(worst >= 0.0),
        details=out_details,
    )


def _require_trajectory(trajectory) -> None:
    if trajectory is None or not getattr(trajectory, "points", None):
        raise ValueError("a recorded trajectory is required for this check")


def check_probe_feasible(problem: BlockProblem, point: PrimalDualPoint,
                         tol: float = 1e-8) -> None:
    """Raise ``ProbeFeasibilityError`` unless each block variable lies in its
    constraint set (up to a relative projection distance ``tol``)."""
    for i, (block, x) in enumerate(zip(problem.blocks, point.primal)):
        if block.projection is None:
            continue
        dist = float(np.linalg.norm(block.projection(x) - x))
        if dist > tol * (1.0 + float(np.linalg.norm(x))):
            raise ProbeFeasibilityError(
                f"probe violates the constraint set of block {i} "
                f"(projection distance {dist:.3e})")


def fejer_check(metrics: MetricMatrices, trajectory: "TrajectoryRecord",
                reference: PrimalDualPoint) -> CertificateReport:
    """Per-step contraction toward ``reference`` in the H-norm.

    Verifies, for every recorded step, that the squared H-distance to the
    reference point drops by at least the N-weighted squared distance
    between the iterate and its auxiliary companion. Provable only when the
    coupled first-phase metric is positive definite, so the check is
    skipped otherwise.
    """
    name = "fejer_contraction"
    _require_trajectory(trajectory)
    if not metrics.strict_ok:
        return _skipped(name, metrics.strict_reason)
    ref = _pack(reference)
    margins = []
    for k in range(trajectory.steps):
        wk = _pack(trajectory.points[k])
        wk1 = _pack(trajectory.points[k + 1])
        wbar = _pack(trajectory.auxiliaries[k])
        before = weighted_norm_sq(metrics, wk - ref, "h")
        decrease = weighted_norm_sq(metrics, wk - wbar, "n")
        after = weighted_norm_sq(metrics, wk1 - ref, "h")
        margins.append(before - decrease - after
                       + inequality_slack(before, decrease, after))
    return _finish(name, margins)


def nonergodic_monotonicity_check(metrics: MetricMatrices,
                                  trajectory: "TrajectoryRecord") -> CertificateReport:
    """The H-weighted step length never increases from one step to the next.

    Needs the strict matrix conditions and a positive semidefinite
    last-block proximal metric; skipped when either fails.
    """
    name = "step_monotonicity"
    _require_trajectory(trajectory)
    if not metrics.strict_ok:
        return _skipped(name, metrics.strict_reason)
    if metrics.p_m_min_eig < -EIG_ZERO_TOL:
        return _skipped(name, "last-block proximal metric is not positive semidefinite")
    steps = _h_step_lengths(metrics, trajectory)
    margins = [steps[k] - steps[k + 1] + inequality_slack(steps[k], steps[k + 1])
               for k in range(len(steps) - 1)]
    return _finish(name, margins)


def _h_step_lengths(metrics: MetricMatrices, trajectory: "TrajectoryRecord") -> list[float]:
    out = []
    for k in range(trajectory.steps):
        diff = _pack(trajectory.points[k]) - _pack(trajectory.points[k + 1])
        out.append(weighted_norm_sq(metrics, diff, "h"))
    return out


def nonergodic_rate_check(metrics: MetricMatrices, trajectory: "TrajectoryRecord",
                          reference: PrimalDualPoint) -> CertificateReport:
    """O(1/t) bound on the H-weighted squared step length.

    ``t * ||w^t - w^{t+1}||_H^2`` stays below a constant assembled from the
    initial H-distance to the reference (scaled by the relaxation-dependent
    rate constant) plus the first step's last-block proximal length.
    """
    name = "nonergodic_rate"
    _require_trajectory(trajectory)
    if not metrics.strict_ok:
        return _skipped(name, metrics.strict_reason)
    if metrics.p_m_min_eig < -EIG_ZERO_TOL:
        return _skipped(name, "last-block proximal metric is not positive semidefinite")
    if trajectory.steps < 1:
        return _finish(name, [])
    sigma = sigma_gamma(metrics.gamma)
    start_dist = weighted_norm_sq(metrics, _pack(trajectory.points[0]) - _pack(reference), "h")
    first_move = (trajectory.points[0].primal[-1] - trajectory.points[1].primal[-1])
    constant = start_dist / sigma + metrics.prox[-1].quad(first_move)
    steps = _h_step_lengths(metrics, trajectory)
    margins = []
    for t in range(1, len(steps)):
        lhs = t * steps[t]
        margins.append(constant - lhs + inequality_slack(constant, lhs))
    # the margin at offset j belongs to t = j + 1
    tightest = {"tightest_t": int(np.argmin(margins)) + 1} if margins else None
    return _finish(name, margins, details=tightest)


def ergodic_average(points: Sequence[PrimalDualPoint]) -> PrimalDualPoint:
    """Plain average of primal-dual points (used on auxiliary sequences)."""
    if not points:
        raise ValueError("cannot average zero points")
    primal = tuple(
        np.mean([p.primal[i] for p in points], axis=0)
        for i in range(len(points[0].primal))
    )
    dual = np.mean([p.dual for p in points], axis=0)
    return PrimalDualPoint(primal, dual)


def ergodic_gap_check(problem: BlockProblem, metrics: MetricMatrices,
                      average: PrimalDualPoint,
                      probes: Sequence[PrimalDualPoint],
                      start: PrimalDualPoint, t: int) -> CertificateReport:
    """O(1/t) bound on the mixed objective-plus-linear gap of the ergodic
    average, tested against feasible probe points.

    ``average`` is the mean of the ``t + 1`` auxiliary points produced up to
    step ``t`` and ``start`` is the point the run began from. For every
    probe ``w`` the gap
    ``objective(average) - objective(w) + (average - w)' F(w)`` must stay
    below ``||w - start||_H^2 / (2 (t + 1))``. Probes must lie in the
    feasible set; an infeasible probe is an error, not a failure.
    """
    name = "ergodic_gap"
    if not metrics.strict_ok:
        return _skipped(name, metrics.strict_reason)
    if t < 0:
        raise ValueError("t must be a nonnegative step index")
    avg_packed = _pack(average)
    start_packed = _pack(start)
    avg_objective = evaluate_objective(problem, average)
    margins = []
    for probe in probes:
        check_probe_feasible(problem, probe)
        value = vi_operator(problem, probe)
        gap = (avg_objective - evaluate_objective(problem, probe)
               + float((avg_packed - _pack(probe)) @ pack_vi_value(value)))
        bound = weighted_norm_sq(metrics, _pack(probe) - start_packed, "h") / (2.0 * (t + 1))
        margins.append(bound - gap + inequality_slack(bound, gap))
    return _finish(name, margins, details={"num_probes": len(probes)},
                   iterations=t + 1)


def cross_term_check(trajectory: "TrajectoryRecord", p_m: SymmetricOperator,
                     a_m: LinearMap) -> CertificateReport:
    """Lower bound on the cross term between successive last-block moves and
    multiplier moves.

    ``(x_m^k - x_m^{k+1})' A_m' (y^k - y^{k+1})`` dominates the telescoping
    difference of last-block proximal lengths. The derivation uses the
    last-block optimality conditions of two consecutive steps and needs the
    proximal metric to be positive semidefinite.
    """
    name = "cross_term"
    _require_trajectory(trajectory)
    if p_m.min_eigenvalue() < -EIG_ZERO_TOL:
        return _skipped(name, "last-block proximal metric is not positive semidefinite")
    margins = []
    for k in range(1, trajectory.steps):
        xm_prev = trajectory.points[k - 1].primal[-1]
        xm_now = trajectory.points[k].primal[-1]
        xm_next = trajectory.points[k + 1].primal[-1]
        dy = trajectory.points[k].dual - trajectory.points[k + 1].dual
        dx = xm_now - xm_next
        lhs = float(dx @ a_m.adjoint(dy))
        gain = 0.5 * p_m.quad(dx)
        loss = 0.5 * p_m.quad(xm_prev - xm_now)
        margins.append(lhs - gain + loss + inequality_slack(lhs, gain, loss))
    return _finish(name, margins)


def update_recurrence_check(metrics: MetricMatrices,
                            trajectory: "TrajectoryRecord") -> CertificateReport:
    """Exact one-step recurrence: ``w^{k+1} = w^k - M (w^k - w_bar^k)``.

    An identity, not an inequality; margins are the slack minus the
    relative residual, so roundoff-sized residuals pass.
    """
    name = "update_recurrence"
    _require_trajectory(trajectory)
    margins = []
    for k in range(trajectory.steps):
        wk = _pack(trajectory.points[k])
        wk1 = _pack(trajectory.points[k + 1])
        wbar = _pack(trajectory.auxiliaries[k])
        predicted = wk - apply_metric(metrics, "m", wk - wbar)
        residual = float(np.linalg.norm(predicted - wk1))
        scale = 1.0 + max(float(np.linalg.norm(wk)), float(np.linalg.norm(wk1)))
        margins.append(SLACK_COEFF - residual / scale)
    return _finish(name, margins)


def _step_inequality_terms(problem: BlockProblem, metrics: MetricMatrices,
                           state: "IterationState",
                           probe: PrimalDualPoint) -> tuple[float, float]:
    if state.previous is None or state.auxiliary is None:
        raise ValueError("state does not record a completed step")
    check_probe_feasible(problem, probe)
    wbar = state.auxiliary
    diff = _pack(probe) - _pack(wbar)
    value = vi_operator(problem, wbar)
    lhs = (evaluate_objective(problem, probe) - evaluate_objective(problem, wbar)
           + float(diff @ pack_vi_value(value)))
    rhs = float(diff @ apply_metric(metrics, "q", _pack(state.previous) - _pack(wbar)))
    return lhs, rhs


def step_inequality_probe(problem: BlockProblem, metrics: MetricMatrices,
                          state: "IterationState",
                          probe: PrimalDualPoint) -> float:
    """Margin of the one-step mixed variational inequality at a probe point.

    Returns ``objective(u) - objective(u_bar) + (w - w_bar)' F(w_bar)
    - (w - w_bar)' Q (w^k - w_bar)`` for the step recorded in ``state``;
    the inequality says this is nonnegative for every feasible ``w``,
    with no positivity preconditions on the metrics.
    """
    lhs, rhs = _step_inequality_terms(problem, metrics, state, probe)
    return lhs - rhs


def step_inequality_check(problem: BlockProblem, metrics: MetricMatrices,
                          trajectory: "TrajectoryRecord",
                          probes: Sequence[PrimalDualPoint],
                          max_samples: int = 25) -> CertificateReport:
    """Evaluate the one-step mixed inequality on sampled iterations.

    At most ``max_samples`` evenly spaced steps are probed (the inequality
    is exact per step, so sampling loses nothing structurally); each margin
    gets the usual scale-aware slack.
    """
    from .solver import IterationState

    name = "step_inequality"
    _require_trajectory(trajectory)
    if trajectory.steps < 1:
        return _finish(name, [])
    count = min(max_samples, trajectory.steps)
    sample = np.unique(np.linspace(0, trajectory.steps - 1, count).astype(int))
    margins = []
    for k in sample:
        state = IterationState(
            k=int(k) + 1,
            current=trajectory.points[k + 1],
            auxiliary=trajectory.auxiliaries[k],
            previous=trajectory.points[k],
            first_step_norms=None,
        )
        for probe in probes:
            lhs, rhs = _step_inequality_terms(problem, metrics, state, probe)
            margins.append(lhs - rhs + inequality_slack(lhs, rhs))
    details = {"sampled_iterations": [int(k) for k in sample],
               "num_probes": len(probes)}
    return _finish(name, margins, details=details)
