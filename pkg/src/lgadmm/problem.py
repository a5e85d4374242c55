"""Problem model for linearly-constrained separable convex programs.

A problem is a list of blocks, each owning a convex objective piece, a
constraint map, and a subproblem oracle, together with the right-hand side
of the coupling constraint ``sum_i A_i x_i = b``. The equivalent variational
inequality (primal-dual pair ``w = (x_1..x_m, y)``, affine skew operator
``F``) is what the convergence certificates are phrased in, so its pieces
live here too.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .operators import (
    LinearMap,
    LinearizedMetric,
    SymmetricOperator,
    gram_spectral_norm,
)

__all__ = [
    "BlockProblemError",
    "DimensionMismatchError",
    "SpectralThresholdError",
    "BlockSpec",
    "BlockProblem",
    "PrimalDualPoint",
    "ViOperatorValue",
    "check_point",
    "pack_point",
    "unpack_point",
    "pack_vi_value",
    "point_difference",
    "evaluate_objective",
    "constraint_residual",
    "primal_feasibility",
    "vi_operator",
    "vi_monotone_gap",
    "make_linearized_metric",
    "zeros_point",
    "feasible_probe",
]

# Oracle signature: (target, center, rho, metric) -> minimiser of
#   theta_i(x) + (rho/2) ||A_i x - target||^2 + (1/2) ||x - center||_metric^2
SubproblemOracle = Callable[[np.ndarray, np.ndarray, float, SymmetricOperator], np.ndarray]


class BlockProblemError(Exception):
    """Base class for problem-model errors."""


class DimensionMismatchError(BlockProblemError):
    """A vector or map does not match the declared block dimensions."""

    def __init__(self, message: str, block: int | None = None):
        super().__init__(message)
        self.block = block


class SpectralThresholdError(BlockProblemError):
    """A linearization step size is at or below the admissible threshold."""

    def __init__(self, message: str, threshold: float):
        super().__init__(message)
        self.threshold = threshold


@dataclass(frozen=True)
class BlockSpec:
    """One block: objective piece, constraint map, and subproblem oracle.

    Parameters
    ----------
    dim : int
        Dimension of the block variable (flattened).
    linear_map : LinearMap
        The block's column ``A_i`` of the coupling constraint.
    subproblem_oracle : callable
        Exact minimiser of the regularised block subproblem; see
        ``SubproblemOracle`` for the signature.
    objective_oracle : callable
        Evaluates the block's convex objective piece.
    projection : callable, optional
        Projection onto the block's constraint set, used to generate and to
        validate feasible probe points. ``None`` means the whole space.
    """

    dim: int
    linear_map: LinearMap
    subproblem_oracle: SubproblemOracle
    objective_oracle: Callable[[np.ndarray], float]
    projection: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.dim <= 0:
            raise DimensionMismatchError("block dimension must be positive")
        if self.linear_map.in_dim != self.dim:
            raise DimensionMismatchError(
                f"linear map takes vectors of size {self.linear_map.in_dim}, "
                f"block has dimension {self.dim}"
            )


@dataclass(frozen=True)
class BlockProblem:
    """A separable convex program with a single linear coupling constraint."""

    blocks: tuple[BlockSpec, ...]
    rhs: np.ndarray
    constraint_dim: int

    def __post_init__(self):
        if len(self.blocks) < 2:
            raise DimensionMismatchError("at least two blocks are required")
        rhs = np.asarray(self.rhs, dtype=float)
        object.__setattr__(self, "rhs", rhs)
        if rhs.ndim != 1 or rhs.size != self.constraint_dim:
            raise DimensionMismatchError(
                f"rhs has size {rhs.size}, constraint dimension is {self.constraint_dim}"
            )
        for i, block in enumerate(self.blocks):
            if block.linear_map.out_dim != self.constraint_dim:
                raise DimensionMismatchError(
                    f"block {i} maps into dimension {block.linear_map.out_dim}, "
                    f"constraint dimension is {self.constraint_dim}",
                    block=i,
                )

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    @property
    def block_dims(self) -> tuple[int, ...]:
        return tuple(block.dim for block in self.blocks)

    @property
    def total_primal_dim(self) -> int:
        return sum(self.block_dims)

    @property
    def total_dim(self) -> int:
        return self.total_primal_dim + self.constraint_dim


@dataclass(frozen=True)
class PrimalDualPoint:
    """Primal block variables together with the constraint multiplier."""

    primal: tuple[np.ndarray, ...]
    dual: np.ndarray

    def copy(self) -> "PrimalDualPoint":
        return PrimalDualPoint(tuple(x.copy() for x in self.primal), self.dual.copy())


@dataclass(frozen=True)
class ViOperatorValue:
    """Value of the affine skew operator of the variational inequality.

    Block parts are ``-A_i' y``; the constraint part is ``sum_i A_i x_i - b``.
    """

    block_parts: tuple[np.ndarray, ...]
    constraint_part: np.ndarray


def check_point(problem: BlockProblem, point: PrimalDualPoint) -> None:
    """Raise ``DimensionMismatchError`` if ``point`` does not fit ``problem``."""
    if len(point.primal) != problem.num_blocks:
        raise DimensionMismatchError(
            f"point has {len(point.primal)} primal blocks, problem has {problem.num_blocks}"
        )
    for i, (x, block) in enumerate(zip(point.primal, problem.blocks)):
        if x.shape != (block.dim,):
            raise DimensionMismatchError(
                f"block {i} variable has shape {x.shape}, expected ({block.dim},)",
                block=i,
            )
    if point.dual.shape != (problem.constraint_dim,):
        raise DimensionMismatchError(
            f"multiplier has shape {point.dual.shape}, expected ({problem.constraint_dim},)"
        )


def pack_point(problem: BlockProblem, point: PrimalDualPoint) -> np.ndarray:
    """Concatenate ``(x_1, ..., x_m, y)`` into one vector."""
    return np.concatenate([*point.primal, point.dual])


def unpack_point(problem: BlockProblem, vec: np.ndarray) -> PrimalDualPoint:
    """Inverse of :func:`pack_point`."""
    if vec.shape != (problem.total_dim,):
        raise DimensionMismatchError(
            f"vector has shape {vec.shape}, expected ({problem.total_dim},)"
        )
    primal = []
    offset = 0
    for dim in problem.block_dims:
        primal.append(vec[offset : offset + dim].copy())
        offset += dim
    return PrimalDualPoint(tuple(primal), vec[offset:].copy())


def pack_vi_value(value: ViOperatorValue) -> np.ndarray:
    return np.concatenate([*value.block_parts, value.constraint_part])


def point_difference(a: PrimalDualPoint, b: PrimalDualPoint) -> PrimalDualPoint:
    return PrimalDualPoint(
        tuple(xa - xb for xa, xb in zip(a.primal, b.primal)),
        a.dual - b.dual,
    )


def evaluate_objective(problem: BlockProblem, point: PrimalDualPoint) -> float:
    """Separable objective value ``sum_i theta_i(x_i)``."""
    check_point(problem, point)
    return float(sum(block.objective_oracle(x)
                     for block, x in zip(problem.blocks, point.primal)))


def constraint_residual(problem: BlockProblem, point: PrimalDualPoint) -> np.ndarray:
    """The coupling-constraint residual ``sum_i A_i x_i - b``."""
    residual = -problem.rhs
    for block, x in zip(problem.blocks, point.primal):
        residual = residual + block.linear_map.apply(x)
    return residual


def primal_feasibility(problem: BlockProblem, point: PrimalDualPoint) -> float:
    """Euclidean norm of the coupling-constraint residual."""
    check_point(problem, point)
    return float(np.linalg.norm(constraint_residual(problem, point)))


def vi_operator(problem: BlockProblem, point: PrimalDualPoint) -> ViOperatorValue:
    """Evaluate the variational-inequality operator at ``point``."""
    check_point(problem, point)
    parts = tuple(-block.linear_map.adjoint(point.dual) for block in problem.blocks)
    return ViOperatorValue(parts, constraint_residual(problem, point))


def vi_monotone_gap(problem: BlockProblem, w1: PrimalDualPoint,
                    w2: PrimalDualPoint) -> float:
    """``(w1 - w2)' (F(w1) - F(w2))``; identically zero for the affine skew ``F``."""
    f1 = vi_operator(problem, w1)
    f2 = vi_operator(problem, w2)
    diff = pack_point(problem, w1) - pack_point(problem, w2)
    return float(diff @ (pack_vi_value(f1) - pack_vi_value(f2)))


def make_linearized_metric(block: BlockSpec, rho: float, tau: float,
                           rel_tol: float = 1e-8) -> SymmetricOperator:
    """Proximal metric ``tau I - rho A_i'A_i`` that linearizes the penalty term.

    With this metric the quadratic coupling term cancels from the block
    subproblem, leaving a plain proximal step of ``theta_i``. Requires
    ``tau > rho * ||A_i'A_i||``, checked against a power-iteration estimate.

    Raises
    ------
    SpectralThresholdError
        If ``tau`` does not exceed the estimated threshold. The estimate is
        attached to the exception as ``threshold``.
    """
    gram_norm = gram_spectral_norm(block.linear_map, rel_tol=rel_tol)
    threshold = rho * gram_norm
    if not tau > threshold:
        raise SpectralThresholdError(
            f"tau = {tau} must exceed rho * ||A'A|| (estimated {threshold})",
            threshold=threshold,
        )
    return LinearizedMetric(block.linear_map, rho, tau, gram_norm)


def zeros_point(problem: BlockProblem) -> PrimalDualPoint:
    """The origin of the primal-dual space, a convenient default start."""
    return PrimalDualPoint(
        tuple(np.zeros(dim) for dim in problem.block_dims),
        np.zeros(problem.constraint_dim),
    )


def feasible_probe(problem: BlockProblem, rng: np.random.Generator,
                   scale: float = 1.0) -> PrimalDualPoint:
    """Random primal-dual point with each block projected onto its set."""
    primal = []
    for block in problem.blocks:
        x = scale * rng.standard_normal(block.dim)
        if block.projection is not None:
            x = block.projection(x)
        primal.append(x)
    dual = scale * rng.standard_normal(problem.constraint_dim)
    return PrimalDualPoint(tuple(primal), dual)
