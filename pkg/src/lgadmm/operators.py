"""Linear maps with adjoints, and symmetric operators for quadratic forms.

The solver only ever needs forward and adjoint products, so structured maps
(stacked signed identities, for instance) never materialise a matrix. Dense
realisations exist for small-dimension certification work.
"""

from __future__ import annotations

import abc
from typing import Callable

import numpy as np

__all__ = [
    "LinearMap",
    "DenseMap",
    "BlockSignMap",
    "SymmetricOperator",
    "ScaledIdentity",
    "DenseSymmetric",
    "LinearizedMetric",
    "as_metric",
    "gram_spectral_norm",
    "gram_min_eigenvalue",
    "adjoint_mismatch",
]

POWER_TOL = 1e-8
POWER_MAX_ITER = 10_000


class LinearMap(abc.ABC):
    """Linear operator ``x -> A x`` with an explicit adjoint."""

    in_dim: int
    out_dim: int

    @abc.abstractmethod
    def apply(self, x: np.ndarray) -> np.ndarray:
        """Return ``A x``."""

    @abc.abstractmethod
    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """Return ``A' y``."""

    def dense(self) -> np.ndarray:
        """Materialise the matrix column by column. Small dimensions only."""
        eye = np.eye(self.in_dim)
        return np.column_stack([self.apply(eye[:, j]) for j in range(self.in_dim)])


class DenseMap(LinearMap):
    """Linear map backed by an explicit 2-d array."""

    def __init__(self, matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2:
            raise ValueError("matrix must be 2-dimensional")
        self._matrix = matrix
        self.out_dim, self.in_dim = matrix.shape

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self._matrix @ x

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        return self._matrix.T @ y

    def dense(self) -> np.ndarray:
        return self._matrix.copy()


class BlockSignMap(LinearMap):
    """Vertical stack of signed identities acting on a block of size ``block_dim``.

    ``signs = (1, -1, 0)`` represents the map ``x -> (x, -x, 0)``. Forward and
    adjoint products are O(len(signs) * block_dim); nothing is materialised.
    """

    def __init__(self, signs: tuple[int, ...], block_dim: int):
        if not signs:
            raise ValueError("signs must be non-empty")
        if any(s not in (-1, 0, 1) for s in signs):
            raise ValueError("signs must be -1, 0 or +1")
        self.signs = tuple(int(s) for s in signs)
        self.in_dim = int(block_dim)
        self.out_dim = len(self.signs) * self.in_dim

    def apply(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(self.out_dim)
        d = self.in_dim
        for slot, s in enumerate(self.signs):
            if s:
                out[slot * d : (slot + 1) * d] = s * x
        return out

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        out = np.zeros(self.in_dim)
        d = self.in_dim
        for slot, s in enumerate(self.signs):
            if s:
                out += s * y[slot * d : (slot + 1) * d]
        return out

    def dense(self) -> np.ndarray:
        col = np.array(self.signs, dtype=float).reshape(-1, 1)
        return np.kron(col, np.eye(self.in_dim))


def _power_method(
    matvec: Callable[[np.ndarray], np.ndarray],
    dim: int,
    rel_tol: float = POWER_TOL,
    max_iter: int = POWER_MAX_ITER,
    seed: int = 0,
) -> float:
    """Dominant eigenvalue magnitude of a symmetric operator, by power iteration.

    Deterministic for a fixed seed. Stops when successive Rayleigh quotients
    agree to ``rel_tol`` relatively, or after ``max_iter`` sweeps (the current
    estimate is then returned, so the result is a floor for the true value).
    """
    if dim == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(max_iter):
        w = matvec(v)
        norm_w = float(np.linalg.norm(w))
        if norm_w <= np.finfo(float).tiny:
            return 0.0
        fresh = float(v @ w)
        v = w / norm_w
        if abs(fresh - estimate) <= rel_tol * max(abs(fresh), np.finfo(float).tiny):
            return abs(fresh)
        estimate = fresh
    return abs(estimate)


def gram_spectral_norm(amap: LinearMap, rel_tol: float = POWER_TOL,
                       max_iter: int = POWER_MAX_ITER, seed: int = 0) -> float:
    """Spectral norm of ``A'A`` (the squared operator norm of ``A``)."""
    return _power_method(lambda v: amap.adjoint(amap.apply(v)), amap.in_dim,
                         rel_tol, max_iter, seed)


def gram_min_eigenvalue(amap: LinearMap, rel_tol: float = POWER_TOL,
                        max_iter: int = POWER_MAX_ITER, seed: int = 0) -> float:
    """Smallest eigenvalue of ``A'A``, via a spectral shift of the power method."""
    shift = gram_spectral_norm(amap, rel_tol, max_iter, seed) * (1.0 + 1e-12)
    if shift == 0.0:
        return 0.0
    top = _power_method(
        lambda v: shift * v - amap.adjoint(amap.apply(v)),
        amap.in_dim, rel_tol, max_iter, seed,
    )
    return max(shift - top, 0.0)


def adjoint_mismatch(amap: LinearMap, trials: int = 10, seed: int = 0) -> float:
    """Largest relative defect of ``<Ax, y> - <x, A'y>`` over random probes."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(amap.in_dim)
        y = rng.standard_normal(amap.out_dim)
        lhs = float(amap.apply(x) @ y)
        rhs = float(x @ amap.adjoint(y))
        worst = max(worst, abs(lhs - rhs) / (1.0 + max(abs(lhs), abs(rhs))))
    return worst


class SymmetricOperator(abc.ABC):
    """Symmetric operator used as a quadratic-form weight."""

    dim: int

    @abc.abstractmethod
    def apply(self, x: np.ndarray) -> np.ndarray:
        """Return ``P x``."""

    def quad(self, x: np.ndarray) -> float:
        """Return ``x' P x``."""
        return float(x @ self.apply(x))

    @abc.abstractmethod
    def dense(self) -> np.ndarray:
        """Materialise the matrix. Small dimensions only."""

    @abc.abstractmethod
    def min_eigenvalue(self) -> float:
        """Smallest eigenvalue (exact or a certified estimate)."""


class ScaledIdentity(SymmetricOperator):
    """``P = scale * I``. The zero metric is ``scale = 0``."""

    def __init__(self, dim: int, scale: float):
        self.dim = int(dim)
        self.scale = float(scale)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.scale * x

    def quad(self, x: np.ndarray) -> float:
        return self.scale * float(x @ x)

    def dense(self) -> np.ndarray:
        return self.scale * np.eye(self.dim)

    def min_eigenvalue(self) -> float:
        return self.scale


class DenseSymmetric(SymmetricOperator):
    """Symmetric operator backed by an explicit array, validated on input."""

    def __init__(self, matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("matrix must be square")
        scale = 1.0 + float(np.abs(matrix).max(initial=0.0))
        if np.abs(matrix - matrix.T).max(initial=0.0) > 1e-10 * scale:
            raise ValueError("matrix is not symmetric")
        self._matrix = 0.5 * (matrix + matrix.T)
        self.dim = matrix.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self._matrix @ x

    def dense(self) -> np.ndarray:
        return self._matrix.copy()

    def min_eigenvalue(self) -> float:
        if self.dim == 0:
            return 0.0
        return float(np.linalg.eigvalsh(self._matrix)[0])


class LinearizedMetric(SymmetricOperator):
    """``P = tau * I - rho * A'A``, the metric that linearizes a coupling term.

    ``gram_norm`` is the (estimated) spectral norm of ``A'A``; the smallest
    eigenvalue ``tau - rho * gram_norm`` is then known without assembly.
    """

    def __init__(self, amap: LinearMap, rho: float, tau: float, gram_norm: float):
        self.amap = amap
        self.rho = float(rho)
        self.tau = float(tau)
        self.gram_norm = float(gram_norm)
        self.dim = amap.in_dim

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.tau * x - self.rho * self.amap.adjoint(self.amap.apply(x))

    def dense(self) -> np.ndarray:
        d = self.amap.dense()
        return self.tau * np.eye(self.dim) - self.rho * (d.T @ d)

    def min_eigenvalue(self) -> float:
        return self.tau - self.rho * self.gram_norm


def as_metric(value: SymmetricOperator | float | np.ndarray, dim: int) -> SymmetricOperator:
    """Coerce a scalar, array or operator into a symmetric operator of size ``dim``."""
    if isinstance(value, SymmetricOperator):
        if value.dim != dim:
            raise ValueError(f"operator has dimension {value.dim}, expected {dim}")
        return value
    if np.isscalar(value):
        return ScaledIdentity(dim, float(value))
    op = DenseSymmetric(np.asarray(value, dtype=float))
    if op.dim != dim:
        raise ValueError(f"matrix has dimension {op.dim}, expected {dim}")
    return op
