"""Dense SPD linear algebra and Gaussian sampling.

Everything here is float64. Precision matrices are factored as
``M = L L^T``; Gaussian draws with covariance ``scale**2 * M^{-1}`` solve
against ``L^T`` instead of ever forming the inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, NoConvergence, NotPositiveDefinite

SYMMETRY_RTOL = 1e-12


@dataclass(frozen=True)
class CholeskyFactor:
    lower: np.ndarray

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.lower @ self.lower.T


def check_symmetric(m: np.ndarray) -> None:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    tol = SYMMETRY_RTOL * np.maximum(1.0, np.abs(m))
    if np.any(np.abs(m - m.T) > tol):
        raise ValueError("matrix is not symmetric")


def cholesky_factor(m) -> CholeskyFactor:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Raises NotPositiveDefinite when a pivot is not strictly positive.
    """
    m = np.asarray(m, dtype=float)
    check_symmetric(m)
    try:
        lower = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    if not np.all(np.diag(lower) > 0.0):
        raise NotPositiveDefinite("non-positive pivot")
    return CholeskyFactor(lower)


def batched_cholesky(stack: np.ndarray) -> np.ndarray:
    """Lower factors of a stack ``(..., d, d)`` of SPD matrices."""
    try:
        lower = np.linalg.cholesky(stack)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    if not np.all(np.diagonal(lower, axis1=-2, axis2=-1) > 0.0):
        raise NotPositiveDefinite("non-positive pivot")
    return lower


def solve_spd(factor: CholeskyFactor, rhs) -> np.ndarray:
    """Solve ``M x = rhs`` given ``M = L L^T``. ``rhs`` may be a vector or a matrix of columns."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != factor.dim:
        raise DimensionMismatch(f"rhs has length {rhs.shape[0]}, factor has dim {factor.dim}")
    y = solve_triangular(factor.lower, rhs, lower=True, check_finite=False)
    return solve_triangular(factor.lower.T, y, lower=False, check_finite=False)


def sample_gaussian(mean, factor: CholeskyFactor, scale: float, rng: np.random.Generator) -> np.ndarray:
    """Draw from ``N(mean, scale**2 * M^{-1})`` where ``M = L L^T`` is a precision matrix."""
    mean = np.asarray(mean, dtype=float)
    if mean.shape != (factor.dim,):
        raise DimensionMismatch(f"mean has shape {mean.shape}, factor has dim {factor.dim}")
    if scale < 0:
        raise ValueError("scale must be nonnegative")
    z = rng.standard_normal(factor.dim)
    if scale == 0:
        return mean.copy()
    return mean + scale * solve_triangular(factor.lower.T, z, lower=False, check_finite=False)


def max_eigenvalue(m, tol: float = 1e-8, max_iter: int = 10_000) -> float:
    """Largest eigenvalue of an SPD matrix by power iteration.

    Starts from the normalized all-ones vector and stops once the Rayleigh
    quotient changes by less than ``tol`` relative to itself.
    """
    m = np.asarray(m, dtype=float)
    check_symmetric(m)
    v = np.ones(m.shape[0]) / np.sqrt(m.shape[0])
    estimate = float(v @ m @ v)
    for _ in range(max_iter):
        mv = m @ v
        norm = np.linalg.norm(mv)
        if norm == 0.0:
            raise NotPositiveDefinite("power iteration hit the null space")
        v = mv / norm
        new = float(v @ m @ v)
        if abs(new - estimate) <= tol * abs(new):
            return new
        estimate = new
    raise NoConvergence(f"power iteration did not reach tol={tol} in {max_iter} iterations")
