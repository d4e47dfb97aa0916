"""Dense kernels for per-arm ridge state.

The functions here are pure: they validate their inputs and return new
arrays. The agent calls the in-place twins in :mod:`berlinucb.kernels`
directly on its own storage.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from . import kernels
from .errors import InvalidArgumentError, NumericalDegeneracyError

SM_DENOM_TOL = 1e-12
QUAD_NEG_TOL = 1e-9


def as_vector(x, d: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a finite float64 vector, optionally of length ``d``."""
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise InvalidArgumentError(f"expected a 1-d vector, got shape {v.shape}")
    if d is not None and v.shape[0] != d:
        raise InvalidArgumentError(f"dimension mismatch: expected {d}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise InvalidArgumentError("vector has non-finite entries")
    return v


def as_square(M) -> np.ndarray:
    m = np.array(M, dtype=np.float64, order="C")
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidArgumentError("matrix has non-finite entries")
    return m


def symmetrize(M: np.ndarray) -> np.ndarray:
    return (M + M.T) / 2.0


def rank1_add(A, x) -> np.ndarray:
    """Return ``A + x x^T``, re-symmetrized."""
    out = as_square(A)
    v = as_vector(x, out.shape[0])
    kernels.rank1_update(out, v)
    return out


def sherman_morrison(A_inv, x) -> np.ndarray:
    """Return ``(A + x x^T)^-1`` given ``A_inv = A^-1``.

    Raises NumericalDegeneracyError when ``1 + x^T A_inv x`` is not above
    ``SM_DENOM_TOL``; that cannot happen for SPD input.
    """
    out = as_square(A_inv)
    v = as_vector(x, out.shape[0])
    denom = kernels.sherman_morrison_update(out, v, SM_DENOM_TOL)
    if not denom > SM_DENOM_TOL:
        raise NumericalDegeneracyError(f"Sherman-Morrison denominator {denom!r} <= {SM_DENOM_TOL}")
    return out


def clamp_quad(q: float) -> float:
    if q < 0.0:
        if q < -QUAD_NEG_TOL:
            raise NumericalDegeneracyError(f"quadratic form is negative: {q!r}")
        return 0.0
    return q


def quad_form(A_inv, x) -> float:
    """``x^T A_inv x`` clamped at zero; tiny negative round-off is rounded up."""
    m = as_square(A_inv)
    v = as_vector(x, m.shape[0])
    return clamp_quad(float(v @ (m @ v)))


def solve_theta(A_inv, b) -> np.ndarray:
    m = as_square(A_inv)
    v = as_vector(b, m.shape[0])
    return m @ v


def cholesky_inverse(A) -> np.ndarray:
    """Inverse of an SPD matrix by direct Cholesky factorization."""
    m = as_square(A)
    try:
        factor = scipy.linalg.cho_factor(m, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracyError(f"Cholesky factorization failed: {exc}") from exc
    inv = scipy.linalg.cho_solve(factor, np.eye(m.shape[0]), check_finite=False)
    return symmetrize(inv)
