"""Pure-numpy reference kernels.

Every function here has a twin with the same signature in ``_kernels_numba``.
In-place kernels mutate their first argument.
"""

from __future__ import annotations

import numpy as np


def rank1_update(A: np.ndarray, x: np.ndarray) -> None:
    A += np.outer(x, x)
    A[...] = (A + A.T) / 2.0


def sherman_morrison_update(A_inv: np.ndarray, x: np.ndarray, tol: float) -> float:
    """Apply ``(A + x x^T)^-1`` to ``A_inv`` in place; return the denominator.

    When the denominator is not above ``tol`` the matrix is left untouched
    and the caller raises.
    """
    u = A_inv @ x
    denom = 1.0 + float(x @ u)
    if not denom > tol:
        return denom
    A_inv -= np.outer(u, u) / denom
    A_inv[...] = (A_inv + A_inv.T) / 2.0
    return denom


def ucb_terms(A_inv: np.ndarray, b: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-arm ``(theta^T x, x^T A^-1 x)`` for stacked ``A_inv`` (K,d,d) and ``b`` (K,d)."""
    u = A_inv @ x
    means = np.einsum("kd,kd->k", b, u)
    variances = u @ x
    return means, variances


def sq_distances(points: np.ndarray, x: np.ndarray) -> np.ndarray:
    diff = points - x
    return np.einsum("nd,nd->n", diff, diff)


def diag_gauss_loglik(means: np.ndarray, variances: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Diagonal Gaussian log density of ``x`` under each row of ``means``/``variances``."""
    diff = x - means
    return -0.5 * np.sum(np.log(2.0 * np.pi * variances) + diff * diff / variances, axis=1)
