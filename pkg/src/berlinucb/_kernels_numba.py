"""Numba-compiled kernels; same contracts as ``_kernels_numpy``.

Contexts from image data are mostly zeros, so the matrix-vector loops only
visit the nonzero coordinates of ``x``.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _nonzero(x):
    idx = np.empty(x.shape[0], dtype=np.int64)
    n = 0
    for i in range(x.shape[0]):
        if x[i] != 0.0:
            idx[n] = i
            n += 1
    return idx[:n]


@njit(cache=True)
def _symmetrize(M):
    d = M.shape[0]
    for i in range(d):
        for j in range(i + 1, d):
            v = 0.5 * (M[i, j] + M[j, i])
            M[i, j] = v
            M[j, i] = v


@njit(cache=True)
def rank1_update(A, x):
    nz = _nonzero(x)
    for p in range(nz.shape[0]):
        i = nz[p]
        xi = x[i]
        for q in range(nz.shape[0]):
            j = nz[q]
            A[i, j] += xi * x[j]
    _symmetrize(A)


@njit(cache=True)
def sherman_morrison_update(A_inv, x, tol):
    d = x.shape[0]
    nz = _nonzero(x)
    u = np.zeros(d)
    for i in range(d):
        s = 0.0
        for q in range(nz.shape[0]):
            j = nz[q]
            s += A_inv[i, j] * x[j]
        u[i] = s
    quad = 0.0
    for q in range(nz.shape[0]):
        j = nz[q]
        quad += x[j] * u[j]
    denom = 1.0 + quad
    if not denom > tol:
        return denom
    for i in range(d):
        ui = u[i]
        if ui == 0.0:
            continue
        for j in range(d):
            A_inv[i, j] -= ui * u[j] / denom
    _symmetrize(A_inv)
    return denom


@njit(cache=True)
def ucb_terms(A_inv, b, x):
    K = A_inv.shape[0]
    d = x.shape[0]
    nz = _nonzero(x)
    means = np.empty(K)
    variances = np.empty(K)
    for a in range(K):
        mean = 0.0
        var = 0.0
        for i in range(d):
            s = 0.0
            for q in range(nz.shape[0]):
                j = nz[q]
                s += A_inv[a, i, j] * x[j]
            mean += b[a, i] * s
            var += x[i] * s
        means[a] = mean
        variances[a] = var
    return means, variances


@njit(cache=True)
def sq_distances(points, x):
    n, d = points.shape
    out = np.empty(n)
    for k in range(n):
        s = 0.0
        for i in range(d):
            t = points[k, i] - x[i]
            s += t * t
        out[k] = s
    return out


@njit(cache=True)
def diag_gauss_loglik(means, variances, x):
    K, d = means.shape
    out = np.empty(K)
    log2pi = np.log(2.0 * np.pi)
    for a in range(K):
        s = 0.0
        for i in range(d):
            t = x[i] - means[a, i]
            v = variances[a, i]
            s += log2pi + np.log(v) + t * t / v
        out[a] = -0.5 * s
    return out
