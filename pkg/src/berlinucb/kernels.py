"""Backend selection for the hot numeric kernels.

The numba backend is used when numba imports cleanly. Setting the
environment variable ``BERLINUCB_NUMBA=0`` forces the pure-numpy path.
Both backends implement identical contracts; results agree to round-off,
not bitwise, so compare runs only within one backend.
"""

from __future__ import annotations

import os

from . import _kernels_numpy

_disabled = os.environ.get("BERLINUCB_NUMBA", "1").strip().lower() in {"0", "false", "no", "off"}

if _disabled:
    _impl = _kernels_numpy
    BACKEND = "numpy"
else:
    try:
        from . import _kernels_numba as _impl  # noqa: F811
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _impl = _kernels_numpy
        BACKEND = "numpy"

rank1_update = _impl.rank1_update
sherman_morrison_update = _impl.sherman_morrison_update
ucb_terms = _impl.ucb_terms
sq_distances = _impl.sq_distances
diag_gauss_loglik = _impl.diag_gauss_loglik

__all__ = [
    "BACKEND",
    "rank1_update",
    "sherman_morrison_update",
    "ucb_terms",
    "sq_distances",
    "diag_gauss_loglik",
]
