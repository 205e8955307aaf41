"""Hot-loop kernels, compiled when available.

The Cython extension ``vsd._kernels`` is used if it was built; otherwise
the numpy implementations in ``vsd._kernels_py`` are used. Set
``VSD_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _kernels_py

_ext = None
if os.environ.get("VSD_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _kernels as _ext
    except ImportError:
        _ext = None

BACKEND = "cython" if _ext is not None else "python"
_impl = _ext if _ext is not None else _kernels_py


def levenshtein(a, b) -> int:
    """Edit distance between two index sequences."""
    return int(_impl.levenshtein(np.ascontiguousarray(a, dtype=np.int64),
                                 np.ascontiguousarray(b, dtype=np.int64)))


def pairwise_levenshtein(batch) -> np.ndarray:
    """``(B, B)`` matrix of edit distances between equal-length rows."""
    return _impl.pairwise_levenshtein(np.ascontiguousarray(batch, dtype=np.int64))


def weighted_mismatch(x, y, w) -> np.ndarray:
    """``out[i, j] = sum_m w[m] * (x[i, m] != y[j, m])``."""
    return _impl.weighted_mismatch(np.ascontiguousarray(x, dtype=np.int64),
                                   np.ascontiguousarray(y, dtype=np.int64),
                                   np.ascontiguousarray(w, dtype=np.float64))
