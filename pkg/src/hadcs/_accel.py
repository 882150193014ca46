"""Numba dispatch.

Kernels in :mod:`hadcs.kernels` are written once in a numba-compatible
subset of Python/numpy. When numba is importable and ``HADCS_DISABLE_NUMBA``
is unset (or ``0``), they are compiled with ``@njit``; otherwise the plain
Python bodies are never used for the hot path and vectorised numpy
fallbacks are selected instead.
"""

import os
import warnings

_FLAG = os.environ.get("HADCS_DISABLE_NUMBA", "").strip().lower()

try:
    if _FLAG in ("1", "true", "yes", "on"):
        raise ImportError("numba disabled by HADCS_DISABLE_NUMBA")
    # an old system TBB only disables one threading layer; numba falls back
    warnings.filterwarnings("ignore", message="The TBB threading layer")
    from numba import njit, prange

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def backend() -> str:
    return "numba" if HAS_NUMBA else "numpy"
