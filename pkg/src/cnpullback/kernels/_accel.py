"""Backend selection for the hot kernels.

Set ``CNPULLBACK_DISABLE_NUMBA=1`` to force the pure-numpy code paths.
"""
import os
import warnings

_DISABLED = os.environ.get("CNPULLBACK_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError
    import numba
    from numba import njit, prange

    # the TBB layer is optional; numba falls back to OpenMP/workqueue on its own
    warnings.filterwarnings("ignore", message=".*TBB.*", category=numba.NumbaWarning)
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag
    numba = None
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap

    prange = range


def backend():
    return "numba" if HAS_NUMBA else "numpy"


def set_threads(n):
    """Set the worker count for parallel kernels; a no-op on the numpy backend."""
    if n is None or not HAS_NUMBA:
        return
    n = int(n)
    if n < 1:
        raise ValueError("threads must be >= 1")
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def get_threads():
    return numba.get_num_threads() if HAS_NUMBA else 1
