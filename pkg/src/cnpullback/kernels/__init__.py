"""Hot loops: numba kernels with pure-numpy fallbacks (``CNPULLBACK_DISABLE_NUMBA=1``)."""
from ._accel import HAS_NUMBA, backend, get_threads, set_threads

__all__ = ["HAS_NUMBA", "backend", "get_threads", "set_threads"]
