"""Backend selection for the hot loops.

Kernels are written once as plain Python loops and compiled with numba when
it is importable and ``PROBEPRINT_DISABLE_NUMBA`` is not set to a truthy value.
Callers use :data:`USE_NUMBA` to choose between the jitted kernels and the
vectorised numpy implementations that live next to them.
"""
import os

# the bundled TBB is too old for numba; skip straight to the other layers
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

_DISABLED = os.environ.get("PROBEPRINT_DISABLE_NUMBA", "").lower() in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError
    import numba

    USE_NUMBA = True

    def njit(*args, **kwargs):
        kwargs.setdefault("cache", True)
        kwargs.setdefault("nogil", True)
        return numba.njit(*args, **kwargs)

    prange = numba.prange

except ImportError:
    USE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn

    prange = range


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
