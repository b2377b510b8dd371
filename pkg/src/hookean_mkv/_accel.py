"""Backend switch between numba-compiled kernels and pure numpy fallbacks.

Set ``HOOKEAN_MKV_BACKEND=numpy`` to force the numpy path. The default uses
numba when it is importable.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

BACKEND = os.environ.get("HOOKEAN_MKV_BACKEND", "numba").strip().lower()
if BACKEND not in ("numba", "numpy"):
    raise ValueError(f"HOOKEAN_MKV_BACKEND must be 'numba' or 'numpy', got {BACKEND!r}")
USE_NUMBA = BACKEND == "numba" and numba is not None


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when numba is present, identity otherwise."""
    kwargs.setdefault("cache", True)
    if numba is None:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


if numba is not None:
    # the system TBB is often too old for numba; prefer layers that need no probe warning
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
    prange = numba.prange
else:  # pragma: no cover
    prange = range


def pick(numba_impl, numpy_impl):
    return numba_impl if USE_NUMBA else numpy_impl


def set_threads(n: int) -> None:
    if numba is not None and n and n > 0:
        numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))
