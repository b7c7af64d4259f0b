"""Backend switch between the numba kernels and the pure-numpy fallback.

Set ``VOXELCONV_NO_NUMBA=1`` to force the numpy path.  The choice is read once
at import; tests and the benchmark flip :data:`USE_NUMBA` directly.
"""
import os
import warnings

_TRUTHY = {"1", "true", "yes", "on"}

try:
    import numba

    if "NUMBA_THREADING_LAYER" not in os.environ:
        # the TBB probe warns on older system TBB; OpenMP is always shipped
        numba.config.THREADING_LAYER = "omp"
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("VOXELCONV_NO_NUMBA", "").lower() not in _TRUTHY

_workers = 0


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


def max_workers():
    if HAVE_NUMBA:
        return int(numba.config.NUMBA_NUM_THREADS)
    return os.cpu_count() or 1


def default_workers():
    """Worker count from ``VOXELCONV_WORKERS`` (0 or unset means auto)."""
    raw = os.environ.get("VOXELCONV_WORKERS", "0").strip() or "0"
    try:
        return int(raw)
    except ValueError:
        warnings.warn(f"ignoring non-integer VOXELCONV_WORKERS={raw!r}")
        return 0


def set_workers(n):
    """Set the worker count used by parallel kernels; 0 selects all available."""
    global _workers
    if n < 0:
        raise ValueError(f"worker count must be >= 0, got {n}")
    n = min(n, max_workers()) if n else max_workers()
    _workers = n
    if HAVE_NUMBA:
        numba.set_num_threads(n)
    return n


def get_workers():
    return _workers or max_workers()


def njit(*args, **kwargs):
    """``numba.njit`` with on-disk caching; identity decorator without numba."""
    kwargs.setdefault("cache", True)
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


if HAVE_NUMBA:
    prange = numba.prange
else:  # pragma: no cover
    prange = range
