"""Hot kernels with a numba implementation and a pure-numpy fallback.

Each public name dispatches at call time on :data:`voxelconv._accel.USE_NUMBA`.
"""
from .. import _accel
from . import _np

try:
    from . import _nb
except ImportError:  # pragma: no cover
    _nb = None

__all__ = [
    "dense_build", "hash_build", "dense_lookup", "hash_lookup", "dense_claim",
    "hash_claim", "subm_rules", "cell_pairs", "scatter_rules", "conv_reference",
    "conv_optimized", "inverse_reference", "inverse_optimized", "impl",
]


def impl():
    """Module backing the current backend."""
    return _nb if (_accel.USE_NUMBA and _nb is not None) else _np


def _dispatch(name):
    def call(*args):
        return getattr(impl(), name)(*args)

    call.__name__ = name
    call.__qualname__ = name
    call.__doc__ = getattr(_np, name).__doc__
    return call


for _name in __all__[:-1]:
    globals()[_name] = _dispatch(_name)
del _name
