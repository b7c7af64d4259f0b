"""Sparse 3D convolution for voxelized point clouds.

Submanifold, strided (downsampling) and inverse (upsampling) convolution
built from location tables and offset tables, with numba kernels and a
pure-numpy fallback (``VOXELCONV_NO_NUMBA=1``).
"""
from ._accel import backend_name, set_workers
from .coords import (
    CellMapping,
    LocationTable,
    StrideSpec,
    build_location_table,
    cell_map,
    delinearize,
    lct_lookup,
    linearize,
)
from .engine import (
    ConvLayerSpec,
    WeightTensor,
    downsample,
    inverse_conv,
    run_pipeline,
    sparse_conv,
    subm_conv,
    submanifold,
    upsample,
)
from .errors import *  # noqa: F401,F403
from .rules import (
    DownsampleMap,
    InverseMap,
    OffsetTable,
    build_downsample_oft,
    build_inverse_map,
    build_subm_oft,
    count_unique_outputs,
)
from .tensor import (
    DenseGrid,
    GridShape,
    SparseTensor,
    VoxelCoord,
    from_dense,
    new_sparse_tensor,
    to_dense,
    validate,
    voxelize,
)

__version__ = "0.1.0"
