"""Offset (rule) tables for submanifold, strided and inverse convolution."""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .coords import (
    DEFAULT_DENSE_THRESHOLD,
    LocationTable,
    _hash_bits,
    _stride,
    build_location_table,
    resolve_backend,
)
from .errors import EvenKernel, MissingParent, OutOfBounds, ShapeMismatch
from .tensor import COORD_DTYPE, GridShape, SparseTensor


@dataclass(frozen=True, eq=False)
class OffsetTable:
    """``entries[m, koff]`` is the input row feeding output row ``m`` through
    kernel offset ``koff``, or -1."""

    entries: np.ndarray

    @property
    def rows(self):
        return self.entries.shape[0]

    @property
    def kernel_volume(self):
        return self.entries.shape[1]

    def __eq__(self, other):
        return isinstance(other, OffsetTable) and np.array_equal(self.entries, other.entries)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class DownsampleMap:
    """Stage-one pair table of a strided convolution plus the coarse index set."""

    out_row: np.ndarray        # per input row
    kernel_offset: np.ndarray  # per input row, in [0, s³)
    out_count: int
    out_indices: np.ndarray    # (4, out_count), canonical order
    out_shape: GridShape
    stride: int
    coarse_lct: LocationTable = None


@dataclass(frozen=True, eq=False)
class InverseMap:
    """One (coarse row, kernel offset) pair per fine site."""

    coarse_row: np.ndarray
    kernel_offset: np.ndarray
    fine_indices: np.ndarray
    fine_shape: GridShape
    stride: int


@dataclass(frozen=True, eq=False)
class UniqueCounterState:
    """Occupancy of the coarse grid after claiming: each occupied slot holds
    the input row that claimed it first."""

    status: LocationTable
    count: int


def build_subm_oft(t, lct, k):
    """Neighbourhood table of a k×k×k submanifold convolution over ``t``'s sites."""
    if int(k) != k or k < 1 or k % 2 == 0:
        raise EvenKernel(k)
    if lct.shape != t.shape:
        raise ShapeMismatch(f"location table built for {lct.shape}, tensor is {t.shape}")
    dims = np.array(t.shape.extent, dtype=np.int64)
    entries = kernels.subm_rules(t.indices, dims, int(k), *lct.kernel_args())
    return OffsetTable(entries)


def _cell_pairs(indices, s, coarse_shape):
    cdims = np.array(coarse_shape.extent, dtype=np.int64)
    return kernels.cell_pairs(np.ascontiguousarray(indices, dtype=COORD_DTYPE), s, cdims)


def count_unique_outputs(t, s, backend="auto", dense_threshold=DEFAULT_DENSE_THRESHOLD):
    """Number of distinct stride cells occupied by ``t``, with the status table.

    Each input claims its cell on a status table initialised to -1; the
    first claimant of a cell bumps the counter.
    """
    s = _stride(s)
    coarse = t.shape.coarsen(s)
    ckeys, _ = _cell_pairs(t.indices, s, coarse)
    return _claim(ckeys, coarse, backend, dense_threshold)


def _claim(ckeys, coarse, backend, dense_threshold):
    backend = resolve_backend(backend, coarse, dense_threshold)
    if backend == "dense":
        status, count = kernels.dense_claim(ckeys, coarse.size)
        table = LocationTable("dense", coarse, table=status)
    else:
        bits = _hash_bits(ckeys.size)
        hkeys, hvals, count = kernels.hash_claim(ckeys, bits)
        table = LocationTable("hash", coarse, hkeys=hkeys, hvals=hvals, bits=bits)
    return int(count), UniqueCounterState(table, int(count))


def _unkey(keys, shape):
    X, Y = shape.max_x, shape.max_y
    b, rest = np.divmod(keys, shape.volume)
    z, rest = np.divmod(rest, X * Y)
    y, x = np.divmod(rest, X)
    return np.stack([b, x, y, z]).astype(COORD_DTYPE)


@dataclass(frozen=True, eq=False)
class DownsampleStageOne:
    """Pair table (coarse key, kernel offset) per input row plus the claim result."""

    coarse_keys: np.ndarray
    kernel_offset: np.ndarray
    coarse_shape: GridShape
    stride: int
    counter: UniqueCounterState


def downsample_stage_one(t, s, backend="auto", dense_threshold=DEFAULT_DENSE_THRESHOLD):
    s = _stride(s)
    coarse = t.shape.coarsen(s)
    ckeys, koffs = _cell_pairs(t.indices, s, coarse)
    _, state = _claim(ckeys, coarse, backend, dense_threshold)
    return DownsampleStageOne(ckeys, koffs, coarse, s, state)


def downsample_stage_two(stage, dense_threshold=DEFAULT_DENSE_THRESHOLD):
    """Number coarse cells canonically and scatter input rows into the offset table."""
    count = stage.counter.count
    status = stage.counter.status
    ukeys = status.occupied_keys()
    assert ukeys.size == count
    coarse_lct = LocationTable.from_keys(
        ukeys, np.arange(count, dtype=np.int32), stage.coarse_shape, status.backend, dense_threshold
    )
    out_row = coarse_lct.lookup_keys(stage.coarse_keys)
    entries = kernels.scatter_rules(out_row, stage.kernel_offset, count, stage.stride ** 3)
    dmap = DownsampleMap(
        out_row=out_row,
        kernel_offset=stage.kernel_offset,
        out_count=count,
        out_indices=_unkey(ukeys, stage.coarse_shape),
        out_shape=stage.coarse_shape,
        stride=stage.stride,
        coarse_lct=coarse_lct,
    )
    return dmap, OffsetTable(entries)


def build_downsample_oft(t, s, backend="auto", dense_threshold=DEFAULT_DENSE_THRESHOLD):
    """Two-stage rule table for a stride-``s`` convolution with kernel size ``s``.

    Stage one pairs every input row with its coarse cell and kernel offset and
    counts unique cells.  Coarse cells are then numbered in canonical order
    (batch, linear coordinate), and stage two scatters input rows into an
    ``(M_out, s³)`` offset table.
    """
    stage = downsample_stage_one(t, s, backend, dense_threshold)
    return downsample_stage_two(stage, dense_threshold)


def build_inverse_map(fine_indices, coarse, s, fine_shape=None, backend="auto",
                      dense_threshold=DEFAULT_DENSE_THRESHOLD, lct=None):
    """Parent coarse row and kernel offset of every fine site.

    ``fine_indices`` is a (4, n) array or a SparseTensor.  ``fine_shape``
    defaults to the tensor's shape, or to the coarse shape scaled by ``s``.
    A prebuilt location table of ``coarse`` may be passed as ``lct``.
    """
    s = _stride(s)
    if isinstance(fine_indices, SparseTensor):
        fine_shape = fine_shape or fine_indices.shape
        fine_indices = fine_indices.indices
    fine_indices = np.ascontiguousarray(fine_indices, dtype=COORD_DTYPE).reshape(4, -1)
    if fine_shape is None:
        c = coarse.shape
        fine_shape = GridShape(c.max_x * s, c.max_y * s, c.max_z * s, c.batches)
    if fine_shape.coarsen(s) != coarse.shape:
        raise ShapeMismatch(f"fine grid {fine_shape} at stride {s} does not coarsen to {coarse.shape}")
    limits = np.array([fine_shape.batches, *fine_shape.extent])[:, None]
    bad = np.flatnonzero(((fine_indices < 0) | (fine_indices >= limits)).any(axis=0))
    if bad.size:
        raise OutOfBounds(int(bad[0]), f"fine row {bad[0]} lies outside {fine_shape}")

    if lct is None:
        lct = build_location_table(coarse, backend, dense_threshold)
    ckeys, koffs = _cell_pairs(fine_indices, s, coarse.shape)
    rows = lct.lookup_keys(ckeys)
    missing = np.flatnonzero(rows < 0)
    if missing.size:
        raise MissingParent(int(missing[0]))
    return InverseMap(rows, koffs, fine_indices, fine_shape, s)


__all__ = [
    "OffsetTable", "DownsampleMap", "InverseMap", "UniqueCounterState", "DownsampleStageOne",
    "build_subm_oft", "count_unique_outputs", "downsample_stage_one", "downsample_stage_two",
    "build_downsample_oft", "build_inverse_map",
]
