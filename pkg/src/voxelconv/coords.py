"""Coordinate linearization, stride-cell mapping and the location table."""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DuplicateCoordinate, OutOfBounds
from .tensor import GridShape, VoxelCoord, site_keys

DEFAULT_DENSE_THRESHOLD = 1 << 26
BACKENDS = ("dense", "hash", "auto")


def _xyz(coord):
    if isinstance(coord, VoxelCoord):
        return coord.x, coord.y, coord.z
    x, y, z = coord
    return int(x), int(y), int(z)


def _check_xyz(x, y, z, shape):
    if not (0 <= x < shape.max_x and 0 <= y < shape.max_y and 0 <= z < shape.max_z):
        raise OutOfBounds(-1, f"({x}, {y}, {z}) outside {shape}")


def linearize(coord, shape):
    """Batch-local linear index ``x + y·X + z·X·Y`` of an (x, y, z) coordinate."""
    x, y, z = _xyz(coord)
    _check_xyz(x, y, z, shape)
    return x + y * shape.max_x + z * shape.max_x * shape.max_y


def delinearize(index, shape):
    """Inverse of :func:`linearize`: z first, then y from the remainder, then x."""
    plane = shape.max_x * shape.max_y
    if not 0 <= index < plane * shape.max_z:
        raise OutOfBounds(-1, f"linear index {index} outside {shape}")
    z = index // plane
    index -= z * plane
    y = index // shape.max_x
    x = index % shape.max_x
    return x, y, z


def location_key(coord, shape):
    """Batch-extended key: batch·volume + linearize(x, y, z)."""
    if not 0 <= coord.batch < shape.batches:
        raise OutOfBounds(-1, f"batch {coord.batch} outside {shape}")
    return coord.batch * shape.volume + linearize(coord, shape)


@dataclass(frozen=True)
class StrideSpec:
    s: int

    def __post_init__(self):
        if int(self.s) != self.s or self.s < 1:
            raise ValueError(f"stride must be a positive integer, got {self.s!r}")

    def __int__(self):
        return int(self.s)


def _stride(s):
    return int(s.s if isinstance(s, StrideSpec) else StrideSpec(s).s)


@dataclass(frozen=True)
class CellMapping:
    out_coord: VoxelCoord
    kernel_offset: int
    start_cell: tuple = field(default=(0, 0, 0))
    offsets: tuple = field(default=(0, 0, 0))


def cell_map(coord, stride):
    """Map a fine coordinate to its stride cell and the offset within it."""
    s = _stride(stride)
    if not isinstance(coord, VoxelCoord):
        coord = VoxelCoord(*coord) if len(coord) == 4 else VoxelCoord(0, *coord)
    p = (coord.x, coord.y, coord.z)
    if any(v < 0 for v in p):
        raise OutOfBounds(-1, f"negative coordinate {p}")
    start = tuple((v // s) * s for v in p)
    off = tuple(v - c for v, c in zip(p, start))
    out = VoxelCoord(coord.batch, *(c // s for c in start))
    kernel_offset = off[0] * s * s + off[1] * s + off[2]
    return CellMapping(out, kernel_offset, start, off)


def _hash_bits(n):
    # load factor <= 1/2
    return max(3, int(2 * max(n, 1) - 1).bit_length())


class LocationTable:
    """Coordinate -> row map over a grid, backed by a dense array or a hash table.

    Dense storage is one int32 per (batch, voxel) with -1 for inactive sites.
    Hash storage is open addressing with linear probing on the batch-extended
    linear key.
    """

    def __init__(self, backend, shape, table=None, hkeys=None, hvals=None, bits=0):
        self.backend = backend
        self.shape = shape
        self.table = table
        self.hkeys = hkeys
        self.hvals = hvals
        self.bits = bits

    @classmethod
    def from_keys(cls, keys, vals, shape, backend="auto", dense_threshold=DEFAULT_DENSE_THRESHOLD):
        backend = resolve_backend(backend, shape, dense_threshold)
        keys = np.ascontiguousarray(keys, dtype=np.int64)
        vals = np.ascontiguousarray(vals, dtype=np.int32)
        if backend == "dense":
            return cls("dense", shape, table=kernels.dense_build(keys, vals, shape.size))
        bits = _hash_bits(keys.size)
        hkeys, hvals = kernels.hash_build(keys, vals, bits)
        return cls("hash", shape, hkeys=hkeys, hvals=hvals, bits=bits)

    @property
    def dense(self):
        return self.backend == "dense"

    def kernel_args(self):
        """``(dense, table, hkeys, hvals, bits)`` with empty placeholders for the unused backend."""
        empty_i32 = np.empty(0, np.int32)
        if self.dense:
            return True, self.table, np.empty(0, np.int64), empty_i32, 3
        return False, empty_i32, self.hkeys, self.hvals, self.bits

    def lookup_keys(self, keys):
        """Rows for an array of batch-extended keys; -1 for absent (or negative) keys."""
        keys = np.ascontiguousarray(keys, dtype=np.int64)
        if self.dense:
            return kernels.dense_lookup(self.table, keys)
        return kernels.hash_lookup(self.hkeys, self.hvals, self.bits, keys)

    def lookup(self, coord):
        """Row of ``coord`` or ``None``; raises OutOfBounds outside the grid."""
        if not isinstance(coord, VoxelCoord):
            coord = VoxelCoord(*coord)
        row = int(self.lookup_keys(np.array([location_key(coord, self.shape)]))[0])
        return None if row < 0 else row

    def occupied_keys(self):
        """Sorted keys of every occupied slot."""
        if self.dense:
            return np.flatnonzero(self.table >= 0).astype(np.int64)
        return np.sort(self.hkeys[self.hkeys >= 0])

    def __len__(self):
        if self.dense:
            return int(np.count_nonzero(self.table >= 0))
        return int(np.count_nonzero(self.hkeys >= 0))

    def __repr__(self):
        return f"LocationTable(backend={self.backend!r}, shape={self.shape}, entries={len(self)})"


def resolve_backend(backend, shape, dense_threshold=DEFAULT_DENSE_THRESHOLD):
    if backend not in BACKENDS:
        raise ValueError(f"unknown location-table backend {backend!r}; choose from {BACKENDS}")
    if backend == "auto":
        return "dense" if shape.size <= dense_threshold else "hash"
    return backend


def build_location_table(t, backend="auto", dense_threshold=DEFAULT_DENSE_THRESHOLD):
    """Location table mapping every active coordinate of ``t`` to its row."""
    keys = t.keys()
    rows = np.arange(t.n, dtype=np.int32)
    lct = LocationTable.from_keys(keys, rows, t.shape, backend, dense_threshold)
    # a slot that does not point back at its own row was claimed twice
    back = lct.lookup_keys(keys)
    clash = np.flatnonzero(back != rows)
    if clash.size:
        r = int(clash[0])
        raise DuplicateCoordinate(min(int(back[r]), r), max(int(back[r]), r))
    return lct


def lct_lookup(lct, coord):
    return lct.lookup(coord)


__all__ = [
    "GridShape", "StrideSpec", "CellMapping", "LocationTable", "linearize", "delinearize",
    "location_key", "cell_map", "build_location_table", "lct_lookup", "resolve_backend",
    "site_keys", "DEFAULT_DENSE_THRESHOLD",
]
