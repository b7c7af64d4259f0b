"""Sparse tensor data model: grid shape, structure-of-arrays voxel indices,
row-major features, voxelization and densification."""
from dataclasses import dataclass, field

import numpy as np

from .errors import DuplicateCoordinate, LengthMismatch, OutOfBounds

COORD_DTYPE = np.int32
FEATURE_DTYPE = np.float32
_INT32_MAX = np.iinfo(np.int32).max
_INDEX_MAX = np.iinfo(np.int64).max


@dataclass(frozen=True)
class GridShape:
    """Voxel extents per axis plus the number of batches."""

    max_x: int
    max_y: int
    max_z: int
    batches: int = 1

    def __post_init__(self):
        for name in ("max_x", "max_y", "max_z", "batches"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"GridShape.{name} must be a positive integer, got {v!r}")
            if v > _INT32_MAX:
                raise ValueError(f"GridShape.{name}={v} exceeds the 32-bit coordinate range")
            object.__setattr__(self, name, int(v))
        if self.volume * self.batches > _INDEX_MAX:
            raise ValueError("grid too large for 64-bit linear indices")

    @property
    def extent(self):
        return (self.max_x, self.max_y, self.max_z)

    @property
    def volume(self):
        return self.max_x * self.max_y * self.max_z

    @property
    def size(self):
        return self.volume * self.batches

    def coarsen(self, s):
        """Shape of the stride-``s`` grid; partial cells at the high edge are kept."""
        return GridShape(-(-self.max_x // s), -(-self.max_y // s), -(-self.max_z // s), self.batches)

    @classmethod
    def parse(cls, text):
        """Parse ``"X,Y,Z"`` or ``"X,Y,Z,B"``."""
        parts = [int(p) for p in str(text).replace("x", ",").split(",") if p.strip()]
        if len(parts) not in (3, 4):
            raise ValueError(f"expected X,Y,Z[,B], got {text!r}")
        return cls(*parts)

    def __str__(self):
        return f"{self.max_x}x{self.max_y}x{self.max_z}x{self.batches}"


@dataclass(frozen=True)
class VoxelCoord:
    batch: int
    x: int
    y: int
    z: int

    def __iter__(self):
        return iter((self.batch, self.x, self.y, self.z))


@dataclass(frozen=True)
class Finding:
    kind: str
    rows: tuple
    detail: str = ""

    def to_error(self):
        if self.kind == "DuplicateCoordinate":
            return DuplicateCoordinate(*self.rows)
        if self.kind == "OutOfBounds":
            return OutOfBounds(self.rows[0], self.detail or None)
        return LengthMismatch(self.detail)

    def __str__(self):
        return f"{self.kind}{self.rows}: {self.detail}" if self.detail else f"{self.kind}{self.rows}"


def site_keys(indices, shape):
    """Batch-aware linear key per row: batch·volume + x + y·X + z·X·Y."""
    idx = np.asarray(indices, dtype=np.int64)
    X, Y = shape.max_x, shape.max_y
    return idx[0] * shape.volume + idx[1] + idx[2] * X + idx[3] * (X * Y)


def validate_arrays(shape, indices, features, channels):
    """Return every invariant violation of the raw arrays (empty list iff valid)."""
    findings = []
    indices = np.asarray(indices)
    features = np.asarray(features)
    if indices.ndim != 2 or indices.shape[0] != 4:
        return [Finding("LengthMismatch", (), f"indices must be 4 arrays, got shape {indices.shape}")]
    n = indices.shape[1]
    if features.size != n * channels:
        findings.append(
            Finding("LengthMismatch", (), f"features hold {features.size} values, expected {n}*{channels}")
        )
    if n == 0:
        return findings

    limits = np.array([shape.batches, shape.max_x, shape.max_y, shape.max_z])[:, None]
    bad = ((indices < 0) | (indices >= limits)).any(axis=0)
    for r in np.flatnonzero(bad):
        b, x, y, z = (int(v) for v in indices[:, r])
        findings.append(Finding("OutOfBounds", (int(r),), f"(b={b}, x={x}, y={y}, z={z}) outside {shape}"))

    ok = np.flatnonzero(~bad)
    keys = site_keys(indices[:, ok], shape)
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    dup = np.flatnonzero(sk[1:] == sk[:-1]) + 1
    if dup.size:
        # pair each duplicate with the first row of its run
        starts = np.flatnonzero(np.r_[True, sk[1:] != sk[:-1]])
        run_head = starts[np.searchsorted(starts, dup, side="right") - 1]
        for h, d in zip(run_head, dup):
            findings.append(Finding("DuplicateCoordinate", (int(ok[order[h]]), int(ok[order[d]]))))
    return findings


class SparseTensor:
    """Active voxel sites with per-site feature vectors over a bounded grid.

    ``indices`` is an int32 array of shape ``(4, n)``: one contiguous row each
    for batch, x, y and z.  ``features`` is float32 ``(n, channels)``.  Both
    are read-only; a constructed tensor is always valid.
    """

    __slots__ = ("shape", "indices", "features", "channels")

    def __init__(self, shape, indices, features, channels=None, *, _trusted=False):
        indices = np.asarray(indices)
        if indices.ndim == 1 and indices.size == 0:
            indices = indices.reshape(4, 0)
        features = np.asarray(features)
        if channels is None:
            channels = features.shape[1] if features.ndim == 2 else 1
        if not _trusted:
            findings = validate_arrays(shape, indices, features, channels)
            if findings:
                raise findings[0].to_error()
        n = indices.shape[1]
        self.shape = shape
        self.channels = int(channels)
        self.indices = np.ascontiguousarray(indices, dtype=COORD_DTYPE)
        self.features = np.ascontiguousarray(features, dtype=FEATURE_DTYPE).reshape(n, self.channels)
        self.indices.flags.writeable = False
        self.features.flags.writeable = False

    @property
    def n(self):
        return self.indices.shape[1]

    @property
    def batch(self):
        return self.indices[0]

    @property
    def x(self):
        return self.indices[1]

    @property
    def y(self):
        return self.indices[2]

    @property
    def z(self):
        return self.indices[3]

    def keys(self):
        return site_keys(self.indices, self.shape)

    def coord(self, row):
        return VoxelCoord(*(int(v) for v in self.indices[:, row]))

    def canonical(self):
        """Rows re-ordered ascending by (batch, linearized coordinate)."""
        order = np.argsort(self.keys(), kind="stable")
        return SparseTensor(
            self.shape, self.indices[:, order], self.features[order], self.channels, _trusted=True
        )

    def with_features(self, features):
        features = np.asarray(features, dtype=FEATURE_DTYPE)
        return SparseTensor(self.shape, self.indices, features, features.shape[1], _trusted=True)

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, SparseTensor):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.channels == other.channels
            and np.array_equal(self.indices, other.indices)
            and self.features.tobytes() == other.features.tobytes()
        )

    __hash__ = None

    def __repr__(self):
        return f"SparseTensor(shape={self.shape}, n={self.n}, channels={self.channels})"


def new_sparse_tensor(shape, indices, features, channels):
    """Build a validated tensor from four coordinate arrays and flat or 2-D features."""
    idx = [np.asarray(a) for a in indices]
    if len(idx) != 4:
        raise LengthMismatch(f"expected 4 coordinate arrays, got {len(idx)}")
    lengths = {a.size for a in idx}
    if len(lengths) > 1:
        raise LengthMismatch(f"coordinate arrays differ in length: {[a.size for a in idx]}")
    n = lengths.pop()
    stacked = np.stack([a.reshape(-1) for a in idx]) if n else np.zeros((4, 0), dtype=COORD_DTYPE)
    if np.any(np.abs(stacked.astype(np.int64)) > _INT32_MAX):
        raise OutOfBounds(int(np.flatnonzero(np.abs(stacked).max(axis=0) > _INT32_MAX)[0]))
    features = np.asarray(features, dtype=FEATURE_DTYPE).reshape(-1)
    return SparseTensor(shape, stacked, features, channels)


def empty_tensor(shape, channels):
    return SparseTensor(shape, np.zeros((4, 0), COORD_DTYPE), np.zeros((0, channels), FEATURE_DTYPE), channels)


def validate(t):
    """Invariant report for a tensor (or any object with the same attributes)."""
    return validate_arrays(t.shape, t.indices, t.features, t.channels)


@dataclass(frozen=True, eq=False)
class DenseGrid:
    shape: GridShape
    channels: int
    values: np.ndarray = field(repr=False)  # (batches, X, Y, Z, channels)


def to_dense(t):
    values = np.zeros((t.shape.batches, *t.shape.extent, t.channels), dtype=FEATURE_DTYPE)
    b, x, y, z = t.indices
    values[b, x, y, z] = t.features
    return DenseGrid(t.shape, t.channels, values)


def from_dense(grid):
    """Sparsify by dropping all-zero sites; rows come out in canonical order."""
    active = np.any(grid.values != 0, axis=-1)
    b, x, y, z = np.nonzero(active)
    indices = np.stack([b, x, y, z]).astype(COORD_DTYPE)
    t = SparseTensor(grid.shape, indices, grid.values[b, x, y, z], grid.channels, _trusted=True)
    return t.canonical()


REDUCERS = ("mean", "sum", "first")


def voxelize(batch, points, features, voxel_size, origin, shape, reducer="mean"):
    """Quantize real-valued points onto ``shape`` and merge collisions.

    ``batch`` has length n, ``points`` is (n, 3) and ``features`` (n, C).
    Voxel coordinate is ``floor((p - origin) / voxel_size)`` per axis.
    Points sharing a voxel are merged with ``reducer``; ``first`` keeps the
    earliest point in input order.
    """
    if not voxel_size > 0:
        raise ValueError(f"voxel_size must be positive, got {voxel_size}")
    if reducer not in REDUCERS:
        raise ValueError(f"unknown reducer {reducer!r}; choose from {REDUCERS}")
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = points.shape[0]
    batch = np.asarray(batch, dtype=np.int64).reshape(-1)
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        features = features.reshape(n, -1) if n else features.reshape(0, 0)
    if features.shape[0] != n:
        raise LengthMismatch(f"{features.shape[0]} feature rows for {n} points")
    channels = features.shape[1]
    if batch.size != n:
        raise LengthMismatch(f"{batch.size} batch ids for {n} points")
    if n == 0:
        return empty_tensor(shape, channels)

    vox = np.floor((points - np.asarray(origin, dtype=np.float64)) / voxel_size)
    limits = np.array(shape.extent)
    bad = np.flatnonzero(
        ~np.isfinite(vox).all(axis=1) | (vox < 0).any(axis=1) | (vox >= limits).any(axis=1)
        | (batch < 0) | (batch >= shape.batches)
    )
    if bad.size:
        raise OutOfBounds(int(bad[0]), f"point {bad[0]} quantizes outside {shape}")
    vox = vox.astype(np.int64)
    indices = np.vstack([batch, vox.T])
    keys = site_keys(indices, shape)
    uniq, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    m = uniq.size

    if reducer == "first":
        merged = features[first]
    else:
        merged = np.zeros((m, channels), dtype=np.float64)
        np.add.at(merged, inverse, features)
        if reducer == "mean":
            merged /= np.bincount(inverse, minlength=m)[:, None]
    return SparseTensor(shape, indices[:, first].astype(COORD_DTYPE), merged, channels, _trusted=True)
