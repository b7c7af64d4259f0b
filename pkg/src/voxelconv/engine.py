"""Gather-compute-scatter arithmetic over offset tables.

Each operator has two compute paths selected by ``path``:

``reference``
    The plain loop nest: output row, output channel, kernel offset, input
    channel.
``optimized``
    Rows are split into blocks and output channels into tiles; each
    (block, tile) job stages its weight slice once in a local buffer laid
    out [kernel offset][input channel][output channel] and reuses it for
    every row of the block.

Both paths add terms to each output element in the same order (kernel
offset outer, input channel inner), so their results are bitwise identical.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .coords import DEFAULT_DENSE_THRESHOLD, build_location_table
from .errors import ChannelMismatch, EvenKernel, MissingParent, ShapeMismatch, UnmatchedInverse
from .rules import build_downsample_oft, build_inverse_map, build_subm_oft
from .tensor import COORD_DTYPE, FEATURE_DTYPE, SparseTensor

PATHS = ("reference", "optimized")
MODES = ("submanifold", "downsample", "inverse")
_MODE_ALIASES = {"subm": "submanifold", "down": "downsample", "inv": "inverse", "up": "inverse"}

BLOCK_ROWS = 256
OC_TILE = 32


class WeightTensor:
    """Convolution weights stored as float32 ``[out_channel][kernel_offset][in_channel]``."""

    __slots__ = ("values",)

    def __init__(self, values):
        values = np.ascontiguousarray(values, dtype=FEATURE_DTYPE)
        if values.ndim != 3 or min(values.shape) < 1:
            raise ShapeMismatch(f"weights must be (out, kernel_volume, in), got {values.shape}")
        values.flags.writeable = False
        self.values = values

    @classmethod
    def from_flat(cls, flat, out_channels, in_channels, kernel):
        flat = np.asarray(flat, dtype=FEATURE_DTYPE).reshape(-1)
        expected = out_channels * kernel ** 3 * in_channels
        if flat.size != expected:
            raise ShapeMismatch(
                f"{flat.size} weight values, expected {out_channels}*{kernel}^3*{in_channels}={expected}"
            )
        return cls(flat.reshape(out_channels, kernel ** 3, in_channels))

    @classmethod
    def identity(cls, channels, kernel=1):
        """Weights that copy the centre site's features through unchanged."""
        kv = kernel ** 3
        values = np.zeros((channels, kv, channels), FEATURE_DTYPE)
        values[np.arange(channels), kv // 2, np.arange(channels)] = 1.0
        return cls(values)

    @property
    def out_channels(self):
        return self.values.shape[0]

    @property
    def kernel_volume(self):
        return self.values.shape[1]

    @property
    def in_channels(self):
        return self.values.shape[2]

    @property
    def kernel_size(self):
        k = round(self.kernel_volume ** (1 / 3))
        if k ** 3 != self.kernel_volume:
            raise ShapeMismatch(f"kernel volume {self.kernel_volume} is not a cube")
        return k

    @property
    def flat(self):
        return self.values.reshape(-1)

    def index(self, oc, koff, ic):
        return (oc * self.kernel_volume + koff) * self.in_channels + ic

    def __add__(self, other):
        return WeightTensor(self.values + other.values)

    def __eq__(self, other):
        return isinstance(other, WeightTensor) and self.values.tobytes() == other.values.tobytes() \
            and self.values.shape == other.values.shape

    __hash__ = None

    def __repr__(self):
        return (f"WeightTensor(out={self.out_channels}, kernel_volume={self.kernel_volume}, "
                f"in={self.in_channels})")


@dataclass(frozen=True)
class ConvLayerSpec:
    mode: str
    size: int  # kernel size for submanifold, stride otherwise
    weights: WeightTensor

    def __post_init__(self):
        mode = _MODE_ALIASES.get(self.mode, self.mode)
        if mode not in MODES:
            raise ValueError(f"unknown layer mode {self.mode!r}")
        object.__setattr__(self, "mode", mode)
        if mode == "submanifold" and (self.size < 1 or self.size % 2 == 0):
            raise EvenKernel(self.size)
        if self.size < 1:
            raise ValueError(f"stride must be >= 1, got {self.size}")
        if self.weights.kernel_volume != self.size ** 3:
            raise ShapeMismatch(
                f"{mode} layer of size {self.size} needs kernel volume {self.size ** 3}, "
                f"weights have {self.weights.kernel_volume}"
            )


def _check_path(path):
    if path not in PATHS:
        raise ValueError(f"unknown compute path {path!r}; choose from {PATHS}")


def _compute(features, entries, w, path):
    _check_path(path)
    feat = np.ascontiguousarray(features, dtype=FEATURE_DTYPE)
    if entries.shape[0] == 0:
        return np.zeros((0, w.out_channels), FEATURE_DTYPE)
    if path == "reference":
        return kernels.conv_reference(feat, entries, w.values)
    return kernels.conv_optimized(feat, entries, w.values, BLOCK_ROWS, OC_TILE)


def _check_table(t, oft, w, rows):
    if oft.kernel_volume != w.kernel_volume:
        raise ShapeMismatch(f"offset table has kernel volume {oft.kernel_volume}, weights {w.kernel_volume}")
    if t.channels != w.in_channels:
        raise ShapeMismatch(f"tensor has {t.channels} channels, weights expect {w.in_channels}")
    if oft.rows != rows:
        raise ShapeMismatch(f"offset table has {oft.rows} rows, expected {rows}")


def subm_conv(t, oft, w, path="optimized"):
    """Submanifold convolution: output sites are exactly the input sites."""
    _check_table(t, oft, w, t.n)
    out = _compute(t.features, oft.entries, w, path)
    return SparseTensor(t.shape, t.indices, out, w.out_channels, _trusted=True)


def sparse_conv(t, dmap, oft, w, path="optimized"):
    """Strided convolution (kernel size = stride) onto the coarse sites of ``dmap``."""
    _check_table(t, oft, w, dmap.out_count)
    if dmap.out_row.size != t.n:
        raise ShapeMismatch(f"downsample map covers {dmap.out_row.size} rows, tensor has {t.n}")
    out = _compute(t.features, oft.entries, w, path)
    return SparseTensor(dmap.out_shape, dmap.out_indices, out, w.out_channels, _trusted=True)


def inverse_conv(coarse, imap, fine_indices, w, path="optimized"):
    """Upsample ``coarse`` onto the fine sites: one feature row times one kernel
    slice per fine site."""
    _check_path(path)
    if coarse.channels != w.in_channels:
        raise ShapeMismatch(f"coarse tensor has {coarse.channels} channels, weights expect {w.in_channels}")
    if w.kernel_volume != imap.stride ** 3:
        raise ShapeMismatch(f"stride {imap.stride} needs kernel volume {imap.stride ** 3}, got {w.kernel_volume}")
    if fine_indices is None:
        fine_indices = imap.fine_indices
    else:
        fine_indices = np.ascontiguousarray(fine_indices, dtype=COORD_DTYPE).reshape(4, -1)
        _check_inverse_consistency(coarse, imap, fine_indices)
    if imap.coarse_row.size and imap.coarse_row.max() >= coarse.n:
        raise MissingParent(int(np.argmax(imap.coarse_row >= coarse.n)))

    rows = np.ascontiguousarray(imap.coarse_row, dtype=np.int32)
    koffs = np.ascontiguousarray(imap.kernel_offset, dtype=np.int32)
    feat = coarse.features
    if rows.size == 0:
        out = np.zeros((0, w.out_channels), FEATURE_DTYPE)
    elif path == "reference":
        out = kernels.inverse_reference(feat, rows, koffs, w.values)
    else:
        out = kernels.inverse_optimized(feat, rows, koffs, w.values, BLOCK_ROWS)
    return SparseTensor(imap.fine_shape, fine_indices, out, w.out_channels, _trusted=True)


def _check_inverse_consistency(coarse, imap, fine_indices):
    if fine_indices.shape != imap.fine_indices.shape:
        raise ShapeMismatch(
            f"{fine_indices.shape[1]} fine sites given, inverse map covers {imap.fine_indices.shape[1]}"
        )
    if np.array_equal(fine_indices, imap.fine_indices):
        return
    s = imap.stride
    parent = coarse.indices[:, imap.coarse_row]
    cells = np.vstack([fine_indices[:1], fine_indices[1:] // s])
    bad = np.flatnonzero((cells != parent).any(axis=0))
    if bad.size:
        raise MissingParent(int(bad[0]))


# layer-level helpers: build tables and compute in one call


def submanifold(t, w, path="optimized", backend="auto", dense_threshold=DEFAULT_DENSE_THRESHOLD):
    lct = build_location_table(t, backend, dense_threshold)
    oft = build_subm_oft(t, lct, w.kernel_size)
    return subm_conv(t, oft, w, path)


def downsample(t, w, path="optimized", backend="auto", dense_threshold=DEFAULT_DENSE_THRESHOLD):
    dmap, oft = build_downsample_oft(t, w.kernel_size, backend, dense_threshold)
    return sparse_conv(t, dmap, oft, w, path)


def upsample(coarse, fine, w, path="optimized", backend="auto", dense_threshold=DEFAULT_DENSE_THRESHOLD,
             fine_shape=None):
    """Inverse convolution of ``coarse`` onto ``fine`` (a SparseTensor or (4, n) indices)."""
    imap = build_inverse_map(fine, coarse, w.kernel_size, fine_shape, backend, dense_threshold)
    return inverse_conv(coarse, imap, None, w, path)


def run_pipeline(layers, t, path="optimized", backend="auto", dense_threshold=DEFAULT_DENSE_THRESHOLD):
    """Apply layers in order.  Each downsample remembers its input sites; the
    next unmatched inverse layer upsamples back onto them."""
    stack = []
    for i, layer in enumerate(layers):
        w = layer.weights
        if t.channels != w.in_channels:
            raise ChannelMismatch(i, w.in_channels, t.channels)
        if layer.mode == "submanifold":
            t = submanifold(t, w, path, backend, dense_threshold)
        elif layer.mode == "downsample":
            stack.append((t.shape, t.indices))
            t = downsample(t, w, path, backend, dense_threshold)
        else:
            if not stack:
                raise UnmatchedInverse(i)
            fine_shape, fine_indices = stack.pop()
            t = upsample(t, fine_indices, w, path, backend, dense_threshold, fine_shape=fine_shape)
    return t


__all__ = [
    "WeightTensor", "ConvLayerSpec", "subm_conv", "sparse_conv", "inverse_conv", "run_pipeline",
    "submanifold", "downsample", "upsample", "PATHS", "MODES",
]
