"""On-disk formats.

``.spt`` sparse tensor file, all little-endian::

    b"SPT1"
    uint32 version (=1), batches, n, channels, max_x, max_y, max_z
    int32[n] batch, int32[n] x, int32[n] y, int32[n] z
    float32[n * channels] features, row-major

Weights are JSON with ``out_channels``, ``in_channels``, ``kernel``,
``layout`` (always ``"oc_koff_ic"``) and a flat ``values`` array.
"""
import csv
import io
import json
import struct

import numpy as np

from .coords import DEFAULT_DENSE_THRESHOLD
from .engine import WeightTensor
from .errors import BadMagic, FormatError, InvariantViolation, Truncated, VersionUnsupported
from .tensor import Finding, GridShape, SparseTensor, validate_arrays

MAGIC = b"SPT1"
VERSION = 1
_HEADER = struct.Struct("<4s7I")
HEADER_BYTES = _HEADER.size  # 32
WEIGHT_LAYOUT = "oc_koff_ic"


def tensor_to_bytes(t):
    s = t.shape
    header = _HEADER.pack(MAGIC, VERSION, s.batches, t.n, t.channels, s.max_x, s.max_y, s.max_z)
    return b"".join([
        header,
        t.indices.astype("<i4").tobytes(),
        t.features.astype("<f4").tobytes(),
    ])


def tensor_from_bytes(data):
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic(f"not an SPT1 file (starts with {bytes(data[:4])!r})")
    if len(data) < HEADER_BYTES:
        raise Truncated(f"header needs {HEADER_BYTES} bytes, file has {len(data)}")
    _, version, batches, n, channels, mx, my, mz = _HEADER.unpack_from(data)
    if version != VERSION:
        raise VersionUnsupported(f"SPT version {version} (supported: {VERSION})")
    expected = HEADER_BYTES + 16 * n + 4 * n * channels
    if len(data) < expected:
        raise Truncated(f"expected {expected} bytes, file has {len(data)}")
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes after payload")
    try:
        shape = GridShape(mx, my, mz, batches)
    except ValueError as exc:
        raise InvariantViolation([Finding("BadShape", (), str(exc))]) from None
    indices = np.frombuffer(data, "<i4", 4 * n, HEADER_BYTES).reshape(4, n)
    features = np.frombuffer(data, "<f4", n * channels, HEADER_BYTES + 16 * n).reshape(n, channels)
    findings = validate_arrays(shape, indices, features, channels)
    if findings:
        raise InvariantViolation(findings)
    return SparseTensor(shape, indices.astype(np.int32), features.astype(np.float32), channels, _trusted=True)


def save_tensor(path, t):
    with open(path, "wb") as fh:
        fh.write(tensor_to_bytes(t))


def load_tensor(path):
    with open(path, "rb") as fh:
        return tensor_from_bytes(fh.read())


def weights_to_dict(w):
    return {
        "out_channels": w.out_channels,
        "in_channels": w.in_channels,
        "kernel": w.kernel_size,
        "layout": WEIGHT_LAYOUT,
        "values": [float(v) for v in w.flat],
    }


def weights_from_dict(doc):
    try:
        oc, ic, k = int(doc["out_channels"]), int(doc["in_channels"]), int(doc["kernel"])
        values = doc["values"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"weight document missing or malformed field: {exc}") from None
    layout = doc.get("layout", WEIGHT_LAYOUT)
    if layout != WEIGHT_LAYOUT:
        raise FormatError(f"unsupported weight layout {layout!r}; expected {WEIGHT_LAYOUT!r}")
    return WeightTensor.from_flat(values, oc, ic, k)


def save_weights(path, w):
    with open(path, "w") as fh:
        json.dump(weights_to_dict(w), fh)
        fh.write("\n")


def load_weights(path):
    with open(path) as fh:
        return weights_from_dict(json.load(fh))


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_points(path):
    with open(path, newline="") as fh:
        return parse_points(fh.read())


def parse_points(text):
    """Parse ``batch,fx,fy,fz,f0,...`` lines.  A first line whose leading field
    is not numeric is treated as a header; blank and ``#`` lines are skipped.

    Returns ``(batch, xyz, features)`` arrays.
    """
    rows = []
    for lineno, rec in enumerate(csv.reader(io.StringIO(text))):
        rec = [f.strip() for f in rec]
        if not rec or not rec[0] or rec[0].startswith("#"):
            continue
        if not rows and not _is_number(rec[0]):
            continue  # header
        if len(rec) < 4:
            raise FormatError(f"line {lineno + 1}: need at least batch,x,y,z")
        try:
            rows.append([float(f) for f in rec])
        except ValueError:
            raise FormatError(f"line {lineno + 1}: non-numeric field") from None
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise FormatError(f"points have inconsistent field counts {sorted(widths)}")
    if not rows:
        return np.zeros(0, np.int64), np.zeros((0, 3)), np.zeros((0, 0))
    arr = np.asarray(rows)
    batch = arr[:, 0]
    if np.any(batch != np.round(batch)):
        raise FormatError("batch ids must be integers")
    return batch.astype(np.int64), arr[:, 1:4], arr[:, 4:]


def load_config(path):
    """Read a JSON config; nested ``{"lct": {"dense_threshold": N}}`` and the
    dotted ``{"lct.dense_threshold": N}`` spellings are both accepted."""
    config = {"lct.dense_threshold": DEFAULT_DENSE_THRESHOLD}
    if path is None:
        return config
    with open(path) as fh:
        doc = json.load(fh)

    def flatten(prefix, node):
        for key, value in node.items():
            full = f"{prefix}.{key}" if prefix else key
            if isinstance(value, dict):
                flatten(full, value)
            else:
                config[full] = value

    flatten("", doc)
    threshold = config["lct.dense_threshold"]
    if not isinstance(threshold, int) or threshold < 0:
        raise FormatError(f"lct.dense_threshold must be a non-negative integer, got {threshold!r}")
    return config
