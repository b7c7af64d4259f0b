import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxelconv.engine import WeightTensor
from voxelconv.errors import BadMagic, FormatError, InvariantViolation, Truncated, VersionUnsupported
from voxelconv.fileio import (
    HEADER_BYTES,
    load_config,
    load_tensor,
    load_weights,
    parse_points,
    save_tensor,
    save_weights,
    tensor_from_bytes,
    tensor_to_bytes,
    weights_from_dict,
)
from voxelconv.oracle import random_sparse_tensor, random_weights
from voxelconv.tensor import GridShape, empty_tensor, new_sparse_tensor


def test_two_row_round_trip(tmp_path, two_point):
    path = tmp_path / "t.spt"
    save_tensor(path, two_point)
    assert load_tensor(path) == two_point
    assert path.stat().st_size == 4 + 7 * 4 + 2 * 16 + 2 * 4


def test_layout_is_little_endian(two_point):
    data = tensor_to_bytes(two_point)
    assert data[:4] == b"SPT1"
    assert struct.unpack_from("<7I", data, 4) == (1, 1, 2, 1, 4, 4, 4)
    assert np.frombuffer(data, "<i4", 8, HEADER_BYTES).tolist() == [0, 0, 1, 2, 1, 1, 1, 1]
    assert np.frombuffer(data, "<f4", 2, HEADER_BYTES + 32).tolist() == [1.0, 1.0]


def test_empty_file_is_header_only(tmp_path):
    path = tmp_path / "e.spt"
    save_tensor(path, empty_tensor(GridShape(4, 4, 4), 3))
    assert path.stat().st_size == 32
    t = load_tensor(path)
    assert t.n == 0 and t.channels == 3


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 5), st.floats(0.01, 1.0))
def test_round_trip_property(seed, channels, density):
    t = random_sparse_tensor(seed, GridShape(5, 6, 7, 2), density, channels)
    data = tensor_to_bytes(t)
    back = tensor_from_bytes(data)
    assert back == t
    assert tensor_to_bytes(back) == data


def test_malformed_files(two_point):
    data = tensor_to_bytes(two_point)
    with pytest.raises(BadMagic):
        tensor_from_bytes(b"XPT1" + data[4:])
    with pytest.raises(BadMagic):
        tensor_from_bytes(b"")
    with pytest.raises(VersionUnsupported):
        tensor_from_bytes(data[:4] + struct.pack("<I", 2) + data[8:])
    with pytest.raises(Truncated):
        tensor_from_bytes(data[:20])
    with pytest.raises(Truncated):
        tensor_from_bytes(data[:-1])
    with pytest.raises(FormatError):
        tensor_from_bytes(data + b"\0")


def test_invariant_violations_on_load():
    dup = new_sparse_tensor(GridShape(4, 4, 4), [[0, 0], [1, 2], [1, 1], [1, 1]], [1.0, 2.0], 1)
    data = bytearray(tensor_to_bytes(dup))
    data[HEADER_BYTES + 12] = 1  # second x: 2 -> 1
    with pytest.raises(InvariantViolation) as exc:
        tensor_from_bytes(bytes(data))
    assert exc.value.findings[0].kind == "DuplicateCoordinate"
    assert exc.value.findings[0].rows == (0, 1)

    data = bytearray(tensor_to_bytes(dup))
    data[HEADER_BYTES + 12] = 9
    with pytest.raises(InvariantViolation) as exc:
        tensor_from_bytes(bytes(data))
    assert exc.value.findings[0].rows == (1,)

    zero_extent = bytearray(tensor_to_bytes(dup))
    zero_extent[20:24] = b"\0\0\0\0"
    with pytest.raises(InvariantViolation):
        tensor_from_bytes(bytes(zero_extent))


def test_weights_round_trip(tmp_path):
    w = random_weights(3, 4, 2, 3)
    path = tmp_path / "w.json"
    save_weights(path, w)
    doc = json.loads(path.read_text())
    assert doc["layout"] == "oc_koff_ic" and len(doc["values"]) == 4 * 27 * 2
    assert load_weights(path) == w


def test_weights_errors():
    with pytest.raises(FormatError):
        weights_from_dict({"out_channels": 1, "in_channels": 1})
    with pytest.raises(FormatError):
        weights_from_dict({"out_channels": 1, "in_channels": 1, "kernel": 1, "values": [1], "layout": "ic_oc"})
    with pytest.raises(Exception):
        weights_from_dict({"out_channels": 1, "in_channels": 1, "kernel": 3, "values": [1]})
    w = weights_from_dict({"out_channels": 1, "in_channels": 1, "kernel": 1, "values": [2.5]})
    assert w == WeightTensor(np.full((1, 1, 1), 2.5))


def test_parse_points():
    batch, xyz, feats = parse_points("batch,x,y,z,f0\n# comment\n0,0.1,0.2,0.3,1.5\n\n1,1,2,3,-2\n")
    assert batch.tolist() == [0, 1]
    assert xyz.tolist() == [[0.1, 0.2, 0.3], [1, 2, 3]]
    assert feats.tolist() == [[1.5], [-2.0]]
    batch, xyz, feats = parse_points("")
    assert batch.size == 0 and feats.shape == (0, 0)
    with pytest.raises(FormatError):
        parse_points("0,1,2\n")
    with pytest.raises(FormatError):
        parse_points("0,1,2,3,4\n0,1,2,3\n")
    with pytest.raises(FormatError):
        parse_points("0.5,1,2,3\n")


def test_load_config(tmp_path):
    assert load_config(None)["lct.dense_threshold"] == 1 << 26
    p = tmp_path / "c.json"
    p.write_text('{"lct": {"dense_threshold": 1000}}')
    assert load_config(p)["lct.dense_threshold"] == 1000
    p.write_text('{"lct.dense_threshold": 5}')
    assert load_config(p)["lct.dense_threshold"] == 5
    p.write_text('{"lct": {"dense_threshold": "big"}}')
    with pytest.raises(FormatError):
        load_config(p)
