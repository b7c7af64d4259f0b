import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxelconv.errors import DuplicateCoordinate, LengthMismatch, OutOfBounds
from voxelconv.tensor import (
    GridShape,
    SparseTensor,
    from_dense,
    new_sparse_tensor,
    to_dense,
    validate,
    validate_arrays,
    voxelize,
)

SHAPE = GridShape(4, 4, 4)


def test_empty_tensor_is_valid():
    t = new_sparse_tensor(SHAPE, [[], [], [], []], [], 2)
    assert t.n == 0 and t.channels == 2
    assert validate(t) == []


def test_minimal_valid_tensor():
    t = new_sparse_tensor(SHAPE, [[0, 0], [1, 2], [1, 1], [1, 1]], [1.0, 2.0], 1)
    assert t.n == 2
    assert t.features.ravel().tolist() == [1.0, 2.0]
    assert t.indices.dtype == np.int32 and t.features.dtype == np.float32


def test_duplicate_coordinate_rejected():
    with pytest.raises(DuplicateCoordinate) as exc:
        new_sparse_tensor(SHAPE, [[0, 0], [1, 1], [1, 1], [1, 1]], [1.0, 2.0], 1)
    assert (exc.value.row_a, exc.value.row_b) == (0, 1)


def test_out_of_bounds_rejected():
    with pytest.raises(OutOfBounds) as exc:
        new_sparse_tensor(SHAPE, [[0, 0], [1, 4], [1, 1], [1, 1]], [1.0, 2.0], 1)
    assert exc.value.row == 1
    with pytest.raises(OutOfBounds):
        new_sparse_tensor(SHAPE, [[0], [-1], [0], [0]], [1.0], 1)
    with pytest.raises(OutOfBounds):
        new_sparse_tensor(SHAPE, [[1], [0], [0], [0]], [1.0], 1)


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        new_sparse_tensor(SHAPE, [[0, 0], [1, 2], [1], [1, 1]], [1.0, 2.0], 1)
    with pytest.raises(LengthMismatch):
        new_sparse_tensor(SHAPE, [[0], [1], [1], [1]], [1.0, 2.0], 1)


def test_tensor_arrays_are_read_only(two_point):
    with pytest.raises(ValueError):
        two_point.features[0, 0] = 5.0
    with pytest.raises(ValueError):
        two_point.indices[1, 0] = 3


def test_validate_reports_out_of_bounds():
    findings = validate_arrays(SHAPE, np.array([[0, 0], [1, 4], [1, 1], [1, 1]]), np.ones(2), 1)
    assert [(f.kind, f.rows) for f in findings] == [("OutOfBounds", (1,))]


def test_validate_reports_duplicate_pair():
    findings = validate_arrays(SHAPE, np.array([[0, 0, 0], [3, 1, 1], [0, 1, 1], [0, 1, 1]]), np.ones(3), 1)
    assert [(f.kind, f.rows) for f in findings] == [("DuplicateCoordinate", (1, 2))]


def test_validate_lists_every_violation():
    idx = np.array([[0, 0, 0, 0], [1, 1, 9, 1], [0, 0, 0, 0], [0, 0, 0, 0]])
    kinds = sorted(f.kind for f in validate_arrays(SHAPE, idx, np.ones(4), 1))
    assert kinds == ["DuplicateCoordinate", "DuplicateCoordinate", "OutOfBounds"]


def test_grid_shape_rejects_zero_extent():
    with pytest.raises(ValueError):
        GridShape(0, 4, 4)
    assert GridShape.parse("32,16,8").extent == (32, 16, 8)
    assert GridShape.parse("4,4,4,2").batches == 2
    assert GridShape(5, 4, 3).coarsen(2) == GridShape(3, 2, 2)


# voxelize


def test_voxelize_floor_quantization():
    t = voxelize([0], [[0.12, 0.07, 0.0]], [[1.0]], 0.05, (0, 0, 0), GridShape(8, 8, 8))
    assert t.coord(0) == (0, 2, 1, 0) or tuple(t.coord(0)) == (0, 2, 1, 0)


def test_voxelize_mean_merges_collisions():
    t = voxelize([0, 0], [[0.12, 0.07, 0.0], [0.13, 0.06, 0.01]], [[1.0], [3.0]], 0.05, (0, 0, 0),
                 GridShape(8, 8, 8), "mean")
    assert t.n == 1
    assert tuple(t.coord(0)) == (0, 2, 1, 0)
    assert t.features[0, 0] == 2.0


def test_voxelize_reducers():
    pts = [[0.1, 0.1, 0.1], [0.9, 0.1, 0.1], [0.15, 0.12, 0.11]]
    feats = [[1.0], [5.0], [3.0]]
    shape = GridShape(2, 2, 2)
    first = voxelize([0, 0, 0], pts, feats, 0.5, (0, 0, 0), shape, "first")
    summed = voxelize([0, 0, 0], pts, feats, 0.5, (0, 0, 0), shape, "sum")
    assert first.features.ravel().tolist() == [1.0, 5.0]
    assert summed.features.ravel().tolist() == [4.0, 5.0]


def test_voxelize_empty():
    t = voxelize([], np.zeros((0, 3)), np.zeros((0, 2)), 0.1, (0, 0, 0), SHAPE)
    assert t.n == 0 and t.channels == 2


def test_voxelize_out_of_bounds_names_point():
    with pytest.raises(OutOfBounds) as exc:
        voxelize([0, 0], [[0.1, 0.1, 0.1], [0.1, 0.5, 0.1]], [[1.0], [1.0]], 0.1, (0, 0, 0), SHAPE)
    assert exc.value.row == 1


def test_voxelize_origin_shift_and_canonical_order():
    t = voxelize([1, 0, 0], [[0, 0, 0], [0.3, 0, 0], [0, 0.3, 0]], np.ones((3, 1)), 0.25,
                 (-0.5, -0.5, -0.5), GridShape(4, 4, 4, 2))
    assert np.all(np.diff(t.keys()) > 0)
    assert t.indices[:, 0].tolist() == [0, 3, 2, 2]


# densification


def test_to_dense_empty_is_zero():
    g = to_dense(new_sparse_tensor(SHAPE, [[], [], [], []], [], 3))
    assert g.values.shape == (1, 4, 4, 4, 3)
    assert not g.values.any()


def test_to_dense_single_site():
    g = to_dense(new_sparse_tensor(SHAPE, [[0], [1], [1], [1]], [7.0], 1))
    assert np.count_nonzero(g.values) == 1
    assert g.values[0, 1, 1, 1, 0] == 7.0


@st.composite
def sparse_tensors(draw, nonzero=True):
    shape = GridShape(draw(st.integers(1, 6)), draw(st.integers(1, 6)), draw(st.integers(1, 6)),
                      draw(st.integers(1, 2)))
    keys = draw(st.lists(st.integers(0, shape.size - 1), unique=True, max_size=40))
    channels = draw(st.integers(1, 3))
    rng = np.random.default_rng(draw(st.integers(0, 2 ** 32 - 1)))
    feats = rng.uniform(-1, 1, (len(keys), channels)).astype(np.float32)
    if nonzero:
        feats[np.all(feats == 0, axis=1)] = 1.0
    b, z, y, x = np.unravel_index(np.array(keys, dtype=np.int64), (shape.batches, shape.max_z,
                                                                  shape.max_y, shape.max_x))
    return SparseTensor(shape, np.stack([b, x, y, z]), feats, channels)


@settings(max_examples=60, deadline=None)
@given(sparse_tensors())
def test_dense_round_trip(t):
    back = from_dense(to_dense(t))
    assert back == t.canonical()
    assert validate(t) == []


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 200), st.integers(0, 2 ** 32 - 1))
def test_voxelize_sum_preserves_mass(n, seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 1, (n, 3))
    feats = rng.uniform(-1, 1, (n, 2))
    t = voxelize(rng.integers(0, 2, n), pts, feats, 0.125, (0, 0, 0), GridShape(8, 8, 8, 2), "sum")
    np.testing.assert_allclose(t.features.astype(np.float64).sum(axis=0), feats.sum(axis=0),
                               rtol=1e-6, atol=1e-6)
    assert validate(t) == []
