import numpy as np
import pytest

from voxelconv import _accel
from voxelconv.tensor import GridShape, new_sparse_tensor

BACKENDS = ["numba", "numpy"] if _accel.HAVE_NUMBA else ["numpy"]


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run the test once per kernel backend."""
    monkeypatch.setattr(_accel, "USE_NUMBA", request.param == "numba")
    return request.param


@pytest.fixture
def two_point():
    # A=(0,(1,1,1)) row 0, B=(0,(2,1,1)) row 1 on a 4x4x4 grid
    return new_sparse_tensor(GridShape(4, 4, 4), [[0, 0], [1, 2], [1, 1], [1, 1]], [1.0, 1.0], 1)


@pytest.fixture
def three_point():
    # (0,0,0), (1,1,1), (2,0,0) in batch 0
    return new_sparse_tensor(GridShape(4, 4, 4), [[0, 0, 0], [0, 1, 2], [0, 1, 0], [0, 1, 0]],
                             [1.0, 1.0, 1.0], 1)


def bits(a):
    a = np.ascontiguousarray(a)
    return a.view(np.uint8).tobytes()
