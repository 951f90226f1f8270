import numpy as np
import pytest

from torus_hpt.field_zoo import abc_flow, sample_times, shear_flow, transport_solution
from torus_hpt.torus_dec import Form, Grid


@pytest.fixture(scope="session")
def grid16():
    return Grid(16)


@pytest.fixture(scope="session")
def grid32():
    return Grid(32)


@pytest.fixture(scope="session")
def times():
    """dt = 1/64, 9 samples."""
    return sample_times()


@pytest.fixture(scope="session")
def abc_state(grid16, times):
    return abc_flow().evaluate(grid16, times)


@pytest.fixture(scope="session")
def shear_state(grid16, times):
    return shear_flow().evaluate(grid16, times)


@pytest.fixture(scope="session")
def transport_state(grid32, times):
    return transport_solution().evaluate(grid32, times)


@pytest.fixture
def sin_x(grid16):
    return Form.from_functions(grid16, 0, [lambda x, y, z: np.sin(x)])
