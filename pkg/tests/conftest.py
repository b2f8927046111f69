import numpy as np
import pytest

from xbarsim.crossbar import CrossbarSpec, random_pattern
from xbarsim.devices import CellGrid, LinearDeviceParams, NonlinearDeviceParams, VariationSpec


@pytest.fixture
def linear_base():
    return LinearDeviceParams()


@pytest.fixture
def nonlinear_base():
    return NonlinearDeviceParams()


@pytest.fixture
def no_variation():
    return VariationSpec(relative_sigma=0.0, seed=0)


@pytest.fixture
def small_spec():
    return CrossbarSpec(rows=8, cols=8, r_wire=10.0)


def make_array(rows, cols, base, sigma=0.10, seed=0, p=0.5):
    """Sampled cells plus a random stored pattern for one trial."""
    rng = np.random.default_rng(seed)
    pattern = random_pattern(rows, cols, rng, p)
    cells = CellGrid.sample(rows, cols, base, VariationSpec(sigma, seed))
    return cells, pattern


@pytest.fixture
def make_trial():
    return make_array
