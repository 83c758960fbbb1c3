import numpy as np
import pytest

from apcauchy.grid import TimeGrid
from apcauchy.models import get_model
from apcauchy.solver import solve_ap, solve_dfp


@pytest.fixture(scope="session")
def semilinear_ap():
    prob = get_model("scalar-semilinear", "AP")
    return prob, solve_ap(prob)


@pytest.fixture(scope="session")
def semilinear_dfp():
    prob = get_model("scalar-semilinear", "DFP", u0=[2.0])
    return prob, solve_dfp(prob)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def short_grid():
    return TimeGrid(0.0, 10.0, 0.01)
