import pytest

from tb_stigma.model.core import Parameters, State
from tb_stigma.model.integrate import TimeGrid


@pytest.fixture
def params():
    """Reference parameters (base model, alpha = 1)."""
    return Parameters()


@pytest.fixture
def initial_state():
    """Reference initial conditions, N = 25000."""
    return State(S=18000.0, E=5500.0, I_S=700.0, I_N=400.0, T=400.0)


@pytest.fixture
def short_grid():
    """Ten years at h = 0.02, enough for the sweep tests."""
    return TimeGrid(0.0, 10.0, 500)
