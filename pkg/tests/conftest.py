import numpy as np
import pytest

from lrg.governor import GovernorConfig, ProductNorm
from lrg.simkit import LTIPlant, analytic_steady_state_map, build_steady_state_map
from lrg.vehicle import TruckPlant

DEG = 180.0 / np.pi
# truck norm: commands in degrees, states in radians, both in units of 2 degrees
TRUCK_NORM = ProductNorm(0.5, 0.5, [0.5 * DEG] * 6)


def truck_config(L=0.3, sample_period=0.2, horizon_T=4.0, **kw):
    return GovernorConfig(holder_L=L, horizon_T=horizon_T, epsilon=0.02, sample_period=sample_period,
                          norm=TRUCK_NORM, **kw)


@pytest.fixture(scope="session")
def truck():
    return TruckPlant()


@pytest.fixture(scope="session")
def truck_map(truck):
    return build_steady_state_map(truck, np.arange(-60.0, 61.0, 1.0), dt=0.005, max_settle_time=300.0)


@pytest.fixture(scope="session")
def scalar_lti():
    """``x' = -x + nu``, ``y = x`` with ``Y = [-1, 1]``."""
    return LTIPlant(-1.0, 1.0, 1.0)


@pytest.fixture(scope="session")
def scalar_lti_map(scalar_lti):
    return analytic_steady_state_map(scalar_lti, np.linspace(-1.0, 1.0, 201))
