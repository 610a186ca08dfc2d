import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lrg.simkit import (FunctionPlant, IntegrationFault, LTIPlant, SteadyStateMap, analytic_steady_state_map,
                        box_distance, build_steady_state_map, distance_to_boundary, integrate_step, steps_for)


def decay_plant():
    return FunctionPlant(lambda x, nu: -x + nu, lambda x, nu: x, 1, nu_bounds=(-1, 1), y_bounds=(-1, 1))


# ---------------------------------------------------------------- integration

def test_rk4_is_fourth_order():
    plant = decay_plant()
    errs = []
    for dt in (0.1, 0.05):
        x = plant.simulate([1.0], [0.0], 2.0, dt).x[-1, 0]
        errs.append(abs(x - math.exp(-2.0)))
    assert 14.0 <= errs[0] / errs[1] <= 18.0


def test_lti_fast_path_matches_generic_rk4():
    A = [[0.0, 1.0], [-2.0, -0.5]]
    lti = LTIPlant(A, [0.0, 1.0], [1.0, 0.0])
    fp = FunctionPlant(lambda x, nu: np.asarray(A) @ x + np.array([0.0, 1.0]) * nu[0], lambda x, nu: x[:1], 2)
    a = lti.simulate([0.3, -0.1], [0.4], 5.0, 0.01)
    b = fp.simulate([0.3, -0.1], [0.4], 5.0, 0.01)
    assert np.allclose(a.x, b.x, rtol=1e-12, atol=1e-13)
    assert np.allclose(a.y[:, 0], b.x[:, 0], atol=1e-13)


def test_steps_for():
    assert steps_for(1.0, 0.1) == 10
    with pytest.raises(ValueError):
        steps_for(1.0, 0.3)
    with pytest.raises(ValueError):
        steps_for(0.0, 0.1)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_state_raises():
    plant = FunctionPlant(lambda x, nu: x**2, lambda x, nu: x, 1)
    with pytest.raises(IntegrationFault) as info:
        plant.simulate([1e200], [0.0], 1.0, 0.1)
    assert info.value.state is not None
    with pytest.raises(ValueError):
        integrate_step(plant, [0.0], [0.0], 0.0)


def test_box_distance():
    assert box_distance([0.2], -1.0, 1.0) == pytest.approx(0.8)
    assert box_distance([0.5, -0.9], [-1, -1], [1, 1]) == pytest.approx(0.1)
    assert box_distance([1.5], -1.0, 1.0) == 0.0


# ---------------------------------------------------------------- steady-state maps

def test_analytic_lti_map(scalar_lti_map):
    m = scalar_lti_map
    assert m.distance(0.0) == pytest.approx(1.0)
    assert m.distance(0.25) == pytest.approx(0.75)
    assert distance_to_boundary(m, -0.5) == pytest.approx(0.5)
    assert m.state(0.3)[0] == pytest.approx(0.3)


def test_swept_map_matches_analytic(scalar_lti):
    grid = np.linspace(-0.9, 0.9, 7)
    swept = build_steady_state_map(scalar_lti, grid, dt=0.05)
    exact = analytic_steady_state_map(scalar_lti, grid)
    assert np.all(swept.usable)
    assert np.allclose(swept.states, exact.states, atol=1e-7)
    assert np.allclose(swept.distances, exact.distances, atol=1e-7)


def test_interpolation_modes():
    kw = dict(nodes=[0.0, 1.0], states=[[0.0], [1.0]], outputs=[[0.0], [1.0]], distances=[1.0, 0.5])
    assert SteadyStateMap(**kw).distance(0.5) == pytest.approx(0.75)
    assert SteadyStateMap(**kw, mode="conservative").distance(0.5) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        SteadyStateMap(**kw, mode="cubic")
    with pytest.raises(ValueError):
        SteadyStateMap(**kw).distance(1.5)


def test_unusable_nodes_refused():
    m = SteadyStateMap([0.0, 1.0, 2.0], np.zeros((3, 1)), np.zeros((3, 1)), [1.0, 0.0, 1.0],
                       usable=[True, False, True])
    assert m.contains(0.0) and not m.contains(0.5) and not m.contains(1.0)
    assert not m.path_usable(0.0, 2.0)
    assert m.path_usable(2.0, 2.0)
    with pytest.raises(ValueError):
        m.distance(1.5)


def test_map_csv_round_trip(scalar_lti_map):
    back = SteadyStateMap.from_csv(scalar_lti_map.to_csv())
    for name in ("nodes", "states", "outputs", "distances", "usable"):
        assert np.array_equal(getattr(back, name), getattr(scalar_lti_map, name))


@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_conservative_never_exceeds_linear(a, b):
    lin = analytic_steady_state_map(LTIPlant(-1.0, 1.0, 1.0), np.linspace(-1, 1, 9))
    con = SteadyStateMap(lin.nodes, lin.states, lin.outputs, lin.distances, mode="conservative")
    for nu in (a, b):
        assert con.distance(nu) <= lin.distance(nu) + 1e-15


# ---------------------------------------------------------------- truck equilibria

def test_truck_map_is_odd_symmetric(truck_map):
    m = truck_map
    ok = np.flatnonzero(m.usable)
    mirror = np.array([np.flatnonzero(m.nodes == -m.nodes[k])[0] for k in ok])
    assert np.all(m.usable[mirror])
    assert np.allclose(m.distances[ok], m.distances[mirror], atol=1e-6)
    # roll, roll rate, sideslip and yaw rate flip sign; the pendulum reflects about the downward vertical
    assert np.allclose(m.states[ok, :4], -m.states[mirror, :4], atol=1e-6)
    assert np.allclose(m.states[ok, 4] + math.pi / 2, -(m.states[mirror, 4] + math.pi / 2), atol=1e-6)


def test_truck_map_equilibria_are_fixed_points(truck, truck_map):
    m = truck_map
    for k in np.flatnonzero(m.usable)[::10]:
        assert np.linalg.norm(truck.derivatives(m.states[k], [m.nodes[k]])) < 1e-8
    assert m.distance(0.0) == pytest.approx(1.0)
    assert m.max_adjacent_jump() < 0.05
