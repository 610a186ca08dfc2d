import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lrg.simkit import build_steady_state_map
from lrg.vehicle import (G, ModelSingularityError, ParameterError, PendulumParams, TireParams, TruckPlant,
                         VehicleParams, VehicleState, derive, dump_vehicle_params, ltr, pendulum_coupling_block,
                         pendulum_energy, pendulum_free_derivatives, pendulum_params, rest_state,
                         simulate_free_pendulum, slosh_force, tire_force, tire_sideslip,
                         unused_equation_residual, vehicle_derivatives)
from lrg.vehicle.params import params_from_mapping, parse_config

ZEROS8 = (0.0,) * 8


# ---------------------------------------------------------------- pendulum parameters

def test_pendulum_params_constant_polynomials():
    p = pendulum_params(0.4, 1.0, 1.0, 2000.0, (0.5,) + ZEROS8, (0.5,) + ZEROS8)
    assert (p.m_p, p.m_f, p.b_p, p.a_p) == (1000.0, 1000.0, 0.5, 0.5)


@given(st.floats(0.01, 0.99), st.floats(0.5, 2.0), st.floats(0.0, 5000.0))
def test_pendulum_mass_split_is_exact(fill, aspect, m_l):
    p = pendulum_params(fill, 1.0, aspect, m_l, VehicleParams().pend_m, VehicleParams().pend_b)
    assert p.m_f + p.m_p == pytest.approx(m_l, rel=1e-15, abs=1e-12)
    assert p.a_p == pytest.approx(aspect * p.b_p)


def test_pendulum_params_rejects_bad_inputs():
    with pytest.raises(ParameterError):
        pendulum_params(1.0, 1.0, 1.0, 100.0, (0.5,) + ZEROS8, (0.5,) + ZEROS8)
    with pytest.raises(ParameterError):
        pendulum_params(0.5, 1.0, 1.0, 100.0, (1.5,) + ZEROS8, (0.5,) + ZEROS8)
    with pytest.raises(ParameterError):
        pendulum_params(0.5, 1.0, 1.0, 100.0, (0.5,) + ZEROS8, (-0.5,) + ZEROS8)


def test_frequency_rises_with_fill_for_circular_tank():
    # b_p / b decreasing in fill ratio; circular tank gives omega = sqrt(g / b_p)
    vp = VehicleParams()
    w = [pendulum_params(f, 1.0, 1.0, 2000.0, vp.pend_m, vp.pend_b).natural_frequency for f in (0.3, 0.7)]
    assert w[0] < w[1]


# ---------------------------------------------------------------- free pendulum

def test_free_pendulum_rest_is_equilibrium():
    p = PendulumParams(0.0, 1.0, 0.8, 0.5)
    assert pendulum_free_derivatives(-math.pi / 2, 0.0, p) == (0.0, pytest.approx(0.0, abs=1e-15))


def test_free_pendulum_circular_limit():
    p = PendulumParams(0.0, 1.0, 0.6, 0.6)
    assert pendulum_free_derivatives(0.0, 0.0, p)[1] == pytest.approx(-G / 0.6)
    th = 0.3
    assert pendulum_free_derivatives(th, 0.0, p)[1] == pytest.approx(-G / 0.6 * math.cos(th))


def test_free_pendulum_degenerate():
    with pytest.raises(ValueError):
        pendulum_free_derivatives(0.0, 0.0, PendulumParams(0.0, 1.0, 0.0, 0.0))


def _zero_crossing_frequency(t, theta):
    s = theta + math.pi / 2
    idx = np.flatnonzero((s[:-1] < 0) & (s[1:] >= 0))
    # linear interpolation of upward crossings
    tc = t[idx] - s[idx] * (t[idx + 1] - t[idx]) / (s[idx + 1] - s[idx])
    return 2 * math.pi / np.mean(np.diff(tc))


@pytest.mark.parametrize("a_p,b_p", [(0.8, 0.5), (0.5, 0.5), (0.4, 0.9)])
def test_small_oscillation_frequency(a_p, b_p):
    p = PendulumParams(0.0, 1.0, a_p, b_p)
    tr = simulate_free_pendulum(-math.pi / 2 + 1e-3, 0.0, p, 30.0, dt=1e-3)
    w = _zero_crossing_frequency(tr[:, 0], tr[:, 1])
    assert w == pytest.approx(math.sqrt(G * b_p) / a_p, rel=1e-2)


def test_energy_conserved_over_60s():
    p = PendulumParams(0.0, 1.0, 0.9, 0.55)
    tr = simulate_free_pendulum(-math.pi / 2 + 0.6, 0.0, p, 60.0)
    e = pendulum_energy(tr[:, 1], tr[:, 2], p)
    assert np.max(np.abs(e - e[0])) / abs(e[0]) < 1e-6


# ---------------------------------------------------------------- tires and slosh force

def test_tire_sideslip_examples():
    vp = VehicleParams()
    assert tire_sideslip(0.0, 0.0, 0.0, vp) == (0.0, 0.0)
    af, ar = tire_sideslip(0.1, 0.0, 0.0, vp)
    assert (af, ar) == (pytest.approx(0.1), 0.0)
    _, ar = tire_sideslip(0.0, 0.01, 0.1, vp)
    assert ar == pytest.approx(-math.atan((0.25 - 0.175) / 25.0))
    assert ar == pytest.approx(-math.atan(0.003))


def test_tire_force_examples():
    tp = TireParams(10.0, 1.9, 5000.0, 0.97)
    assert tire_force(0.0, tp) == 0.0
    a = 1e-5
    assert tire_force(a, tp) == pytest.approx(tp.B * tp.C * tp.D * a, rel=1e-6)


@given(st.floats(-10, 10))
def test_tire_force_bounded(alpha):
    tp = TireParams(10.0, 1.9, 5000.0, 0.97)
    assert abs(tire_force(alpha, tp)) <= tp.D


def test_slosh_force_examples():
    p = PendulumParams(0.0, 500.0, 0.8, 0.5)
    th = np.full(10, -math.pi / 2)
    assert slosh_force(th, np.zeros(10), np.zeros(10), p) == 0.0
    assert slosh_force(th + 0.2, np.ones(10), np.ones(10), PendulumParams(0.0, 0.0, 0.8, 0.5)) == 0.0
    with pytest.raises(ValueError):
        slosh_force([], [], [], p)


def test_slosh_force_small_release():
    p = PendulumParams(0.0, 500.0, 0.7, 0.7)
    phi0 = 0.01
    tr = simulate_free_pendulum(-math.pi / 2 + phi0, 0.0, p, 10.0, dt=1e-3)
    # to first order the force is m_p a_p theta_dot, peaking at m_p a_p omega phi0
    w = p.natural_frequency
    assert slosh_force(tr[:, 1], tr[:, 2], tr[:, 3], p) == pytest.approx(p.m_p * p.a_p * w * phi0, rel=0.01)


# ---------------------------------------------------------------- load transfer ratio

def test_ltr_examples():
    vp = VehicleParams()
    assert vp.mass == 4000.0
    assert ltr(VehicleState(0.0, 0.0), vp) == 0.0
    got = ltr(np.array([0.01, 0, 0, 0, -math.pi / 2, 0]), vp)
    assert got == pytest.approx(-2 * 957.07 / (4000 * 9.81 * 2.0), rel=1e-12)
    assert got == pytest.approx(-0.02439, abs=1e-5)
    assert ltr(np.array([[0.1, 0, 0, 0, 0, 0]]), vp)[0] < 0


# ---------------------------------------------------------------- coupled dynamics

def test_rest_state_is_fixed_point():
    for vp in (VehicleParams(), VehicleParams(m_l=0.0), VehicleParams().with_fill_ratio(0.8)):
        xdot = vehicle_derivatives(rest_state(), 0.0, vp)
        assert np.max(np.abs(xdot)) < 1e-12


def test_mass_matrix_coupling_is_symmetric():
    rng = np.random.default_rng(0)
    vp = VehicleParams()
    for _ in range(50):
        x = np.array([rng.normal(0, 0.05), rng.normal(0, 0.1), rng.normal(0, 0.02), rng.normal(0, 0.1),
                      -math.pi / 2 + rng.normal(0, 0.5), rng.normal(0, 0.5)])
        blk = pendulum_coupling_block(x, vp)
        assert blk[0, 1] == pytest.approx(blk[1, 0], rel=1e-10, abs=1e-10)


def test_unused_equation_residual_at_rest():
    vp = VehicleParams()
    x = rest_state()
    assert abs(unused_equation_residual(x, vehicle_derivatives(x, 0.0, vp), vp)) < 1e-9


def test_singular_configuration_raises():
    # zero-size pendulum with mass makes the theta row of the mass matrix vanish
    vp = VehicleParams(pend_b=(1e-30,) + ZEROS8)
    with pytest.raises((ModelSingularityError, ParameterError)):
        vehicle_derivatives(rest_state(), 0.0, vp)


def _settle(vp, sw_deg, T=80.0):
    plant = TruckPlant(vp)
    tr = plant.simulate(rest_state(), [sw_deg], T, 0.005)
    return tr


def test_no_load_step_converges():
    tr = _settle(VehicleParams(m_l=0.0), math.degrees(0.4), T=20.0)
    tail = tr.x[tr.t > tr.t[-1] - 1.0, :4]
    final = tr.x[-1, :4]
    assert np.all(np.ptp(tail, axis=0) < 1e-4 * np.maximum(np.abs(final), 1e-3))


def _time_to_settle(tr, tol=1e-3):
    phi = tr.x[:, 0]
    band = tol * abs(phi[-1])
    outside = np.flatnonzero(np.abs(phi - phi[-1]) > band)
    return tr.t[outside[-1]] if outside.size else 0.0


def test_liquid_load_settles_slower():
    vp = VehicleParams()
    t_liq = _time_to_settle(_settle(vp, 10.0))
    t_no = _time_to_settle(_settle(vp.replace(m_l=0.0), 10.0))
    t_solid = _time_to_settle(_settle(vp.solid_load(), 10.0))
    assert t_liq > t_no and t_liq > t_solid


@pytest.mark.parametrize("variant", ["liquid", "none", "solid"])
def test_steady_yaw_rate_increases_with_steering(variant):
    vp = VehicleParams()
    vp = {"liquid": vp, "none": vp.replace(m_l=0.0), "solid": vp.solid_load()}[variant]
    plant = TruckPlant(vp)
    m = build_steady_state_map(plant, [0.0, 10.0, 20.0, 30.0], dt=0.005, max_settle_time=300)
    assert np.all(m.usable)
    yaw, roll, slip = m.states[:, 3], m.states[:, 0], m.states[:, 2]
    assert np.all(np.diff(yaw) > 0)
    assert np.all(np.diff(np.abs(roll)) > 0) and np.all(np.diff(np.abs(slip)) > 0)


def test_truck_plant_output_is_ltr():
    plant = TruckPlant()
    x = np.array([0.02, -0.1, 0.0, 0.0, -math.pi / 2, 0.0])
    assert plant.output(x, [0.0])[0] == pytest.approx(ltr(x, plant.params))
    assert plant.delta_f([20.0]) == pytest.approx(math.radians(20.0) / 20.0)


# ---------------------------------------------------------------- parameter files

def test_params_round_trip_and_unknown_keys():
    vp = VehicleParams(V=22.0, W=1.9)
    back = params_from_mapping(parse_config(dump_vehicle_params(vp)))
    assert back == vp
    with pytest.raises(ParameterError):
        params_from_mapping({"wheel_count": "6"})
    with pytest.raises(ParameterError):
        parse_config("V = 1\nV = 2\n")
    with pytest.raises(ParameterError):
        VehicleParams(fill_ratio=1.2)


def test_fill_ratio_scaling_keeps_full_mass():
    vp = VehicleParams()
    half = vp.with_fill_ratio(0.5)
    assert half.m_l == pytest.approx(vp.m_l)
    assert vp.with_fill_ratio(0.9).m_l > vp.m_l > vp.with_fill_ratio(0.1).m_l
    assert derive(vp.with_fill_ratio(0.9)).pend.m_p >= 0
