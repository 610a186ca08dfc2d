import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lrg.governor import Dataset, Governor, GovernorConfig, ProductNorm, dbar_estimate
from lrg.holder import lti_lipschitz_bound
from lrg.learning import (LearningConfig, SafetyFault, measure_dtilde, prune_dataset, run_learning,
                          tracking_error_ma)
from lrg.simkit import LTIPlant, analytic_steady_state_map

SUM = ProductNorm(kind="sum")


def lti_governor(m, L=2.0, ts=0.5, T=8.0, eps=0.01, nu0=0.0, norm=SUM):
    c = GovernorConfig(holder_L=L, horizon_T=T, epsilon=eps, sample_period=ts, norm=norm)
    return Governor(c, m, [nu0])


def scalar_D(dnu, dx):
    """Exact deviation functional of x' = -x + nu, y = x: sup_t |dnu + (dx - dnu) e^-t|."""
    return max(abs(dnu), abs(dx))


# ---------------------------------------------------------------- measure_dtilde

def test_dtilde_at_equilibrium_is_epsilon(scalar_lti):
    assert measure_dtilde(scalar_lti, [0.3], [0.0], [0.3], 5.0, 0.01) == pytest.approx(0.01, abs=1e-15)


def test_dtilde_unit_step(scalar_lti):
    # y(t) = 1 - e^-t, sup on [0, 5] at t = 5
    got = measure_dtilde(scalar_lti, [0.0], [1.0], [0.0], 5.0, 0.01)
    assert got == pytest.approx(1.0 - math.exp(-5.0) + 0.01, abs=1e-7)
    assert got == pytest.approx(1.00326, abs=1e-5)


def test_dtilde_state_offset(scalar_lti):
    # y(t) = e^-t, sup at t = 0
    assert measure_dtilde(scalar_lti, [0.0], [0.0], [1.0], 5.0, 0.01) == pytest.approx(1.01, abs=1e-12)


def test_dtilde_uses_old_reference(scalar_lti):
    # step from 0.5 to 0.5: no deviation from y(0.5) even though y is far from 0
    assert measure_dtilde(scalar_lti, [0.5], [0.0], [0.5], 3.0, 0.0) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_dtilde_two_sided_bound(nu, dnu, dx):
    plant = LTIPlant(-1.0, 1.0, 1.0)
    eps, T = 0.01, 12.0
    dt = measure_dtilde(plant, [nu], [dnu], [nu + dx], T, eps, dt=0.01)
    D = scalar_D(dnu, dx)
    assert D <= dt + 1e-12
    assert dt <= D + eps + 1e-9


# ---------------------------------------------------------------- tracking error

def test_tracking_error_zero_and_constant():
    t = np.linspace(0, 10, 11)
    assert tracking_error_ma(t, np.zeros(11), 10.0, 10.0) == 0.0
    assert tracking_error_ma(t, np.full(11, 0.7), 10.0, 10.0) == pytest.approx(0.7)


def test_tracking_error_half_window():
    # piecewise constant gap: repeated time stamp encodes the jump
    t = [0.0, 5.0, 5.0, 10.0]
    g = [1.0, 1.0, 0.0, 0.0]
    assert tracking_error_ma(t, g, 10.0, 10.0) == pytest.approx(0.5)


def test_tracking_error_partial_history_flag():
    t = np.linspace(0, 4, 5)
    value, complete = tracking_error_ma(t, np.ones(5), 10.0, 4.0, with_flag=True)
    assert value == pytest.approx(1.0) and not complete
    _, complete = tracking_error_ma(np.linspace(0, 10, 11), np.ones(11), 10.0, 10.0, with_flag=True)
    assert complete


# ---------------------------------------------------------------- configuration

def test_learning_config_validation():
    with pytest.raises(ValueError):
        LearningConfig(n_max=0)
    with pytest.raises(ValueError):
        LearningConfig(moving_window_T=0.0)
    with pytest.raises(ValueError):
        LearningConfig(command_source="profile")
    with pytest.raises(ValueError):
        LearningConfig(prune_cell_diameter=-1.0)


# ---------------------------------------------------------------- learning loop

def test_one_command_three_samples(scalar_lti_map):
    plant = LTIPlant(-1.0, 1.0, 1.0)
    rep = run_learning(plant, lti_governor(scalar_lti_map), LearningConfig(n_max=1, k_max=3, dt=0.01))
    assert len(rep.dataset) == 3
    assert len(rep.log["t"]) == 3 and rep.trace.shape == (3, 3)


def test_rejects_inadmissible_start(scalar_lti_map):
    plant = LTIPlant(-1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        run_learning(plant, lti_governor(scalar_lti_map, nu0=1.0), LearningConfig(n_max=1, k_max=1))


def test_underestimated_L_raises_safety_fault():
    # lightly damped second-order loop overshoots a large step
    plant = LTIPlant([[0.0, 1.0], [-1.0, -0.4]], [0.0, 1.0], [1.0, 0.0])
    m = analytic_steady_state_map(plant, np.linspace(-1, 1, 201))
    gov = lti_governor(m, L=0.05, norm=ProductNorm())
    with pytest.raises(SafetyFault) as info:
        run_learning(plant, gov, LearningConfig(n_max=2, k_max=5, command_source="profile",
                                                profile=(0.9, -0.9), dt=0.01))
    assert abs(info.value.output[0]) > 1.0


def test_profile_outside_range_rejected(scalar_lti_map):
    plant = LTIPlant(-1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        run_learning(plant, lti_governor(scalar_lti_map),
                     LearningConfig(n_max=1, k_max=1, command_source="profile", profile=(50.0,)))


def test_uniform_commands_are_seeded(scalar_lti_map):
    plant = LTIPlant(-1.0, 1.0, 1.0)
    lc = LearningConfig(n_max=5, k_max=4, rng_seed=7, dt=0.01)
    a = run_learning(plant, lti_governor(scalar_lti_map), lc)
    b = run_learning(plant, lti_governor(scalar_lti_map), lc)
    assert np.array_equal(a.dataset.d_tilde, b.dataset.d_tilde)
    assert all(np.all(np.abs(c) <= 1) for c in a.commands)


@pytest.fixture(scope="module")
def lti_run(scalar_lti_map):
    plant = LTIPlant(-1.0, 1.0, 1.0)
    L, _ = lti_lipschitz_bound(-1.0, 1.0, 1.0, 0.0)
    gov = lti_governor(scalar_lti_map, L=L)
    rng = np.random.default_rng(11)
    probes = [(rng.uniform(-0.8, 0.8, 1), rng.uniform(-0.8, 0.8, 1), rng.uniform(-0.2, 0.2, 1)) for _ in range(20)]
    lc = LearningConfig(n_max=60, k_max=20, command_source="profile", profile=(0.8, -0.8),
                        moving_window_T=100.0, dt=0.01)
    return run_learning(plant, gov, lc, probes=probes), lc


def test_lti_learning_is_safe_and_converges(lti_run):
    rep, lc = lti_run
    assert rep.constraint_violations == 0
    assert rep.log["y_abs_max"].max() <= 1.0
    err = rep.trace[rep.trace[:, 2] > 0, 1]
    # one value per profile cycle (two commands)
    per_cycle = err[:: 2 * lc.k_max]
    assert np.all(np.diff(per_cycle) <= 0)
    assert err[-1] < err[0]


def test_probe_bounds_non_increasing_during_run(lti_run):
    rep, _ = lti_run
    pb = rep.log["probe_dbar"]
    assert np.all(pb >= 0)
    assert np.all(np.diff(pb, axis=0) <= 0)


def test_dbar_sound_on_lti(lti_run):
    rep, _ = lti_run
    c = GovernorConfig(holder_L=2.0, norm=SUM)
    rng = np.random.default_rng(5)
    for _ in range(300):
        nu, dnu, dx = rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), rng.uniform(-0.3, 0.3)
        assert dbar_estimate(rep.dataset, [nu], [dnu], [dx], c) >= scalar_D(dnu, dx) - 1e-12


def test_log_csv_columns(lti_run):
    rep, _ = lti_run
    head = rep.log_csv().splitlines()[0].split(",")
    assert head[:6] == ["t", "command", "r", "nu_minus", "nu", "kappa"]
    assert rep.trace_csv().splitlines()[0] == "t,tracking_error,complete_window"


# ---------------------------------------------------------------- pruning

def test_prune_identical_points():
    ds = Dataset(1, 1)
    ds.append([0.1], [0.2], [0.0], 0.5)
    ds.append([0.1], [0.2], [0.0], 0.3)
    out = prune_dataset(ds, 0.1, ProductNorm())
    assert len(out) == 1 and out.d_tilde[0] == 0.3


def test_prune_zero_diameter_is_identity():
    ds = Dataset(1, 1)
    for k in range(5):
        ds.append([k * 0.1], [0.0], [0.0], 0.1)
    out = prune_dataset(ds, 0.0, ProductNorm())
    assert np.array_equal(out.nu, ds.nu) and out is not ds
    with pytest.raises(ValueError):
        prune_dataset(ds, -0.1, ProductNorm())


@pytest.mark.parametrize("kind", ["max", "sum"])
def test_prune_cells_respect_diameter(kind):
    rng = np.random.default_rng(2)
    norm = ProductNorm(1.5, 0.7, [1.0, 3.0], kind=kind)
    ds = Dataset(1, 2)
    for _ in range(600):
        ds.append(rng.uniform(-1, 1, 1), rng.uniform(-1, 1, 1), rng.uniform(-1, 1, 2), rng.uniform(0, 1))
    m = 1.5
    out = prune_dataset(ds, m, norm)
    assert 0 < len(out) < len(ds)
    # every removed point has a survivor within m that has no larger d_tilde
    for i in range(len(ds)):
        dist = norm.full(ds.nu[i] - out.nu, ds.delta_nu[i] - out.delta_nu, ds.delta_x[i] - out.delta_x)
        close = dist <= m + 1e-12
        assert np.any(close & (out.d_tilde <= ds.d_tilde[i]))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([0.05, 0.1, 0.5]), st.sampled_from([1.0, 2.0]))
def test_prune_sandwich(seed, m, beta):
    rng = np.random.default_rng(seed)
    c = GovernorConfig(holder_L=0.8, holder_beta=beta, epsilon=0.01,
                       norm=ProductNorm(1.0, 2.0, [1.0, 0.5], kind=rng.choice(["max", "sum"])))
    ds = Dataset(1, 2)
    for _ in range(500):
        ds.append(rng.uniform(-1, 1, 1), rng.uniform(-1, 1, 1), rng.uniform(-1, 1, 2), rng.uniform(0.01, 1))
    out = prune_dataset(ds, m, c.norm)
    slack = 2 * c.holder_L * m ** (1 / beta) + c.epsilon
    for _ in range(200):
        q = (rng.uniform(-1, 1, 1), rng.uniform(-1, 1, 1), rng.uniform(-1, 1, 2))
        pre, post = dbar_estimate(ds, *q, c), dbar_estimate(out, *q, c)
        assert pre <= post <= pre + slack
