import numpy as np
import pytest

from lrg.governor import Dataset, Governor, GovernorConfig, ProductNorm
from lrg.holder import lti_lipschitz_bound
from lrg.learning import SafetyFault
from lrg.scenarios import Scenario, ScheduledGovernor, dbar_surface, simulate_scenario, sine_and_dwell
from lrg.simkit import LTIPlant, analytic_steady_state_map

SUM = ProductNorm(kind="sum")


def test_sine_and_dwell_shape():
    f, amp, t0 = 0.5, 40.0, 1.0
    assert sine_and_dwell(0.5, amp, f, 0.5, t0) == 0.0
    assert sine_and_dwell(t0 + 0.5, amp, f, 0.5, t0) == pytest.approx(amp)
    # three quarters into the cycle the command reaches -amp and holds it
    assert sine_and_dwell(t0 + 1.5, amp, f, 0.5, t0) == pytest.approx(-amp)
    assert sine_and_dwell(t0 + 1.9, amp, f, 0.5, t0) == -amp
    assert sine_and_dwell(t0 + 2.0 + 0.25, amp, f, 0.5, t0) == pytest.approx(-amp * np.cos(np.pi * 0.25))
    assert sine_and_dwell(t0 + 2.6, amp, f, 0.5, t0) == 0.0


def test_sine_and_dwell_is_continuous():
    t = np.linspace(0, 5, 50001)
    s = np.array([sine_and_dwell(v, 50.0) for v in t])
    assert np.max(np.abs(np.diff(s))) < 0.05


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario(kind="slalom")
    with pytest.raises(ValueError):
        Scenario(mode="sometimes")
    with pytest.raises(ValueError):
        Scenario(speed_rate=2.0)
    assert Scenario(step=3.0, step_time=0.5).command()(1.0) == 3.0


def lightly_damped():
    return LTIPlant([[0.0, 1.0], [-1.0, -0.4]], [0.0, 1.0], [1.0, 0.0])


def test_no_governor_passes_command_through(scalar_lti, scalar_lti_map):
    res = simulate_scenario(scalar_lti, lambda t: 0.5, 3.0, 0.01, steady_map=scalar_lti_map)
    assert np.all(res.nu == 0.5)
    assert res.y[-1, 0] == pytest.approx(0.5 * (1 - np.exp(-3.0)), rel=1e-8)
    assert res.command_modification() == 0.0


def test_governor_keeps_overshooting_plant_safe():
    plant = lightly_damped()
    m = analytic_steady_state_map(plant, np.linspace(-1, 1, 201))
    cmd = lambda t: 0.9
    open_loop = simulate_scenario(plant, cmd, 20.0, 0.01, steady_map=m)
    assert open_loop.violations > 0
    L, _ = lti_lipschitz_bound(plant.A, plant.B, plant.C, plant.F)
    gov = Governor(GovernorConfig(holder_L=L, horizon_T=20.0, sample_period=0.1, norm=SUM), m, [0.0])
    res = simulate_scenario(plant, cmd, 20.0, 0.01, governor=gov, sample_period=0.1)
    assert res.violations == 0
    assert res.command_modification() > 0
    assert np.all(np.diff(res.nu) >= -1e-15)


def test_violation_under_governor_raises():
    plant = lightly_damped()
    m = analytic_steady_state_map(plant, np.linspace(-1, 1, 201))
    gov = Governor(GovernorConfig(holder_L=0.05, sample_period=0.1, norm=SUM), m, [0.0])
    with pytest.raises(SafetyFault):
        simulate_scenario(plant, lambda t: 0.9, 20.0, 0.01, governor=gov, sample_period=0.1)


def test_scheduled_governor_nearest():
    m = analytic_steady_state_map(LTIPlant(-1.0, 1.0, 1.0), np.linspace(-1, 1, 21))
    nodes = {20.0: (m, None), 25.0: (m, None), 30.0: (m, None)}
    g = ScheduledGovernor(GovernorConfig(holder_L=1.0), nodes, [0.0])
    assert g.nearest(24.0) == [25.0, 20.0]
    assert g.nearest(40.0) == [30.0, 25.0]
    with pytest.raises(ValueError):
        ScheduledGovernor(GovernorConfig(holder_L=1.0), {}, [0.0])


def test_dbar_surface_fallback_and_trained():
    c = GovernorConfig(holder_L=0.5, norm=SUM)
    ds = Dataset(1, 1)
    ds.append([0.0], [0.2], [0.0], 0.1)
    surf = dbar_surface({(20.0, 0.1): ds, (20.0, 0.5): None}, ([0.0], [0.2], [0.0]), [20.0], [0.1, 0.5], c)
    assert surf.values[0, 0] == pytest.approx(0.1)
    assert surf.values[0, 1] == pytest.approx(0.5 * 0.2)
    assert surf.trained.tolist() == [[True, False]]
    assert "conservative-extrapolation" in surf.to_csv()
