"""Closed-loop scenarios with and without the governor, and the speed/fill D-bar surface."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .governor import Dataset, Governor, GovernorConfig, apply_update, compute_kappa, dbar_estimate
from .learning import SafetyFault
from .simkit import steps_for

SCENARIO_KINDS = ("step", "sine_and_dwell", "learning_run", "speed_profile_run", "dbar_surface")
MODES = ("no_lrg", "before", "after")
# documented envelope of speed-ramp rates (m/s^2)
RAMP_LIMITS = (-3.0, 1.0)


def step_command(t, value, t_step=0.0):
    return value if t >= t_step else 0.0


def sine_and_dwell(t, amplitude, frequency=0.7, dwell=0.5, t_start=1.0):
    """Sine steer held for ``dwell`` seconds at its second (negative) peak.

    The sine runs for three quarters of a cycle, holds ``-amplitude`` for the
    dwell, then completes the last quarter cycle back to zero.
    """
    period = 1.0 / frequency
    s = t - t_start
    if s < 0:
        return 0.0
    three_q = 0.75 * period
    if s < three_q:
        return amplitude * math.sin(2 * math.pi * frequency * s)
    if s < three_q + dwell:
        return -amplitude
    s -= dwell
    if s < period:
        return amplitude * math.sin(2 * math.pi * frequency * s)
    return 0.0


@dataclass(frozen=True)
class Scenario:
    """One closed-loop experiment.

    ``mode`` selects no governor, a governor with an empty dataset
    (``"before"``) or one with a learned dataset (``"after"``).
    """

    kind: str = "step"
    mode: str = "no_lrg"
    plant: str = "truck"
    step: float = 25.0
    step_time: float = 1.0
    amplitude: float = 50.0
    frequency: float = 0.7
    dwell: float = 0.5
    start: float = 1.0
    duration: float = 10.0
    dt: float = 1e-3
    speed_rate: float = 0.0
    fill_ratio: float | None = None

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if not RAMP_LIMITS[0] <= self.speed_rate <= RAMP_LIMITS[1]:
            raise ValueError(f"speed ramp {self.speed_rate} outside {RAMP_LIMITS}")
        if not (self.duration > 0 and self.dt > 0):
            raise ValueError("duration and dt must be positive")

    def command(self):
        if self.kind == "sine_and_dwell" or (self.kind == "speed_profile_run"):
            return lambda t: sine_and_dwell(t, self.amplitude, self.frequency, self.dwell, self.start)
        return lambda t: step_command(t, self.step, self.step_time)


@dataclass
class ScenarioResult:
    """Per-integrator-step log of a scenario run."""

    t: np.ndarray
    command: np.ndarray
    nu: np.ndarray
    x: np.ndarray
    y: np.ndarray
    d: np.ndarray
    kappa: np.ndarray
    y_lower: np.ndarray
    y_upper: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def violations(self) -> int:
        return int(np.sum(np.any((self.y < self.y_lower) | (self.y > self.y_upper), axis=1)))

    def command_modification(self) -> float:
        """Integral of ``|command - nu|`` (trapezoidal)."""
        return float(np.trapezoid(np.abs(self.command - self.nu), self.t))

    def to_csv(self, header: str = "", state_names=None, delta_f=None) -> str:
        buf = io.StringIO()
        buf.write(header)
        w = csv.writer(buf, lineterminator="\n")
        n_x = self.x.shape[1]
        names = state_names or [f"x{i}" for i in range(n_x)]
        cols = ["t", "command", "nu"] + (["delta_f"] if delta_f is not None else []) + list(names)
        cols += [f"y{i}" for i in range(self.y.shape[1])] if self.y.shape[1] > 1 else ["y"]
        w.writerow(cols + ["d", "kappa"])
        for k in range(len(self.t)):
            row = [self.t[k], self.command[k], self.nu[k]]
            if delta_f is not None:
                row.append(delta_f[k])
            row += list(self.x[k]) + list(self.y[k]) + [self.d[k], self.kappa[k]]
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


class ScheduledGovernor:
    """Governor whose data and steady-state maps are indexed by forward speed.

    At each sample the two trained speeds nearest the current speed are
    consulted; the step is the smaller certified step and the distance the
    smaller distance, i.e. the larger of the two deviation bounds governs.
    """

    def __init__(self, config: GovernorConfig, nodes: dict, nu0):
        if not nodes:
            raise ValueError("need at least one trained speed node")
        self.config = config
        self.speeds = np.array(sorted(nodes))
        self.nodes = {float(v): nodes[v] for v in self.speeds}
        self.current_nu = np.atleast_1d(np.asarray(nu0, dtype=float))
        self.last = None

    def nearest(self, speed) -> list:
        order = np.argsort(np.abs(self.speeds - speed), kind="stable")
        return [float(v) for v in self.speeds[order[:2]]]

    def step(self, x, r, speed) -> np.ndarray:
        r = np.atleast_1d(np.asarray(r, dtype=float))
        nu = self.current_nu
        picks = self.nearest(speed)
        d = min(float(self.nodes[v][0].distance(nu)) for v in picks)
        kappas = []
        for v in picks:
            smap, data = self.nodes[v]
            x_dev = np.asarray(x, dtype=float) - smap.state(nu)
            kappas.append(compute_kappa(data, x_dev, r, nu, d, self.config).kappa)
        kappa = min(kappas)
        self.current_nu = np.asarray(apply_update(nu, r, kappa), dtype=float)
        self.last = {"kappa": kappa, "d": d, "speeds": picks}
        return self.current_nu


def simulate_scenario(plant, command, duration, dt, governor=None, sample_period=None, x0=None,
                      nu0=0.0, steady_map=None, raise_on_violation=True) -> ScenarioResult:
    """Run ``plant`` under ``command(t)``, optionally through a governor.

    Without a governor the command is applied directly and refreshed every
    integrator step.  With one, the governor updates the reference at every
    ``sample_period`` and holds it in between.  A constraint violation while
    a governor is active raises :class:`SafetyFault` unless
    ``raise_on_violation`` is false.
    """
    n_total = steps_for(duration, dt)
    if governor is None:
        k_sample = 1
        nu = np.atleast_1d(float(nu0))
    else:
        k_sample = steps_for(sample_period, dt)
        nu = governor.current_nu.copy()
    if x0 is None:
        smap = steady_map if steady_map is not None else getattr(governor, "map", None)
        x0 = smap.state(nu) if smap is not None else plant.steady_state(nu)[0]
    x = np.asarray(x0, dtype=float)
    n_out = plant.n_output
    ts = dt * np.arange(n_total + 1)
    xs = np.empty((n_total + 1, plant.n_state))
    ys = np.empty((n_total + 1, n_out))
    cmd = np.empty(n_total + 1)
    nus = np.empty(n_total + 1)
    ds = np.full(n_total + 1, np.nan)
    ks = np.full(n_total + 1, np.nan)
    xs[0] = x
    k = 0
    while k < n_total:
        t = ts[k]
        r = command(t)
        kappa, d = np.nan, np.nan
        if governor is None:
            nu = np.atleast_1d(float(r))
        elif isinstance(governor, ScheduledGovernor):
            nu = governor.step(x, r, plant.speed(t))
            kappa, d = governor.last["kappa"], governor.last["d"]
        else:
            nu = governor.step(x, r)
            kappa, d = governor.last["kappa"], governor.last["d"]
        n_here = min(k_sample, n_total - k)
        traj = plant.simulate(x, nu, n_here * dt, dt, t)
        sl = slice(k, k + n_here + 1)
        xs[sl] = traj.x
        ys[sl] = traj.y
        cmd[k:k + n_here] = [command(s) for s in ts[k:k + n_here]]
        nus[k:k + n_here] = nu[0]
        ds[k:k + n_here] = d
        ks[k:k + n_here] = kappa
        if governor is not None and raise_on_violation:
            bad = np.any((traj.y < plant.y_lower) | (traj.y > plant.y_upper), axis=1)
            if np.any(bad):
                j = int(np.argmax(bad))
                raise SafetyFault(f"output constraint violated at t={traj.t[j]:.6g}",
                                  time=float(traj.t[j]), output=traj.y[j].copy())
        x = traj.x[-1]
        k += n_here
    cmd[-1] = command(ts[-1])
    nus[-1] = nus[-2] if n_total else nu[0]
    ds[-1], ks[-1] = ds[-2] if n_total else np.nan, ks[-2] if n_total else np.nan
    ys[0] = np.atleast_1d(plant.output(xs[0], nus[0]))
    return ScenarioResult(ts, cmd, nus, xs, ys, ds, ks, plant.y_lower, plant.y_upper)


@dataclass
class Surface:
    """D-bar on a (speed, fill) grid; ``trained`` flags nodes with data."""

    speeds: np.ndarray
    fills: np.ndarray
    values: np.ndarray
    trained: np.ndarray

    def to_csv(self, header: str = "") -> str:
        buf = io.StringIO()
        buf.write(header)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["speed", "fill_ratio", "dbar", "status"])
        for i, v in enumerate(self.speeds):
            for j, f in enumerate(self.fills):
                status = "trained" if self.trained[i, j] else "conservative-extrapolation"
                w.writerow([repr(float(v)), repr(float(f)), repr(float(self.values[i, j])), status])
        return buf.getvalue()


def dbar_surface(ensemble: dict, probe, speeds, fills, config: GovernorConfig) -> Surface:
    """Evaluate D-bar at a fixed probe on a speed x fill grid.

    ``ensemble`` maps ``(speed, fill)`` to a :class:`Dataset` (or ``None``).
    Nodes without data fall back to the data-free bound and are flagged.
    """
    nu, dnu, dx = probe
    speeds = np.asarray(speeds, dtype=float)
    fills = np.asarray(fills, dtype=float)
    values = np.empty((len(speeds), len(fills)))
    trained = np.zeros(values.shape, bool)
    for i, v in enumerate(speeds):
        for j, f in enumerate(fills):
            data = ensemble.get((float(v), float(f)))
            trained[i, j] = data is not None and len(data) > 0
            values[i, j] = dbar_estimate(data if trained[i, j] else None, nu, dnu, dx, config)
    return Surface(speeds, fills, values, trained)
