"""Safe learning phase: data collection, the learning loop and dataset pruning."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .governor import Dataset, Governor, ProductNorm, dbar_estimate
from .simkit import steps_for


class SafetyFault(RuntimeError):
    """An output constraint was violated; the Hölder constants are not valid for the plant."""

    def __init__(self, message, time=None, output=None):
        super().__init__(message)
        self.time = time
        self.output = output


def _deviation_trace(plant, nu_minus, delta_nu, x_start, horizon, dt, y_ref, t0=0.0):
    nu_plus = np.atleast_1d(np.asarray(nu_minus, dtype=float)) + np.atleast_1d(delta_nu)
    traj = plant.simulate(np.asarray(x_start, dtype=float), nu_plus, horizon, dt, t0)
    dev = np.linalg.norm(traj.y - np.atleast_1d(y_ref), axis=1)
    return traj, dev


def measure_dtilde(plant, nu_minus, delta_nu, x_start, horizon_T, epsilon, y_ref=None, dt=None,
                   t0=0.0) -> float:
    """Finite-horizon deviation bound after a reference step.

    Holds ``nu_minus + delta_nu`` for ``horizon_T`` from the absolute state
    ``x_start`` and returns the largest distance of the output from the steady
    output of the *old* reference, plus ``epsilon``.

    Parameters
    ----------
    y_ref : array_like, optional
        Steady output of ``nu_minus``; taken from ``plant.steady_state`` when omitted.
    dt : float, optional
        Integrator step, ``horizon_T / 100`` by default.
    """
    if y_ref is None:
        y_ref = plant.steady_state(nu_minus)[1]
    dt = horizon_T / 100.0 if dt is None else dt
    _, dev = _deviation_trace(plant, nu_minus, delta_nu, x_start, horizon_T, dt, y_ref, t0)
    return float(dev.max()) + epsilon


@dataclass(frozen=True)
class LearningConfig:
    """Settings of the learning loop.

    ``command_source`` is ``"uniform"`` (commands drawn uniformly from the
    admissible box, redrawn while equal to the current reference) or
    ``"profile"`` (``profile`` is cycled).  ``dt`` defaults to a hundredth of
    the governor's sample period.
    """

    n_max: int = 50
    k_max: int = 10
    command_source: str = "uniform"
    profile: tuple = ()
    moving_window_T: float = 1000.0
    error_threshold: float = 0.0
    prune_cell_diameter: float = 0.0
    rng_seed: int = 0
    dt: float | None = None
    nu_range: tuple | None = None

    def __post_init__(self):
        if self.n_max < 1 or self.k_max < 1:
            raise ValueError("n_max and k_max must be at least 1")
        if not self.moving_window_T > 0:
            raise ValueError("moving_window_T must be positive")
        if self.prune_cell_diameter < 0:
            raise ValueError("prune_cell_diameter must be non-negative")
        if self.command_source not in ("uniform", "profile"):
            raise ValueError("command_source must be 'uniform' or 'profile'")
        if self.command_source == "profile" and len(self.profile) == 0:
            raise ValueError("a profile command source needs a non-empty profile")
        object.__setattr__(self, "profile", tuple(self.profile))


@dataclass
class LearningReport:
    """Outcome of :func:`run_learning`.

    ``log`` holds one row per sample instant (see :meth:`log_csv` for the
    columns); ``trace`` holds ``(t, windowed tracking error, complete)``.
    """

    dataset: Dataset
    trace: np.ndarray
    log: dict
    constraint_violations: int = 0
    hypothetical_violations: int = 0
    commands: list = field(default_factory=list)
    terminated_early: bool = False

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "tracking_error", "complete_window"])
        for t, e, c in self.trace:
            w.writerow([repr(float(t)), repr(float(e)), int(c)])
        return buf.getvalue()

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        keys = ["t", "command", "r", "nu_minus", "nu", "kappa", "d", "d_tilde", "peak_deviation", "y_abs_max"]
        n_x = self.log["x"].shape[1]
        w.writerow(keys + [f"x{i}" for i in range(n_x)])
        for k in range(len(self.log["t"])):
            row = [repr(float(self.log["t"][k])), int(self.log["command"][k])]
            row += [repr(float(self.log[key][k])) for key in keys[2:]]
            row += [repr(float(v)) for v in self.log["x"][k]]
            w.writerow(row)
        return buf.getvalue()


def tracking_error_ma(t, gap, window_T, t_now, with_flag=False):
    """Moving average of the tracking error over ``[t_now - window_T, t_now]``.

    ``(t, gap)`` is the tracking-error history on the sample grid (repeated
    time stamps encode jumps).  Integration is trapezoidal.  When the history
    does not reach back a full window the average is taken over the available
    span and, with ``with_flag=True``, the second return value is ``False``.
    """
    t = np.asarray(t, dtype=float)
    gap = np.asarray(gap, dtype=float)
    if t.size == 0:
        raise ValueError("empty history")
    if not window_T > 0:
        raise ValueError("window_T must be positive")
    start = t_now - window_T
    complete = t[0] <= start + 1e-12 * max(1.0, abs(start))
    lo = max(start, t[0])
    inside = (t > lo) & (t <= t_now)
    g_lo = np.interp(lo, t, gap) if not np.any(t == lo) else gap[np.flatnonzero(t == lo)[-1]]
    g_hi = np.interp(t_now, t, gap) if not np.any(t == t_now) else gap[np.flatnonzero(t == t_now)[-1]]
    ts = np.concatenate([[lo], t[inside]])
    gs = np.concatenate([[g_lo], gap[inside]])
    if ts[-1] < t_now:
        ts = np.append(ts, t_now)
        gs = np.append(gs, g_hi)
    span = t_now - lo
    value = 0.0 if span <= 0 else float(np.trapezoid(gs, ts) / span)
    return (value, bool(complete)) if with_flag else value


def _cell_side(norm: ProductNorm, n_nu: int, n_x: int, m: float) -> float:
    # weighted side length a: a block of size k has diameter a * sqrt(k)
    roots = [math.sqrt(n_nu), math.sqrt(n_nu), math.sqrt(n_x)]
    return m / (max(roots) if norm.kind == "max" else sum(roots))


def prune_dataset(dataset: Dataset, cell_diameter_m: float, norm: ProductNorm) -> Dataset:
    """Keep the smallest-``d_tilde`` point in every occupied grid cell of diameter ``m``.

    Cells are axis-aligned in weighted coordinates; survivors keep their
    insertion order.  ``m = 0`` returns an unchanged copy.
    """
    if cell_diameter_m < 0:
        raise ValueError("cell diameter must be non-negative")
    if cell_diameter_m == 0 or len(dataset) == 0:
        return dataset.copy()
    n_nu, n_x = dataset.n_nu, dataset.n_x
    side = _cell_side(norm, n_nu, n_x, cell_diameter_m)
    w = np.concatenate([np.broadcast_to(norm.w_nu, (n_nu,)), np.broadcast_to(norm.w_dnu, (n_nu,)),
                        np.broadcast_to(norm.w_dx, (n_x,))])
    z = np.hstack([dataset.nu, dataset.delta_nu, dataset.delta_x]) * w
    cells = np.floor(z / side).astype(np.int64)
    _, label = np.unique(cells, axis=0, return_inverse=True)
    label = label.reshape(-1)
    # stable sort by (cell, d_tilde) keeps the earliest point among equal d_tilde
    order = np.lexsort((dataset.d_tilde, label))
    first = np.ones(len(order), bool)
    first[1:] = label[order][1:] != label[order][:-1]
    return dataset.subset(np.sort(order[first]))


def _draw_command(rng, lower, upper, nu):
    while True:
        r = rng.uniform(lower, upper)
        if not np.array_equal(r, nu):
            return r


def run_learning(plant, governor: Governor, config: LearningConfig, x0=None,
                 probes=None) -> LearningReport:
    """Run the safe learning loop.

    At every sample instant the governor picks a certified step toward the
    current command, the plant runs for one sample period and one data point
    is appended.  The deviation bound of each point is measured over the
    governor's ``horizon_T`` on a branch that holds the new reference; when
    the horizon equals the sample period the branch is the plant's actual
    trajectory.

    Parameters
    ----------
    probes : sequence of (nu, delta_nu, delta_x), optional
        Queries at which the deviation bound is recorded after every sample
        (returned in ``report.log["probe_dbar"]``).

    Raises
    ------
    SafetyFault
        If the output leaves the constraint box at any integrator step.
    ValueError
        If the initial state is not a strictly admissible steady state or a
        profile command lies outside the admissible range.
    """
    gcfg = governor.config
    ts = gcfg.sample_period
    horizon = max(gcfg.horizon_T, ts)
    dt = config.dt if config.dt is not None else ts / 100.0
    k_sample = steps_for(ts, dt)
    smap = governor.map
    nu0 = governor.current_nu.copy()
    x = np.asarray(smap.state(nu0) if x0 is None else x0, dtype=float)
    y0 = np.atleast_1d(plant.output(x, nu0))
    if not (smap.path_usable(nu0, nu0) and smap.distance(nu0) > 0
            and np.all(y0 > plant.y_lower) and np.all(y0 < plant.y_upper)):
        raise ValueError("learning must start from a strictly admissible steady state")

    if config.nu_range is not None:
        lower, upper = (np.atleast_1d(np.asarray(v, dtype=float)) for v in config.nu_range)
    else:
        lower, upper = plant.nu_lower, plant.nu_upper
    if config.command_source == "profile":
        for r in config.profile:
            if np.any(r < lower) or np.any(r > upper):
                raise ValueError(f"profile command {r} outside the admissible range [{lower}, {upper}]")
    rng = np.random.default_rng(config.rng_seed)
    log = {k: [] for k in ("t", "command", "r", "nu_minus", "nu", "kappa", "d", "d_tilde", "peak_deviation",
                           "y_abs_max", "x", "probe_dbar")}
    hist_t, hist_gap, trace = [], [], []
    commands = []
    t = 0.0
    violations_tail = 0
    stop = False
    for n in range(config.n_max):
        if config.command_source == "profile":
            r = np.atleast_1d(np.asarray(config.profile[n % len(config.profile)], dtype=float))
        else:
            r = _draw_command(rng, lower, upper, governor.current_nu)
        commands.append(r.copy())
        for _ in range(config.k_max):
            nu_minus = governor.current_nu.copy()
            y_ref = smap.output(nu_minus)
            nu_plus = governor.step(x, r)
            info = governor.last
            traj, dev = _deviation_trace(plant, nu_minus, nu_plus - nu_minus, x, horizon, dt, y_ref, t)
            actual = traj.y[: k_sample + 1]
            bad = np.any((actual < plant.y_lower) | (actual > plant.y_upper), axis=1)
            if np.any(bad):
                k_bad = int(np.argmax(bad))
                raise SafetyFault(f"output constraint violated at t={traj.t[k_bad]:.6g}",
                                  time=float(traj.t[k_bad]), output=actual[k_bad].copy())
            tail = traj.y[k_sample + 1:]
            violations_tail += int(np.any((tail < plant.y_lower) | (tail > plant.y_upper)))
            d_tilde = float(dev.max()) + gcfg.epsilon
            governor.dataset.append(nu_minus, nu_plus - nu_minus, info["x_dev"], d_tilde)

            gap = float(np.linalg.norm(r - nu_plus))
            hist_t += [t, t + ts]
            hist_gap += [gap, gap]
            log["t"].append(t)
            log["command"].append(n)
            log["r"].append(float(r[0]))
            log["nu_minus"].append(float(nu_minus[0]))
            log["nu"].append(float(nu_plus[0]))
            log["kappa"].append(info["kappa"])
            log["d"].append(info["d"])
            log["d_tilde"].append(d_tilde)
            log["peak_deviation"].append(float(dev[: k_sample + 1].max()))
            log["y_abs_max"].append(float(np.abs(actual).max()))
            log["x"].append(x.copy())
            if probes is not None:
                log["probe_dbar"].append([dbar_estimate(governor.dataset, *p, gcfg) for p in probes])
            x = traj.x[k_sample].copy()
            t += ts
            # only the last window of history matters
            keep = 2 * (int(config.moving_window_T / ts) + 2)
            if len(hist_t) > 2 * keep:
                del hist_t[:-keep], hist_gap[:-keep]
            err, _ = tracking_error_ma(hist_t, hist_gap, config.moving_window_T, t, with_flag=True)
            complete = t >= config.moving_window_T - 1e-9
            trace.append((t, err, complete))
            if complete and err < config.error_threshold:
                stop = True
                break
        if stop:
            break

    dataset = governor.dataset
    if config.prune_cell_diameter > 0:
        dataset = prune_dataset(dataset, config.prune_cell_diameter, gcfg.norm)
        governor.dataset = dataset
    out_log = {k: np.asarray(v, dtype=float) for k, v in log.items() if k not in ("x", "probe_dbar")}
    out_log["x"] = np.asarray(log["x"], dtype=float).reshape(len(log["t"]), -1)
    out_log["probe_dbar"] = np.asarray(log["probe_dbar"], dtype=float)
    return LearningReport(dataset=dataset, trace=np.asarray(trace, dtype=float), log=out_log,
                          constraint_violations=0, hypothetical_violations=violations_tail,
                          commands=commands, terminated_early=stop)
