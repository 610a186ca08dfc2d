"""Plant abstraction, fixed-step integration and steady-state maps.

A plant is a closed-loop system ``x' = f(x, nu)``, ``y = g(x, nu)`` driven by a
piecewise-constant reference ``nu``.  Output constraints are boxes.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np


class IntegrationFault(ArithmeticError):
    """A derivative or state became non-finite during integration."""

    def __init__(self, message, state=None, time=None):
        super().__init__(message)
        self.state = None if state is None else np.array(state, dtype=float)
        self.time = time


@dataclass
class Trajectory:
    """States and outputs on an integrator grid (row ``k`` is time ``t[k]``)."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray


def box_distance(y, lower, upper) -> float:
    """Euclidean distance from ``y`` to the complement of the box, 0 outside the box."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    gap = np.minimum(y - lower, upper - y)
    return float(max(gap.min(), 0.0))


class Plant:
    """Base class for closed-loop plants.

    Subclasses set ``n_state``, ``n_output``, ``n_input``, the admissible
    reference box ``nu_lower``/``nu_upper`` and the output box
    ``y_lower``/``y_upper``, and implement :meth:`derivatives` and
    :meth:`output`.  :meth:`simulate` may be overridden by a faster
    implementation that reproduces the generic RK4 scheme.
    """

    n_state: int
    n_output: int
    n_input: int = 1
    nu_lower: np.ndarray
    nu_upper: np.ndarray
    y_lower: np.ndarray
    y_upper: np.ndarray

    def initial_state(self) -> np.ndarray:
        """Seed state for equilibrium sweeps."""
        return np.zeros(self.n_state)

    def derivatives(self, x, nu, t=0.0) -> np.ndarray:
        raise NotImplementedError

    def output(self, x, nu) -> np.ndarray:
        """Output ``g(x, nu)``; ``x`` may be a single state or a 2-D array of states."""
        raise NotImplementedError

    def steady_state(self, nu):
        """Analytic equilibrium ``(x_nu, y_nu)`` if known, else ``None``."""
        return None

    def admissible_reference(self, nu) -> bool:
        nu = np.atleast_1d(np.asarray(nu, dtype=float))
        return bool(np.all(nu >= self.nu_lower) and np.all(nu <= self.nu_upper))

    def in_constraints(self, y) -> np.ndarray:
        """Row-wise membership of outputs in the constraint box."""
        y = np.asarray(y, dtype=float).reshape(-1, self.n_output)
        return np.all((y >= self.y_lower) & (y <= self.y_upper), axis=1)

    def simulate(self, x0, nu, duration, dt, t0=0.0) -> Trajectory:
        """Integrate with constant ``nu`` for ``duration`` using fixed RK4 steps."""
        n = steps_for(duration, dt)
        xs = np.empty((n + 1, self.n_state))
        xs[0] = x0
        x = np.asarray(x0, dtype=float)
        for k in range(n):
            x = integrate_step(self, x, nu, dt, t0 + k * dt)
            xs[k + 1] = x
        t = t0 + dt * np.arange(n + 1)
        return Trajectory(t, xs, np.asarray(self.output(xs, nu)).reshape(n + 1, -1))


def steps_for(duration, dt) -> int:
    n = int(round(duration / dt))
    if n < 1 or abs(n * dt - duration) > 1e-9 * max(duration, 1.0):
        raise ValueError(f"duration {duration} is not a positive multiple of dt {dt}")
    return n


def integrate_step(plant, x, nu, dt, t=0.0) -> np.ndarray:
    """One classic Runge-Kutta step with ``nu`` held constant."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    k1 = plant.derivatives(x, nu, t)
    k2 = plant.derivatives(x + 0.5 * dt * k1, nu, t + 0.5 * dt)
    k3 = plant.derivatives(x + 0.5 * dt * k2, nu, t + 0.5 * dt)
    k4 = plant.derivatives(x + dt * k3, nu, t + dt)
    x_next = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not (np.all(np.isfinite(x_next)) and np.all(np.isfinite(k1))):
        raise IntegrationFault("non-finite state during integration", x, t)
    return x_next


class FunctionPlant(Plant):
    """Plant built from plain callables; handy for tests and quick experiments."""

    def __init__(self, f, g, n_state, n_output=1, nu_bounds=(-np.inf, np.inf),
                 y_bounds=(-np.inf, np.inf)):
        self._f, self._g = f, g
        self.n_state, self.n_output = n_state, n_output
        self.nu_lower, self.nu_upper = (np.atleast_1d(np.asarray(b, dtype=float)) for b in nu_bounds)
        self.y_lower, self.y_upper = (np.atleast_1d(np.asarray(b, dtype=float)) for b in y_bounds)

    def derivatives(self, x, nu, t=0.0):
        return np.asarray(self._f(x, nu), dtype=float)

    def output(self, x, nu):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return np.atleast_1d(np.asarray(self._g(x, nu), dtype=float))
        return np.array([np.atleast_1d(self._g(row, nu)) for row in x])


class LTIPlant(Plant):
    """Stable LTI closed loop ``x' = A x + B u``, ``y = C x + F u``.

    ``u = nu`` by default.  With ``input_exponent = beta > 1`` the input is
    ``u = sign(nu) |nu|**(1/beta)``, a plant whose deviation functional is
    Hölder with exponent ``1/beta`` but not Lipschitz in ``nu``.
    """

    def __init__(self, A, B, C, F=None, nu_bounds=(-1.0, 1.0), y_bounds=(-1.0, 1.0),
                 input_exponent=1.0):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        n = self.A.shape[0]
        self.B = np.asarray(B, dtype=float).reshape(n, -1)
        self.C = np.atleast_2d(np.asarray(C, dtype=float)).reshape(-1, n)
        m, p = self.C.shape[0], self.B.shape[1]
        self.F = np.zeros((m, p)) if F is None else np.asarray(F, dtype=float).reshape(m, p)
        if np.max(np.linalg.eigvals(self.A).real) >= 0:
            raise ValueError("A must be Hurwitz")
        self.n_state, self.n_output, self.n_input = n, m, p
        self.nu_lower, self.nu_upper = (np.broadcast_to(np.asarray(b, dtype=float), (p,)).copy()
                                        for b in nu_bounds)
        self.y_lower, self.y_upper = (np.broadcast_to(np.asarray(b, dtype=float), (m,)).copy()
                                      for b in y_bounds)
        self.input_exponent = float(input_exponent)
        self._Ainv = np.linalg.inv(self.A)
        self._rk4_cache = {}

    def input_map(self, nu):
        nu = np.atleast_1d(np.asarray(nu, dtype=float))
        if self.input_exponent == 1.0:
            return nu
        return np.sign(nu) * np.abs(nu) ** (1.0 / self.input_exponent)

    def derivatives(self, x, nu, t=0.0):
        return self.A @ np.asarray(x, dtype=float) + self.B @ self.input_map(nu)

    def output(self, x, nu):
        x = np.asarray(x, dtype=float)
        u = self.input_map(nu)
        if x.ndim == 1:
            return self.C @ x + self.F @ u
        return x @ self.C.T + self.F @ u

    def steady_state(self, nu):
        x = -self._Ainv @ self.B @ self.input_map(nu)
        return x, self.output(x, nu)

    def _rk4_matrices(self, dt):
        # RK4 applied to a linear system is the degree-4 Taylor polynomial of exp(A dt)
        if dt not in self._rk4_cache:
            n = self.n_state
            hA = dt * self.A
            I = np.eye(n)
            P = I + hA @ (I + hA @ (I / 2 + hA @ (I / 6 + hA / 24)))
            Q = dt * (I + hA @ (I / 2 + hA @ (I / 6 + hA / 24))) @ self.B
            self._rk4_cache[dt] = (P, Q)
        return self._rk4_cache[dt]

    def simulate(self, x0, nu, duration, dt, t0=0.0) -> Trajectory:
        n = steps_for(duration, dt)
        P, Q = self._rk4_matrices(dt)
        bu = Q @ self.input_map(nu)
        xs = np.empty((n + 1, self.n_state))
        xs[0] = x0
        for k in range(n):
            xs[k + 1] = P @ xs[k] + bu
        t = t0 + dt * np.arange(n + 1)
        return Trajectory(t, xs, self.output(xs, nu))


@dataclass
class SteadyStateMap:
    """Tabulated equilibria ``nu -> (x_nu, y_nu, d(nu))`` over a 1-D reference grid.

    ``mode`` selects linear interpolation of ``d`` or the conservative minimum
    of the two bracketing nodes.  Nodes that failed to settle are kept with
    ``usable = False``; queries on a segment touching one are refused.
    """

    nodes: np.ndarray
    states: np.ndarray
    outputs: np.ndarray
    distances: np.ndarray
    usable: np.ndarray = None
    settle_time: np.ndarray = None
    residual: np.ndarray = None
    mode: str = "linear"

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        order = np.argsort(self.nodes)
        self.nodes = self.nodes[order]
        self.states = np.asarray(self.states, dtype=float).reshape(len(order), -1)[order]
        self.outputs = np.asarray(self.outputs, dtype=float).reshape(len(order), -1)[order]
        self.distances = np.asarray(self.distances, dtype=float)[order]
        n = len(self.nodes)
        self.usable = np.ones(n, bool) if self.usable is None else np.asarray(self.usable, bool)[order]
        self.settle_time = np.full(n, np.nan) if self.settle_time is None else np.asarray(self.settle_time, float)[order]
        self.residual = np.full(n, np.nan) if self.residual is None else np.asarray(self.residual, float)[order]
        if self.mode not in ("linear", "conservative"):
            raise ValueError(f"unknown interpolation mode {self.mode!r}")
        if np.any(self.distances[self.usable] < 0):
            raise ValueError("distances must be non-negative")

    def _bracket(self, nu):
        nu = float(np.asarray(nu, dtype=float).reshape(-1)[0])
        lo, hi = self.nodes[0], self.nodes[-1]
        tol = 1e-12 * max(1.0, abs(lo), abs(hi))
        if not (lo - tol <= nu <= hi + tol):
            raise ValueError(f"reference {nu} outside map range [{lo}, {hi}]")
        nu = min(max(nu, lo), hi)
        j = int(np.searchsorted(self.nodes, nu, side="right")) - 1
        j = min(max(j, 0), len(self.nodes) - 2) if len(self.nodes) > 1 else 0
        if len(self.nodes) == 1:
            return nu, 0, 0, 0.0
        w = (nu - self.nodes[j]) / (self.nodes[j + 1] - self.nodes[j])
        return nu, j, j + 1, w

    def contains(self, nu) -> bool:
        try:
            _, i, j, w = self._bracket(nu)
        except ValueError:
            return False
        return bool(self.usable[i] if w == 0.0 else self.usable[j] if w == 1.0
                    else self.usable[i] and self.usable[j])

    def _interp_rows(self, table, nu):
        if not self.contains(nu):
            raise ValueError(f"reference {nu} is outside the usable part of the map")
        _, i, j, w = self._bracket(nu)
        return (1.0 - w) * table[i] + w * table[j]

    def distance(self, nu) -> float:
        if not self.contains(nu):
            raise ValueError(f"reference {nu} is outside the usable part of the map")
        _, i, j, w = self._bracket(nu)
        if w == 0.0:
            return float(self.distances[i])
        if w == 1.0:
            return float(self.distances[j])
        if self.mode == "conservative":
            return float(min(self.distances[i], self.distances[j]))
        return float((1.0 - w) * self.distances[i] + w * self.distances[j])

    def state(self, nu) -> np.ndarray:
        return self._interp_rows(self.states, nu)

    def output(self, nu) -> np.ndarray:
        return self._interp_rows(self.outputs, nu)

    def path_usable(self, nu_a, nu_b) -> bool:
        """True when every node between two references (inclusive) is usable."""
        lo, hi = sorted((float(np.ravel(nu_a)[0]), float(np.ravel(nu_b)[0])))
        if not (self.contains(lo) and self.contains(hi)):
            return False
        inside = (self.nodes >= lo) & (self.nodes <= hi)
        return bool(np.all(self.usable[inside]))

    def max_adjacent_jump(self) -> float:
        """Largest change of ``d`` between neighbouring usable nodes."""
        ok = self.usable[:-1] & self.usable[1:]
        if not np.any(ok):
            return 0.0
        return float(np.max(np.abs(np.diff(self.distances))[ok]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        nx, ny = self.states.shape[1], self.outputs.shape[1]
        w.writerow(["nu"] + [f"x{i}" for i in range(nx)] + [f"y{i}" for i in range(ny)]
                   + ["d", "usable", "settle_time", "residual"])
        for k in range(len(self.nodes)):
            w.writerow([repr(float(self.nodes[k]))]
                       + [repr(float(v)) for v in self.states[k]]
                       + [repr(float(v)) for v in self.outputs[k]]
                       + [repr(float(self.distances[k])), int(self.usable[k]),
                          repr(float(self.settle_time[k])), repr(float(self.residual[k]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, mode="linear") -> "SteadyStateMap":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        xi = [i for i, h in enumerate(header) if h.startswith("x")]
        yi = [i for i, h in enumerate(header) if h.startswith("y")]
        col = {h: i for i, h in enumerate(header)}
        data = np.array([[float(v) for v in r] for r in body])
        return cls(nodes=data[:, col["nu"]], states=data[:, xi], outputs=data[:, yi],
                   distances=data[:, col["d"]], usable=data[:, col["usable"]] > 0.5,
                   settle_time=data[:, col["settle_time"]], residual=data[:, col["residual"]],
                   mode=mode)


def distance_to_boundary(steady_state_map: SteadyStateMap, nu) -> float:
    return steady_state_map.distance(nu)


def build_steady_state_map(plant: Plant, node_grid, settle_tolerance=1e-8, max_settle_time=200.0,
                           dt=0.01, chunk=5.0, x_start=None, mode="linear") -> SteadyStateMap:
    """Sweep the reference grid, settling each node from the previous equilibrium.

    The sweep starts from the grid node closest to zero and proceeds outward in
    both directions, so each node is warm-started from its neighbour on the
    same side.  A node settles once ``||f(x, nu)|| < settle_tolerance``; nodes
    that do not settle within ``max_settle_time`` are flagged unusable.
    """
    grid = np.sort(np.asarray(node_grid, dtype=float).reshape(-1))
    n = len(grid)
    states = np.full((n, plant.n_state), np.nan)
    outputs = np.full((n, plant.n_output), np.nan)
    dist = np.zeros(n)
    usable = np.zeros(n, bool)
    settle = np.full(n, np.nan)
    resid = np.full(n, np.nan)

    start = int(np.argmin(np.abs(grid)))
    x0 = plant.initial_state() if x_start is None else np.asarray(x_start, dtype=float)
    for stripe in (range(start, n), range(start - 1, -1, -1)):
        x = states[start] if stripe.start != start and usable[start] else x0.copy()
        for k in stripe:
            nu = grid[k]
            t_used, ok = 0.0, False
            res = np.inf
            try:
                while t_used < max_settle_time - 1e-12:
                    span = min(chunk, max_settle_time - t_used)
                    span = max(dt, round(span / dt) * dt)
                    traj = plant.simulate(x, nu, span, dt)
                    x = traj.x[-1]
                    t_used += span
                    res = float(np.linalg.norm(plant.derivatives(x, nu)))
                    if res < settle_tolerance:
                        ok = True
                        break
            except ArithmeticError:
                ok = False
            settle[k], resid[k] = t_used, res
            if not ok or not np.all(np.isfinite(x)):
                # restart the next node from the seed rather than a diverged state
                x = x0.copy()
                continue
            y = np.atleast_1d(plant.output(x, nu))
            states[k], outputs[k] = x, y
            inside = bool(np.all(y >= plant.y_lower) and np.all(y <= plant.y_upper))
            dist[k] = box_distance(y, plant.y_lower, plant.y_upper) if inside else 0.0
            usable[k] = inside
    return SteadyStateMap(grid, states, outputs, dist, usable, settle, resid, mode=mode)


def analytic_steady_state_map(plant: Plant, node_grid, mode="linear") -> SteadyStateMap:
    """Steady-state map from a plant's closed-form equilibria (LTI plants)."""
    grid = np.sort(np.asarray(node_grid, dtype=float).reshape(-1))
    xs, ys, ds, ok = [], [], [], []
    for nu in grid:
        x, y = plant.steady_state(nu)
        y = np.atleast_1d(y)
        inside = bool(np.all(y >= plant.y_lower) and np.all(y <= plant.y_upper))
        xs.append(x)
        ys.append(y)
        ds.append(box_distance(y, plant.y_lower, plant.y_upper) if inside else 0.0)
        ok.append(inside)
    return SteadyStateMap(grid, np.array(xs), np.array(ys), np.array(ds), np.array(ok),
                          np.zeros(len(grid)), np.zeros(len(grid)), mode=mode)
