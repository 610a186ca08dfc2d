"""Public tank-truck model: state container, component laws and the governed plant."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..simkit import IntegrationFault, Plant, Trajectory, steps_for
from . import dynamics as _dyn
from .dynamics import ModelSingularityError
from .params import G, PendulumParams, TireParams, VehicleParams, derive, pack

REST_THETA = -math.pi / 2
CONDITION_LIMIT = 1e12


@dataclass
class VehicleState:
    """The six dynamic states; ``theta`` is never wrapped."""

    phi: float = 0.0
    phi_dot: float = 0.0
    beta_slip: float = 0.0
    r_yaw: float = 0.0
    theta: float = REST_THETA
    theta_dot: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise ValueError("vehicle state must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.phi, self.phi_dot, self.beta_slip, self.r_yaw, self.theta, self.theta_dot])

    @classmethod
    def from_array(cls, x) -> "VehicleState":
        return cls(*(float(v) for v in np.asarray(x, dtype=float).reshape(6)))


def rest_state() -> np.ndarray:
    return VehicleState().as_array()


def pendulum_free_derivatives(theta, theta_dot, pend: PendulumParams):
    """``(theta_dot, theta_ddot)`` of the trammel pendulum in a tank at rest."""
    if pend.a_p == 0.0 and pend.b_p == 0.0:
        raise ValueError("degenerate pendulum: a_p = b_p = 0")
    return theta_dot, _dyn.free_pendulum_rhs(theta, theta_dot, pend.a_p, pend.b_p, G)


def simulate_free_pendulum(theta0, theta_dot0, pend: PendulumParams, duration, dt=1e-3):
    """RK4 trajectory of the free pendulum; columns ``(t, theta, theta_dot, theta_ddot)``."""
    n = steps_for(duration, dt)
    out = _dyn.free_pendulum_run(theta0, theta_dot0, pend.a_p, pend.b_p, G, dt, n)
    acc = np.array([_dyn.free_pendulum_rhs(th, w, pend.a_p, pend.b_p, G) for th, w in out])
    return np.column_stack([dt * np.arange(n + 1), out, acc])


def pendulum_energy(theta, theta_dot, pend: PendulumParams):
    """Mechanical energy per unit pendulum mass (works element-wise on arrays)."""
    theta = np.asarray(theta, dtype=float)
    theta_dot = np.asarray(theta_dot, dtype=float)
    inertia = pend.a_p**2 * np.sin(theta) ** 2 + pend.b_p**2 * np.cos(theta) ** 2
    return 0.5 * theta_dot**2 * inertia + G * pend.b_p * np.sin(theta)


def slosh_force(theta, theta_dot, theta_ddot, pend: PendulumParams) -> float:
    """Largest lateral force the pendulum exerts on the tank over a trajectory."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.size == 0:
        raise ValueError("empty trajectory")
    force = pend.m_p * pend.a_p * (-np.asarray(theta_dot) * np.sin(theta)
                                   + np.asarray(theta_ddot) * np.cos(theta))
    return float(np.max(force))


def tire_sideslip(delta_f, beta_slip, r_yaw, params: VehicleParams):
    """Front and rear tire sideslip angles (rear steering is zero)."""
    return _dyn.slip_angles(float(delta_f), float(beta_slip), float(r_yaw), params.V,
                            params.l_f, params.l_r)


def tire_force(alpha, tire: TireParams):
    """Magic-formula lateral force; vectorised over ``alpha``."""
    ba = tire.B * np.asarray(alpha, dtype=float)
    return tire.D * np.sin(tire.C * np.arctan(ba - tire.E * (ba - np.arctan(ba))))


def ltr(state, params: VehicleParams):
    """Load transfer ratio estimated from roll angle and roll rate.

    ``state`` may be a :class:`VehicleState`, a 6-vector or an ``(N, 6)`` array.
    """
    x = state.as_array() if isinstance(state, VehicleState) else np.asarray(state, dtype=float)
    scale = -2.0 / (params.mass * G * params.W)
    return scale * (params.k_phi * x[..., 0] + params.c_phi * x[..., 1])


def _packed(params: VehicleParams, pend: PendulumParams | None):
    p = pack(params)
    if pend is not None:
        p[0:6] = (params.m_t, params.m_u, pend.m_f, pend.m_p, pend.a_p, pend.b_p)
    return p


def mass_matrix(state, steering_wheel_angle, params: VehicleParams, pend: PendulumParams | None = None):
    """``(M, h)`` of the acceleration system for ``[theta_dd, phi_dd, beta_dot, r_dot]``."""
    x = state.as_array() if isinstance(state, VehicleState) else np.asarray(state, dtype=float)
    return _dyn.assemble(x, params.k_deltaf * steering_wheel_angle, params.V, _packed(params, pend))


def vehicle_derivatives(state, steering_wheel_angle, params: VehicleParams,
                        pend: PendulumParams | None = None) -> np.ndarray:
    """State derivative for a steering-wheel angle in radians.

    Raises
    ------
    ModelSingularityError
        If the acceleration system's condition number exceeds 1e12.
    """
    x = state.as_array() if isinstance(state, VehicleState) else np.asarray(state, dtype=float)
    p = _packed(params, pend)
    M, _ = _dyn.assemble(x, params.k_deltaf * steering_wheel_angle, params.V, p)
    if not np.all(np.isfinite(M)) or np.linalg.cond(M) > CONDITION_LIMIT:
        raise ModelSingularityError(f"singular mass matrix at state {x.tolist()}")
    xdot, ok = _dyn.rhs(x, params.k_deltaf * steering_wheel_angle, params.V, p)
    if not ok:
        raise ModelSingularityError(f"singular mass matrix at state {x.tolist()}")
    return xdot


def unused_equation_residual(state, xdot, params: VehicleParams, pend: PendulumParams | None = None) -> float:
    """Residual of the pendulum/roll coupling equation not used to close the system."""
    x = state.as_array() if isinstance(state, VehicleState) else np.asarray(state, dtype=float)
    return float(_dyn.unused_equation_residual(x, np.asarray(xdot, dtype=float), params.V,
                                               _packed(params, pend)))


def pendulum_coupling_block(state, params: VehicleParams, pend: PendulumParams | None = None) -> np.ndarray:
    """2x2 (theta_dd, phi_dd) coefficient block of the two pendulum equations.

    Row 0 is read from the assembled acceleration system, row 1 is recovered
    from the coupling-equation residual (which is affine in the accelerations).
    """
    x = state.as_array() if isinstance(state, VehicleState) else np.asarray(state, dtype=float)
    p = _packed(params, pend)
    M, _ = _dyn.assemble(x, 0.0, params.V, p)
    base = _dyn.unused_equation_residual(x, np.zeros(6), params.V, p)
    e_theta = np.zeros(6)
    e_theta[5] = 1.0
    e_phi = np.zeros(6)
    e_phi[1] = 1.0
    return np.array([
        [M[0, 0], M[0, 1]],
        [_dyn.unused_equation_residual(x, e_theta, params.V, p) - base,
         _dyn.unused_equation_residual(x, e_phi, params.V, p) - base],
    ])


@dataclass(frozen=True)
class SpeedSchedule:
    """Forward speed ``V(t) = clip(V0 + rate * t, v_min, v_max)``."""

    v0: float
    rate: float = 0.0
    v_min: float = 1.0
    v_max: float = 60.0

    def __call__(self, t) -> float:
        return _dyn.speed_at(float(t), self.v0, self.rate, self.v_min, self.v_max)


class TruckPlant(Plant):
    """Tank truck as a governed plant.

    The reference is the steering-wheel angle in degrees (``nu_unit="deg"``) or
    radians; the constrained output is the LTR, bounded by ``LTR_lim``.
    Simulation runs in compiled code with the same RK4 scheme as
    :func:`lrg.simkit.integrate_step`.
    """

    n_state = 6
    n_output = 1
    n_input = 1

    def __init__(self, params: VehicleParams | None = None, nu_limit=60.0, nu_unit="deg",
                 speed: SpeedSchedule | None = None):
        self.params = VehicleParams() if params is None else params
        self.pend = derive(self.params).pend
        self._p = pack(self.params)
        if nu_unit not in ("deg", "rad"):
            raise ValueError("nu_unit must be 'deg' or 'rad'")
        self.nu_unit = nu_unit
        self._to_rad = math.pi / 180.0 if nu_unit == "deg" else 1.0
        self.nu_lower = np.array([-float(nu_limit)])
        self.nu_upper = np.array([float(nu_limit)])
        lim = self.params.LTR_lim
        self.y_lower = np.array([-lim])
        self.y_upper = np.array([lim])
        self.speed = SpeedSchedule(self.params.V) if speed is None else speed
        self._ltr_scale = -2.0 / (self.params.mass * G * self.params.W)

    def initial_state(self) -> np.ndarray:
        return rest_state()

    def delta_f(self, nu) -> float:
        """Front-wheel angle (rad) for a reference in the plant's units."""
        return self.params.k_deltaf * self._to_rad * float(np.ravel(nu)[0])

    def derivatives(self, x, nu, t=0.0):
        xdot, ok = _dyn.rhs(np.asarray(x, dtype=float), self.delta_f(nu), self.speed(t), self._p)
        if not ok:
            raise ModelSingularityError(f"singular mass matrix at state {list(x)}")
        return xdot

    def output(self, x, nu):
        x = np.asarray(x, dtype=float)
        y = self._ltr_scale * (self.params.k_phi * x[..., 0] + self.params.c_phi * x[..., 1])
        return np.atleast_1d(y)[..., None] if x.ndim > 1 else np.atleast_1d(y)

    def simulate(self, x0, nu, duration, dt, t0=0.0) -> Trajectory:
        n = steps_for(duration, dt)
        s = self.speed
        xs, status = _dyn.rk4_run(np.asarray(x0, dtype=float), self.delta_f(nu), dt, n, t0,
                                  s.v0, s.rate, s.v_min, s.v_max, self._p)
        if status == 1:
            raise ModelSingularityError("singular mass matrix during simulation")
        if status == 2:
            raise IntegrationFault("non-finite truck state during simulation")
        t = t0 + dt * np.arange(n + 1)
        return Trajectory(t, xs, self.output(xs, nu).reshape(n + 1, 1))

    def with_speed(self, speed: SpeedSchedule) -> "TruckPlant":
        return TruckPlant(self.params, float(self.nu_upper[0]), self.nu_unit, speed)
