"""Coupled roll / yaw / side-slip / slosh dynamics of a partially filled tank truck.

State ordering is ``(phi, phi_dot, beta, r, theta, theta_dot)``: roll angle,
roll rate, vehicle slip angle, yaw rate, pendulum angle and pendulum rate.
The input is the front-wheel steering angle (rad).

The four accelerations ``(theta_dd, phi_dd, beta_dot, r_dot)`` are obtained
from a 4x4 linear system assembled from the pendulum equation in the rolling
tank frame, the lateral force balance, the yaw moment balance and the roll
moment balance.  The second pendulum equation (pendulum/roll coupling) is
not part of the closed system; :func:`unused_equation_residual` reports how
well a solution satisfies it.

The hot loops are compiled with numba; ``params`` is the flat vector built
by :func:`lrg.vehicle.params.pack`.
"""

import math

import numpy as np
from numba import njit

# indices into the packed parameter vector (see params._PACK_ORDER)
_M_T, _M_U, _M_F, _M_P, _A_P, _B_P, _B, _H_S, _H_F, _C, _E1, _E2 = range(12)
_LF, _LR, _KPHI, _CPHI, _IX, _IZ, _IXZ = range(12, 19)
_BF, _CF, _DF, _EF, _BR, _CR, _DR, _ER, _G = range(19, 28)

SINGULAR_PIVOT = 1e-12


class ModelSingularityError(ArithmeticError):
    """The acceleration system became (numerically) singular."""


@njit(cache=True)
def magic_formula(alpha, B, C, D, E):
    ba = B * alpha
    return D * math.sin(C * math.atan(ba - E * (ba - math.atan(ba))))


@njit(cache=True)
def slip_angles(delta_f, beta, r, V, l_f, l_r):
    alpha_f = delta_f - math.atan((V * beta + r * l_f) / V)
    alpha_r = -math.atan((V * beta - r * l_r) / V)
    return alpha_f, alpha_r


@njit(cache=True)
def pendulum_inertia(theta, m_p, a_p, b_p, height):
    """Point-mass inertia terms of the pendulum about the roll centre.

    Returns ``(I_xxp, I_zzp, I_xyp, I_xzp, I_yzp)``.  Relative to the roll
    centre the mass sits at ``y = a_p cos(theta)``, ``z = height + b_p sin(theta)``
    (``height`` is the roll-centre to tank-centre distance) on the tank's
    longitudinal station, so the x-products vanish.
    """
    y = a_p * math.cos(theta)
    z = height + b_p * math.sin(theta)
    return m_p * (y * y + z * z), m_p * y * y, 0.0, 0.0, m_p * y * z


@njit(cache=True)
def assemble(x, delta_f, V, p):
    """Mass matrix ``M`` and right-hand side ``h`` of ``M @ [th_dd, phi_dd, beta_d, r_d] = h``."""
    phi, dphi, beta, r, th, dth = x[0], x[1], x[2], x[3], x[4], x[5]
    m_t, m_u, m_f, m_p = p[_M_T], p[_M_U], p[_M_F], p[_M_P]
    ap, bp, b = p[_A_P], p[_B_P], p[_B]
    h_s, h_f, c, e1, e2 = p[_H_S], p[_H_F], p[_C], p[_E1], p[_E2]
    g = p[_G]

    sth, cth = math.sin(th), math.cos(th)
    sph, cph = math.sin(phi), math.cos(phi)
    s2th = 2.0 * sth * cth

    D1 = b * cph + ap * cth * sph + bp * sth * cph
    D2 = ap * sth * cph + bp * cth * sph
    D3 = ap * sth * sph - bp * cth * cph
    D4 = b * sph - ap * cth * cph + bp * sth * sph
    D5 = -ap * cth * cph + bp * sth * sph

    H = h_s + b
    E1 = (H + bp * sth) ** 2 + (ap * cth) ** 2
    E2 = ap * (H * sth + bp)
    E5 = 2.0 * ap * cth * (H * sth + bp) * (bp * (H + bp * sth) - ap * ap * sth) - E1 * ap * H * cth
    G = E2 / E1  # d(psi)/d(theta) = E4/E3
    dpsi = G * dth
    psi_dd_free = -E5 / (E1 * E1) * dth * dth
    droll_p = dphi + dpsi

    I_xxp, I_zzp, I_xyp, I_xzp, I_yzp = pendulum_inertia(th, m_p, ap, bp, H)

    alpha_f, alpha_r = slip_angles(delta_f, beta, r, V, p[_LF], p[_LR])
    Fyf = magic_formula(alpha_f, p[_BF], p[_CF], p[_DF], p[_EF])
    Fyr = magic_formula(alpha_r, p[_BR], p[_CR], p[_DR], p[_ER])

    # velocity-dependent part of the pendulum-mass lateral acceleration
    quad = 2.0 * D3 * dphi * dth + D4 * dphi * dphi + D5 * dth * dth

    M = np.zeros((4, 4))
    h = np.zeros(4)

    # pendulum in the rolling, translating tank frame; x_dd = V * beta_dot
    M[0, 0] = ap * ap * sth * sth + bp * bp * cth * cth
    M[0, 1] = ap * bp + ap * b * sth
    M[0, 2] = -V * D2
    h[0] = -(dphi * dphi * (0.5 * (ap * ap - bp * bp) * s2th - bp * b * cth)
             + 0.5 * dth * dth * (ap * ap - bp * bp) * s2th
             + g * (bp * cth * cph - ap * sth * sph))

    # lateral force balance
    m_sf = m_t + m_f
    M[1, 0] = -m_p * D2
    M[1, 1] = -m_sf * h_s - m_p * D1
    M[1, 2] = (m_sf + m_u + m_p) * V
    M[1, 3] = m_sf * c - m_u * e1
    h[1] = Fyf + Fyr - (m_sf + m_u) * V * r - m_p * quad

    # yaw moment balance
    M[2, 0] = m_p * e2 * D2 - I_xzp * G
    M[2, 1] = -p[_IXZ] + m_f * e2 * h_s + m_p * e2 * D1 - I_xzp
    M[2, 2] = -(m_f + m_p) * e2 * V
    M[2, 3] = p[_IZ] - m_f * e2 * c + I_zzp
    h[2] = (Fyf * p[_LF] - Fyr * p[_LR] + m_f * e2 * V * r + m_p * e2 * quad
            + I_xzp * psi_dd_free + I_xyp * droll_p * droll_p + I_yzp * r * droll_p)

    # roll moment balance
    M[3, 0] = -H * m_p * D2 + I_xxp * G
    M[3, 1] = p[_IX] - m_f * h_f * h_s - H * m_p * D1 + I_xxp
    M[3, 2] = (m_t * h_s + m_f * h_f + H * m_p) * V
    M[3, 3] = -p[_IXZ] + m_f * h_f * c - I_xzp
    h[3] = (-p[_KPHI] * phi - p[_CPHI] * dphi + phi * g * (m_t * h_s + m_f * h_f + H * m_p)
            - m_p * g * ap * cth
            - (m_t * h_s + m_f * h_f) * V * r - H * m_p * quad
            - I_xxp * psi_dd_free - I_xyp * r * droll_p - I_yzp * r * r)
    return M, h


@njit(cache=True)
def _solve4(M, h):
    """Row-equilibrated Gaussian elimination with partial pivoting.

    Returns ``(solution, ok)``; ``ok`` is False when a pivot falls below
    ``SINGULAR_PIVOT`` relative to the equilibrated rows.
    """
    n = 4
    A = M.copy()
    y = h.copy()
    for i in range(n):
        s = 0.0
        for j in range(n):
            s = max(s, abs(A[i, j]))
        if s == 0.0:
            return y, False
        for j in range(n):
            A[i, j] /= s
        y[i] /= s
    for k in range(n):
        piv = k
        best = abs(A[k, k])
        for i in range(k + 1, n):
            if abs(A[i, k]) > best:
                best = abs(A[i, k])
                piv = i
        if best < SINGULAR_PIVOT:
            return y, False
        if piv != k:
            for j in range(n):
                A[k, j], A[piv, j] = A[piv, j], A[k, j]
            y[k], y[piv] = y[piv], y[k]
        for i in range(k + 1, n):
            f = A[i, k] / A[k, k]
            for j in range(k, n):
                A[i, j] -= f * A[k, j]
            y[i] -= f * y[k]
    sol = np.zeros(n)
    for i in range(n - 1, -1, -1):
        s = y[i]
        for j in range(i + 1, n):
            s -= A[i, j] * sol[j]
        sol[i] = s / A[i, i]
    return sol, True


@njit(cache=True)
def rhs(x, delta_f, V, p):
    """State derivative; second return value flags a singular mass matrix."""
    M, h = assemble(x, delta_f, V, p)
    acc, ok = _solve4(M, h)
    out = np.empty(6)
    out[0] = x[1]
    out[1] = acc[1]
    out[2] = acc[2]
    out[3] = acc[3]
    out[4] = x[5]
    out[5] = acc[0]
    if p[_M_P] == 0.0:
        # without a moving liquid mass the slosh coordinate carries no physics
        out[4] = 0.0
        out[5] = 0.0
    return out, ok


@njit(cache=True)
def speed_at(t, v0, rate, v_lo, v_hi):
    v = v0 + rate * t
    if v < v_lo:
        return v_lo
    if v > v_hi:
        return v_hi
    return v


@njit(cache=True)
def rk4_run(x0, delta_f, dt, n_steps, t0, v0, rate, v_lo, v_hi, p):
    """Fixed-step RK4 with constant steering; speed follows a clipped ramp.

    Returns ``(states[n_steps + 1, 6], status)`` where status is 0 on success,
    1 for a singular mass matrix and 2 for a non-finite state; on failure the
    trajectory is truncated at the offending step (remaining rows are NaN).
    """
    xs = np.full((n_steps + 1, 6), np.nan)
    xs[0] = x0
    x = x0.copy()
    for k in range(n_steps):
        t = t0 + k * dt
        Va = speed_at(t, v0, rate, v_lo, v_hi)
        Vb = speed_at(t + 0.5 * dt, v0, rate, v_lo, v_hi)
        Vc = speed_at(t + dt, v0, rate, v_lo, v_hi)
        k1, ok1 = rhs(x, delta_f, Va, p)
        k2, ok2 = rhs(x + 0.5 * dt * k1, delta_f, Vb, p)
        k3, ok3 = rhs(x + 0.5 * dt * k2, delta_f, Vb, p)
        k4, ok4 = rhs(x + dt * k3, delta_f, Vc, p)
        if not (ok1 and ok2 and ok3 and ok4):
            return xs, 1
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for i in range(6):
            if not math.isfinite(x[i]):
                return xs, 2
        xs[k + 1] = x
    return xs, 0


@njit(cache=True)
def unused_equation_residual(x, xdot, V, p):
    """Residual of the pendulum/roll coupling equation left out of the closed system."""
    phi, dphi, th, dth = x[0], x[1], x[4], x[5]
    ap, bp, b, g = p[_A_P], p[_B_P], p[_B], p[_G]
    sth, cth = math.sin(th), math.cos(th)
    sph, cph = math.sin(phi), math.cos(phi)
    phi_dd, beta_d, th_dd = xdot[1], xdot[2], xdot[5]
    x_dd = V * beta_d
    D1 = b * cph + ap * cth * sph + bp * sth * cph
    return (phi_dd * ((b + bp * sth) ** 2 + ap * ap * cth * cth)
            + 2.0 * dth * dphi * (0.5 * (bp * bp - ap * ap) * 2.0 * sth * cth + bp * b * cth)
            + th_dd * (ap * bp + ap * b * sth)
            - x_dd * D1
            + dth * dth * ap * b * cth
            - g * ((b + bp * sth) * sph - ap * cth * cph))


@njit(cache=True)
def free_pendulum_rhs(theta, theta_dot, a_p, b_p, g):
    den = a_p * a_p * math.sin(theta) ** 2 + b_p * b_p * math.cos(theta) ** 2
    num = -(0.5 * theta_dot * theta_dot * (a_p * a_p - b_p * b_p) * math.sin(2.0 * theta)
            + g * b_p * math.cos(theta))
    return num / den


@njit(cache=True)
def free_pendulum_run(theta0, theta_dot0, a_p, b_p, g, dt, n_steps):
    out = np.empty((n_steps + 1, 2))
    th, w = theta0, theta_dot0
    out[0, 0], out[0, 1] = th, w
    for k in range(n_steps):
        a1 = free_pendulum_rhs(th, w, a_p, b_p, g)
        th2, w2 = th + 0.5 * dt * w, w + 0.5 * dt * a1
        a2 = free_pendulum_rhs(th2, w2, a_p, b_p, g)
        th3, w3 = th + 0.5 * dt * w2, w + 0.5 * dt * a2
        a3 = free_pendulum_rhs(th3, w3, a_p, b_p, g)
        th4, w4 = th + dt * w3, w + dt * a3
        a4 = free_pendulum_rhs(th4, w4, a_p, b_p, g)
        th = th + dt / 6.0 * (w + 2.0 * w2 + 2.0 * w3 + w4)
        w = w + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        out[k + 1, 0], out[k + 1, 1] = th, w
    return out
