"""Hölder constants of the deviation functional: sampled estimates and LTI bounds."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize_scalar

from .governor import ProductNorm
from .learning import measure_dtilde


@dataclass
class HolderEstimate:
    """Sampled Hölder constant with the evidence behind it."""

    L: float
    beta: float
    sample_count: int
    max_observed_ratio: float
    safety_factor: float
    rng_seed: int = 0
    samples: np.ndarray = field(default=None, repr=False)
    ratios: np.ndarray = field(default=None, repr=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# L={self.L!r} beta={self.beta!r} L_raw={self.max_observed_ratio!r} "
                  f"safety_factor={self.safety_factor!r} samples={self.sample_count} "
                  f"rng_seed={self.rng_seed}\n")
        w = csv.writer(buf, lineterminator="\n")
        n = 0 if self.samples is None else self.samples.shape[1]
        w.writerow(["sample"] + [f"z{j}" for j in range(n)] + ["ratio"])
        for i in range(self.sample_count):
            w.writerow([i] + [repr(float(v)) for v in self.samples[i]] + [repr(float(self.ratios[i]))])
        return buf.getvalue()


def _weights(norm: ProductNorm, n_nu: int, n_x: int) -> np.ndarray:
    return np.concatenate([np.broadcast_to(norm.w_nu, (n_nu,)), np.broadcast_to(norm.w_dnu, (n_nu,)),
                           np.broadcast_to(norm.w_dx, (n_x,))]).astype(float)


def _split(z, n_nu):
    return z[:n_nu], z[n_nu:2 * n_nu], z[2 * n_nu:]


def znorm(norm: ProductNorm, z, n_nu: int) -> float:
    return float(norm.full(*_split(np.asarray(z, dtype=float), n_nu)))


def steepest_direction(norm: ProductNorm, grad, n_nu: int) -> np.ndarray:
    """Unit vector (in ``norm``) maximizing the directional derivative ``grad . u``."""
    grad = np.asarray(grad, dtype=float)
    n_x = grad.size - 2 * n_nu
    w = _weights(norm, n_nu, n_x)
    blocks = [slice(0, n_nu), slice(n_nu, 2 * n_nu), slice(2 * n_nu, grad.size)]
    u = np.zeros_like(grad)
    duals = [np.linalg.norm(grad[b] / w[b]) for b in blocks]
    chosen = blocks if norm.kind == "max" else [blocks[int(np.argmax(duals))]]
    for b in chosen:
        dual = np.linalg.norm(grad[b] / w[b])
        if dual > 0:
            u[b] = grad[b] / w[b] ** 2 / dual
    return u


def estimate_holder_sampling(plant, steady_state_map, sample_count, beta_fixed=1.0, rng_seed=0,
                             safety_factor=1.1, norm: ProductNorm | None = None, horizon_T=10.0,
                             dt=None, nu_range=None, dx_scale=None, rel_step=1e-3) -> HolderEstimate:
    """Estimate ``L`` for a fixed ``beta`` from finite-difference ratios of the deviation bound.

    Each sample ``z = (nu, delta_nu, delta_x)`` is drawn uniformly: ``nu``
    over ``nu_range``, ``delta_nu`` so that ``nu + delta_nu`` stays in range
    and ``delta_x`` in the box ``[-dx_scale, dx_scale]``.  Ratios
    ``|dD| / ||dz||^(1/beta)`` are measured on central-difference pairs along
    every coordinate and along the steepest direction of the resulting
    gradient; perturbations are ``rel_step * max(|z_j|, 1/w_j)``.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be at least 1")
    if not beta_fixed >= 1:
        raise ValueError("beta must be at least 1")
    if not safety_factor >= 1:
        raise ValueError("safety_factor must be at least 1")
    norm = ProductNorm() if norm is None else norm
    n_nu = int(getattr(plant, "n_input", 1))
    n_x = int(plant.n_state)
    lo, hi = ((plant.nu_lower, plant.nu_upper) if nu_range is None else
              (np.atleast_1d(np.asarray(v, dtype=float)) for v in nu_range))
    lo, hi = np.broadcast_to(lo, (n_nu,)).astype(float), np.broadcast_to(hi, (n_nu,)).astype(float)
    dx_scale = np.zeros(n_x) if dx_scale is None else np.broadcast_to(dx_scale, (n_x,)).astype(float)
    dt = horizon_T / 1000.0 if dt is None else dt
    w = _weights(norm, n_nu, n_x)
    inv_beta = 1.0 / beta_fixed

    def deviation(z):
        nu, dnu, dx = _split(z, n_nu)
        x0 = steady_state_map.state(nu) + dx
        return measure_dtilde(plant, nu, dnu, x0, horizon_T, 0.0, y_ref=steady_state_map.output(nu), dt=dt)

    rng = np.random.default_rng(rng_seed)
    samples = np.empty((sample_count, 2 * n_nu + n_x))
    ratios = np.empty(sample_count)
    # interior margin keeps every perturbed reference inside the range
    margin = 2 * rel_step * np.maximum(np.abs(np.concatenate([lo, hi])).reshape(2, -1).max(0), 1 / w[:n_nu])
    for i in range(sample_count):
        nu = rng.uniform(lo + margin, hi - margin)
        dnu = rng.uniform(lo + margin - nu, hi - margin - nu)
        dx = rng.uniform(-dx_scale, dx_scale)
        z = np.concatenate([nu, dnu, dx])
        samples[i] = z
        h = rel_step * np.maximum(np.abs(z), 1.0 / w)
        grad = np.empty_like(z)
        best = 0.0
        for j in range(z.size):
            e = np.zeros_like(z)
            e[j] = h[j]
            diff = deviation(z + e) - deviation(z - e)
            grad[j] = diff / (2 * h[j])
            best = max(best, abs(diff) / znorm(norm, 2 * e, n_nu) ** inv_beta)
        u = steepest_direction(norm, grad, n_nu)
        if np.any(u):
            e = rel_step * max(znorm(norm, z, n_nu), 1.0) * u
            diff = deviation(z + e) - deviation(z - e)
            best = max(best, abs(diff) / znorm(norm, 2 * e, n_nu) ** inv_beta)
        ratios[i] = best
    raw = float(ratios.max())
    return HolderEstimate(L=safety_factor * raw, beta=float(beta_fixed), sample_count=sample_count,
                          max_observed_ratio=raw, safety_factor=float(safety_factor), rng_seed=rng_seed,
                          samples=samples, ratios=ratios)


def _as_matrices(A, B, C, F):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    C = np.asarray(C, dtype=float).reshape(-1, n)
    m = B.shape[1]
    F = np.zeros((C.shape[0], m)) if F is None else np.asarray(F, dtype=float).reshape(C.shape[0], m)
    return A, B, C, F


def _check_hurwitz(A):
    lam = np.linalg.eigvals(A)
    if not np.all(lam.real < 0):
        raise ValueError(f"A is not Hurwitz (max Re = {lam.real.max():.3g})")
    return lam


def exp_norm_sup(A, n_samples=2000) -> float:
    """``sup_t ||exp(A t)||_2`` over ``t >= 0`` for Hurwitz ``A``.

    Samples ``[0, 10 / |Re lambda_max|]`` and refines the best sample locally.
    Past the horizon ``t_h`` the norm is bounded by the sampled maximum times
    powers of ``||exp(A t_h)||``, so the horizon is doubled until that factor
    is below one.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    lam = _check_hurwitz(A)
    horizon = 10.0 / abs(lam.real.max())
    for _ in range(20):
        if np.linalg.norm(expm(A * horizon), 2) < 1.0:
            break
        horizon *= 2.0
    else:
        raise ValueError("matrix exponential does not contract over any tested horizon")
    ts = np.linspace(0.0, horizon, n_samples)
    step = expm(A * (ts[1] - ts[0]))
    E = np.eye(A.shape[0])
    vals = np.empty(n_samples)
    for k in range(n_samples):
        vals[k] = np.linalg.norm(E, 2)
        E = step @ E
    k = int(np.argmax(vals))
    best = float(vals[k])
    if 0 < k < n_samples - 1:
        res = minimize_scalar(lambda t: -np.linalg.norm(expm(A * t), 2),
                              bounds=(ts[k - 1], ts[k + 1]), method="bounded",
                              options={"xatol": 1e-12})
        best = max(best, -float(res.fun))
    return best


def lti_lipschitz_bound(A, B, C, F=None):
    """Closed-form Lipschitz constant of the deviation functional of a stable LTI plant.

    Returns ``(L_prime, eta)`` with ``eta = sup_t ||exp(At)||`` and
    ``L_prime = max(eta ||C||, (eta + 1) ||C A^-1|| ||B|| + ||F||)``, all
    norms Euclidean-induced.  The bound holds for the sum norm
    ``||nu|| + ||delta_nu|| + ||delta_x||``.
    """
    A, B, C, F = _as_matrices(A, B, C, F)
    eta = exp_norm_sup(A)
    CAi = C @ np.linalg.inv(A)
    two = lambda M: float(np.linalg.norm(M, 2)) if M.size else 0.0
    L_prime = max(eta * two(C), (eta + 1.0) * two(CAi) * two(B) + two(F))
    return L_prime, eta


def signed_power(v, p):
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.abs(v) ** p


def lti_deviation(A, B, C, F, nu, delta_nu, delta_x, input_exponent=1.0, n_samples=4000,
                  horizon=None, refine=True):
    """Deviation functional of ``x' = Ax + Bu``, ``y = Cx + Fu`` with ``u = nu^(input_exponent)``.

    Vectorised over the leading axis of ``nu`` (``(P, m)``), ``delta_nu``
    and ``delta_x`` (``(P, n)``).  The supremum over ``t >= 0`` is taken over a
    dense grid on ``[0, horizon]`` (default ``12 / |Re lambda_max|``), the
    limit ``t -> inf``, and a local refinement around the best grid point.
    """
    A, B, C, F = _as_matrices(A, B, C, F)
    lam = _check_hurwitz(A)
    n, m = B.shape
    nu = np.asarray(nu, dtype=float).reshape(-1, m)
    dnu = np.asarray(delta_nu, dtype=float).reshape(-1, m)
    dx = np.asarray(delta_x, dtype=float).reshape(-1, n)
    du = signed_power(nu + dnu, input_exponent) - signed_power(nu, input_exponent)
    horizon = 12.0 / abs(lam.real.max()) if horizon is None else horizon
    Ai = np.linalg.inv(A)
    # error e = x - x_nu obeys e' = A e + B du; exact sampling with an augmented exponential
    aug = np.zeros((n + m, n + m))
    aug[:n, :n], aug[:n, n:] = A, B
    h = horizon / (n_samples - 1)
    Phi = expm(aug * h)
    Z = np.vstack([dx.T, du.T])
    Cz = np.hstack([C, F])
    best = np.linalg.norm(Cz @ Z, axis=0)
    t_best = np.zeros(len(nu))
    for k in range(1, n_samples):
        Z = Phi @ Z
        val = np.linalg.norm(Cz @ Z, axis=0)
        better = val > best
        best = np.where(better, val, best)
        t_best = np.where(better, k * h, t_best)
    limit = np.linalg.norm((F - C @ Ai @ B) @ du.T, axis=0)
    best = np.maximum(best, limit)
    if refine:
        for p in np.flatnonzero(t_best > 0):
            def neg(t, p=p):
                e = expm(A * t) @ dx[p] + Ai @ (expm(A * t) - np.eye(n)) @ B @ du[p]
                return -np.linalg.norm(C @ e + F @ du[p])
            res = minimize_scalar(neg, bounds=(max(t_best[p] - h, 0.0), t_best[p] + h),
                                  method="bounded", options={"xatol": 1e-12})
            best[p] = max(best[p], -res.fun)
    return best


@dataclass
class HolderProbeReport:
    L: float
    beta: float
    probe_count: int
    max_ratio: float
    failures: int
    rng_seed: int
    ratios: np.ndarray = field(repr=False, default=None)

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# L={self.L!r} beta={self.beta!r} probes={self.probe_count} "
                  f"max_ratio={self.max_ratio!r} failures={self.failures} rng_seed={self.rng_seed}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["probe", "ratio"])
        for i, r in enumerate(self.ratios):
            w.writerow([i, repr(float(r))])
        return buf.getvalue()


def draw_probe_pairs(rng, n_nu, n_x, probe_count, box=1.0):
    """Random pairs ``(z1, z2)`` with separations spread over four decades."""
    z1 = rng.uniform(-box, box, size=(probe_count, 2 * n_nu + n_x))
    direction = rng.normal(size=z1.shape)
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    scale = box * 10.0 ** rng.uniform(-4, 0, size=(probe_count, 1))
    return z1, z1 + scale * direction


def verify_holder_on_lti(A, B, C, F, L, beta=1.0, probe_count=1000, rng_seed=0,
                         norm: ProductNorm | None = None, box=1.0, input_exponent=1.0,
                         rel_tol=1e-9) -> HolderProbeReport:
    """Check ``|D(z1) - D(z2)| <= L ||z1 - z2||^(1/beta)`` on random probe pairs.

    ``D`` is evaluated from the explicit LTI solution; the default norm is the
    unit-weight sum norm under which the closed-form bound holds.  A pair
    fails when its ratio exceeds ``L`` by more than ``rel_tol`` relative.
    """
    A, B, C, F = _as_matrices(A, B, C, F)
    n, m = B.shape
    norm = ProductNorm(kind="sum") if norm is None else norm
    rng = np.random.default_rng(rng_seed)
    z1, z2 = draw_probe_pairs(rng, m, n, probe_count, box)
    d1 = lti_deviation(A, B, C, F, z1[:, :m], z1[:, m:2 * m], z1[:, 2 * m:], input_exponent)
    d2 = lti_deviation(A, B, C, F, z2[:, :m], z2[:, m:2 * m], z2[:, 2 * m:], input_exponent)
    dz = z1 - z2
    dist = norm.full(dz[:, :m], dz[:, m:2 * m], dz[:, 2 * m:])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(dist > 0, np.abs(d1 - d2) / dist ** (1.0 / beta), 0.0)
    failures = int(np.sum(ratios > L * (1.0 + rel_tol)))
    return HolderProbeReport(L=float(L), beta=float(beta), probe_count=probe_count,
                             max_ratio=float(ratios.max()), failures=failures, rng_seed=rng_seed,
                             ratios=ratios)
