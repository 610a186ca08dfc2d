"""Learning reference governor: dataset, deviation bound and step-size selection.

Points live in the product space ``z = (nu, delta_nu, delta_x)``.  The norm on
that space is a :class:`ProductNorm`; every sub-norm used below is its
restriction to a coordinate subspace, so all triangle-inequality steps that
justify the safety certificate hold exactly.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np


def _vec(v, n=None) -> np.ndarray:
    a = np.atleast_1d(np.asarray(v, dtype=float)).reshape(-1)
    if n is not None and a.size != n:
        raise ValueError(f"expected a vector of length {n}, got {a.size}")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite input")
    return a


@dataclass(frozen=True)
class ProductNorm:
    """Norm on ``(nu, delta_nu, delta_x)``.

    Each block is a weighted Euclidean norm ``||w * v||_2`` (weights may be a
    scalar or one per component); blocks are combined by their maximum
    (``kind="max"``) or their sum (``kind="sum"``).
    """

    w_nu: object = 1.0
    w_dnu: object = 1.0
    w_dx: object = 1.0
    kind: str = "max"

    def __post_init__(self):
        for name in ("w_nu", "w_dnu", "w_dx"):
            w = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if np.any(w <= 0) or not np.all(np.isfinite(w)):
                raise ValueError(f"{name} must be positive and finite")
            object.__setattr__(self, name, tuple(w.tolist()))
        if self.kind not in ("max", "sum"):
            raise ValueError("kind must be 'max' or 'sum'")

    @staticmethod
    def _block(v, w) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        w = np.asarray(w)
        if v.ndim == 1:
            return np.sqrt(np.sum((w * v) ** 2))
        return np.sqrt(np.sum((w * v) ** 2, axis=-1))

    def nu(self, v):
        return self._block(v, self.w_nu)

    def dnu(self, v):
        return self._block(v, self.w_dnu)

    def dx(self, v):
        return self._block(v, self.w_dx)

    def combine(self, *parts):
        if self.kind == "max":
            out = parts[0]
            for p in parts[1:]:
                out = np.maximum(out, p)
            return out
        return sum(parts)

    def full(self, nu, dnu, dx):
        return self.combine(self.nu(nu), self.dnu(dnu), self.dx(dx))

    def nu_dx(self, nu, dx):
        """Restriction to the subspace ``(nu, 0, delta_x)``."""
        return self.combine(self.nu(nu), self.dx(dx))

    def dnu_dx(self, dnu, dx):
        """Restriction to the subspace ``(0, delta_nu, delta_x)``."""
        return self.combine(self.dnu(dnu), self.dx(dx))

    def dnu_weight_matrix(self, n) -> np.ndarray:
        """``Q`` with ``||v||_dnu = sqrt(v' Q v)``."""
        w = np.broadcast_to(np.asarray(self.w_dnu), (n,))
        return np.diag(w**2)


@dataclass(frozen=True)
class GovernorConfig:
    """Constants of the governor.

    ``horizon_T`` is the length of the trajectory segment behind each
    deviation measurement and ``sample_period`` the governor update period;
    during learning they coincide.  ``lam`` and ``delta_v1`` parameterize the
    progress-enforcing update law.
    """

    holder_L: float
    holder_beta: float = 1.0
    horizon_T: float = 1.0
    epsilon: float = 0.01
    sample_period: float = 1.0
    lam: float = 1e-3
    delta_v1: float = 1e-3
    norm: ProductNorm = field(default_factory=ProductNorm)

    def __post_init__(self):
        if not self.holder_L > 0:
            raise ValueError("holder_L must be positive")
        if not self.holder_beta >= 1:
            raise ValueError("holder_beta must be at least 1")
        for name in ("horizon_T", "epsilon", "sample_period", "lam", "delta_v1"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def replace(self, **changes) -> "GovernorConfig":
        import dataclasses
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class DataPoint:
    nu: np.ndarray
    delta_nu: np.ndarray
    delta_x: np.ndarray
    d_tilde: float

    def __post_init__(self):
        for name in ("nu", "delta_nu", "delta_x"):
            object.__setattr__(self, name, _vec(getattr(self, name)))
        if not (math.isfinite(self.d_tilde) and self.d_tilde >= 0):
            raise ValueError("d_tilde must be finite and non-negative")


class Dataset:
    """Growable column store of data points (insertion order preserved)."""

    def __init__(self, n_nu: int, n_x: int, capacity: int = 256):
        self.n_nu, self.n_x = n_nu, n_x
        self._nu = np.empty((capacity, n_nu))
        self._dnu = np.empty((capacity, n_nu))
        self._dx = np.empty((capacity, n_x))
        self._dt = np.empty(capacity)
        self._n = 0

    def __len__(self):
        return self._n

    def _grow(self):
        cap = 2 * len(self._dt)
        for name in ("_nu", "_dnu", "_dx", "_dt"):
            old = getattr(self, name)
            new = np.empty((cap,) + old.shape[1:])
            new[: self._n] = old[: self._n]
            setattr(self, name, new)

    def append(self, nu, delta_nu, delta_x, d_tilde):
        nu, dnu, dx = _vec(nu, self.n_nu), _vec(delta_nu, self.n_nu), _vec(delta_x, self.n_x)
        if not (math.isfinite(d_tilde) and d_tilde >= 0):
            raise ValueError("d_tilde must be finite and non-negative")
        if self._n == len(self._dt):
            self._grow()
        i = self._n
        self._nu[i], self._dnu[i], self._dx[i], self._dt[i] = nu, dnu, dx, d_tilde
        self._n += 1

    def add(self, point: DataPoint):
        self.append(point.nu, point.delta_nu, point.delta_x, point.d_tilde)

    @property
    def nu(self):
        return self._nu[: self._n]

    @property
    def delta_nu(self):
        return self._dnu[: self._n]

    @property
    def delta_x(self):
        return self._dx[: self._n]

    @property
    def d_tilde(self):
        return self._dt[: self._n]

    def __getitem__(self, i) -> DataPoint:
        if not -self._n <= i < self._n:
            raise IndexError(i)
        i %= self._n
        return DataPoint(self._nu[i].copy(), self._dnu[i].copy(), self._dx[i].copy(), float(self._dt[i]))

    def __iter__(self):
        for i in range(self._n):
            yield self[i]

    def copy(self) -> "Dataset":
        out = Dataset(self.n_nu, self.n_x, max(len(self), 1))
        out._nu[: self._n] = self.nu
        out._dnu[: self._n] = self.delta_nu
        out._dx[: self._n] = self.delta_x
        out._dt[: self._n] = self.d_tilde
        out._n = self._n
        return out

    def head(self, n: int) -> "Dataset":
        """The first ``n`` points in insertion order (a copy)."""
        return self.subset(np.arange(min(max(n, 0), self._n)))

    def subset(self, index) -> "Dataset":
        index = np.asarray(index, dtype=int)
        out = Dataset(self.n_nu, self.n_x, max(len(index), 1))
        out._nu[: len(index)] = self.nu[index]
        out._dnu[: len(index)] = self.delta_nu[index]
        out._dx[: len(index)] = self.delta_x[index]
        out._dt[: len(index)] = self.d_tilde[index]
        out._n = len(index)
        return out

    def to_csv(self, norm: ProductNorm | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        buf.write(f"# n_nu={self.n_nu} n_x={self.n_x}\n")
        if norm is not None:
            buf.write(f"# norm kind={norm.kind} w_nu={' '.join(map(repr, norm.w_nu))} "
                      f"w_dnu={' '.join(map(repr, norm.w_dnu))} w_dx={' '.join(map(repr, norm.w_dx))}\n")
        w.writerow([f"nu{i}" for i in range(self.n_nu)] + [f"dnu{i}" for i in range(self.n_nu)]
                   + [f"dx{i}" for i in range(self.n_x)] + ["d_tilde"])
        for i in range(self._n):
            w.writerow([repr(float(v)) for v in np.concatenate(
                [self._nu[i], self._dnu[i], self._dx[i], [self._dt[i]]])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str):
        """Parse dataset CSV; returns ``(dataset, norm_or_None)``."""
        meta, norm = {}, None
        lines = text.splitlines()
        body = []
        for line in lines:
            if line.startswith("#"):
                tokens = line[1:].split()
                if tokens and tokens[0] == "norm":
                    spec, key = {}, None
                    for tok in tokens[1:]:
                        if "=" in tok:
                            key, val = tok.split("=", 1)
                            spec[key] = [val]
                        elif key is not None:
                            spec[key].append(tok)
                    norm = ProductNorm(w_nu=[float(v) for v in spec["w_nu"]],
                                       w_dnu=[float(v) for v in spec["w_dnu"]],
                                       w_dx=[float(v) for v in spec["w_dx"]], kind=spec["kind"][0])
                else:
                    # other comment lines (provenance headers) are ignored
                    for tok in tokens:
                        k, _, v = tok.partition("=")
                        if k in ("n_nu", "n_x"):
                            meta[k] = int(v)
            elif line.strip():
                body.append(line)
        n_nu, n_x = meta["n_nu"], meta["n_x"]
        rows = list(csv.reader(body))[1:]
        ds = cls(n_nu, n_x, max(len(rows), 1))
        for r in rows:
            v = np.array([float(t) for t in r])
            if not np.all(np.isfinite(v)):
                raise ValueError("non-finite value in dataset CSV")
            ds.append(v[:n_nu], v[n_nu:2 * n_nu], v[2 * n_nu:2 * n_nu + n_x], v[-1])
        return ds, norm


def dbar_estimate(dataset: Dataset | None, nu, delta_nu, delta_x, config: GovernorConfig) -> float:
    """Hölder-interpolation upper bound on the deviation functional at a query."""
    norm, L, inv_beta = config.norm, config.holder_L, 1.0 / config.holder_beta
    nu, dnu, dx = _vec(nu), _vec(delta_nu), _vec(delta_x)
    best = L * float(norm.dnu_dx(dnu, dx)) ** inv_beta
    if dataset is not None and len(dataset):
        dist = norm.full(nu - dataset.nu, dnu - dataset.delta_nu, dx - dataset.delta_x)
        best = min(best, float(np.min(dataset.d_tilde + L * dist**inv_beta)))
    return max(best, 0.0)


def _radius(d, d_tilde, dist, config):
    """Admissible step radius ``((d - D_i)/L)^beta - dist``; NaN marks no headroom."""
    head = np.asarray(d - d_tilde, dtype=float)
    with np.errstate(invalid="ignore"):
        rad = np.where(head >= 0, (np.maximum(head, 0.0) / config.holder_L) ** config.holder_beta, np.nan)
    return rad - dist


def _check_args(nu, r, x_dev, d):
    if not math.isfinite(d) or d < 0:
        raise ValueError(f"distance must be finite and non-negative, got {d}")
    return _vec(nu), _vec(r), _vec(x_dev)


def kappa_closed_scalar(point: DataPoint, nu, r, x_dev, d, config: GovernorConfig) -> float:
    """Largest feasible step fraction for one data point, scalar reference."""
    nu, r, x_dev = _check_args(nu, r, x_dev, d)
    if nu.size != 1:
        raise ValueError("scalar closed form needs a scalar reference")
    norm = config.norm
    w = float(np.asarray(norm.w_dnu).reshape(-1)[0])
    step = float(r[0] - nu[0])
    if step == 0.0:
        raise ValueError("r must differ from nu")
    rad = float(_radius(d, point.d_tilde, norm.nu_dx(nu - point.nu, x_dev - point.delta_x), config))
    if not rad >= 0:
        return 0.0
    # |kappa * step - dnu_i| <= rad / w  is an interval in kappa
    ends = sorted(((point.delta_nu[0] + rad / w) / step, (point.delta_nu[0] - rad / w) / step))
    if ends[1] < 0.0 or ends[0] > 1.0:
        return 0.0
    return min(ends[1], 1.0)


def kappa_closed_quadratic(point: DataPoint, nu, r, x_dev, d, config: GovernorConfig) -> float:
    """Largest feasible step fraction for one data point, quadratic step norm."""
    return float(_kappa_quadratic_all(point.nu[None], point.delta_nu[None], point.delta_x[None],
                                      np.array([point.d_tilde]), *_check_args(nu, r, x_dev, d), d,
                                      config)[0])


def _kappa_quadratic_all(P_nu, P_dnu, P_dx, P_dt, nu, r, x_dev, d, config):
    norm = config.norm
    Q = norm.dnu_weight_matrix(nu.size)
    step = r - nu
    a = float(step @ Q @ step)
    if a == 0.0:
        raise ValueError("r must differ from nu")
    rad = _radius(d, P_dt, norm.nu_dx(nu - P_nu, x_dev - P_dx), config)
    b = P_dnu @ Q @ step
    c = np.einsum("ij,jk,ik->i", P_dnu, Q, P_dnu) - rad**2
    disc = b * b - a * c
    ok = (rad >= 0) & (disc >= 0)
    root = np.sqrt(np.where(ok, disc, 0.0))
    hi = (b + root) / a
    lo = (b - root) / a
    ok &= (hi >= 0.0) & (lo <= 1.0)
    return np.where(ok, np.minimum(hi, 1.0), 0.0)


def kappa_bisection(point: DataPoint, nu, r, x_dev, d, config: GovernorConfig,
                    tol: float = 1e-10, max_iter: int = 200) -> float:
    """Largest feasible step fraction by direct search on the convex constraint.

    Minimizes the constraint slack by golden-section search, then bisects
    between the best feasible point and 1.
    """
    nu, r, x_dev = _check_args(nu, r, x_dev, d)
    norm = config.norm
    step = r - nu
    if float(norm.dnu(step)) == 0.0:
        raise ValueError("r must differ from nu")
    rad = float(_radius(d, point.d_tilde, norm.nu_dx(nu - point.nu, x_dev - point.delta_x), config))
    if not rad >= 0:
        return 0.0

    def slack(k):
        return float(norm.dnu(k * step - point.delta_nu)) - rad

    if slack(1.0) <= 0:
        return 1.0
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    lo, hi = 0.0, 1.0
    x1, x2 = hi - inv_phi * (hi - lo), lo + inv_phi * (hi - lo)
    f1, f2 = slack(x1), slack(x2)
    for _ in range(max_iter):
        if hi - lo < tol:
            break
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - inv_phi * (hi - lo)
            f1 = slack(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + inv_phi * (hi - lo)
            f2 = slack(x2)
    k_min = min((lo, hi, 0.5 * (lo + hi)), key=slack)
    if slack(k_min) > 0:
        return 0.0
    feas, infeas = k_min, 1.0
    for _ in range(max_iter):
        if infeas - feas < tol:
            break
        mid = 0.5 * (feas + infeas)
        if slack(mid) <= 0:
            feas = mid
        else:
            infeas = mid
    return feas


def kappa_for_datapoint(point: DataPoint, nu, r, x_dev, d, config: GovernorConfig,
                        method: str = "closed") -> float:
    """Largest ``kappa`` in [0, 1] certified by a single data point (0 if none)."""
    if method == "bisection":
        return kappa_bisection(point, nu, r, x_dev, d, config)
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")
    if np.size(nu) == 1:
        return kappa_closed_scalar(point, nu, r, x_dev, d, config)
    return kappa_closed_quadratic(point, nu, r, x_dev, d, config)


def kappa_fallback(nu, r, x_dev, d, config: GovernorConfig) -> float:
    """Step fraction certified without data, from ``D(nu, 0, 0) = 0``."""
    nu, r, x_dev = _check_args(nu, r, x_dev, d)
    norm = config.norm
    gap = float(norm.dnu(r - nu))
    if gap == 0.0:
        raise ValueError("r must differ from nu")
    budget = (d / config.holder_L) ** config.holder_beta
    return float(np.clip((budget - float(norm.dx(x_dev))) / gap, 0.0, 1.0))


@dataclass
class KappaResult:
    kappa: float
    certificates: list  # indices of maximizing data points; -1 denotes the fallback

    def __float__(self):
        return self.kappa


def compute_kappa(dataset: Dataset | None, x_dev, r, nu, d, config: GovernorConfig) -> KappaResult:
    """Largest step fraction certified by the dataset or the fallback bound."""
    nu, r, x_dev = _check_args(nu, r, x_dev, d)
    if np.array_equal(nu, r):
        return KappaResult(1.0, [])
    k_fb = kappa_fallback(nu, r, x_dev, d, config)
    if dataset is None or len(dataset) == 0:
        return KappaResult(k_fb, [-1])
    ks = _kappa_quadratic_all(dataset.nu, dataset.delta_nu, dataset.delta_x, dataset.d_tilde,
                              nu, r, x_dev, d, config)
    best = max(float(ks.max()), k_fb)
    certs = np.flatnonzero(ks == best).tolist()
    if k_fb == best:
        certs.append(-1)
    return KappaResult(best, certs)


def apply_update(nu_minus, r, kappa):
    if not 0.0 <= kappa <= 1.0:
        raise ValueError("kappa must lie in [0, 1]")
    nu_minus = np.asarray(nu_minus, dtype=float)
    r = np.asarray(r, dtype=float)
    if kappa == 1.0:
        return r.copy()
    return nu_minus + kappa * (r - nu_minus)


def check_progress_parameters(d_r, config: GovernorConfig):
    bound = (min(d_r, config.delta_v1) / config.holder_L) ** config.holder_beta
    if not config.lam < bound:
        raise ValueError(f"lam={config.lam} must be below (min(d(r), delta)/L)^beta = {bound:.6g}")


def apply_update_enhanced(nu_minus, r, kappa, distance, config: GovernorConfig):
    """Update that only moves when the move is admissible and makes real progress.

    ``distance`` maps a reference to ``d(nu)`` (a callable or an object with a
    ``distance`` method); references it refuses count as inadmissible.
    """
    dist = distance.distance if hasattr(distance, "distance") else distance
    d_r = dist(r)
    check_progress_parameters(d_r, config)
    candidate = apply_update(nu_minus, r, kappa)
    nu_minus = np.asarray(nu_minus, dtype=float)
    norm = config.norm
    try:
        admissible = dist(candidate) >= min(d_r, config.delta_v1)
    except ValueError:
        admissible = False
    progress = float(norm.dnu(candidate - r)) <= max(float(norm.dnu(nu_minus - r)) - config.lam, 0.0)
    return candidate if (admissible and progress) else nu_minus.copy()


class Governor:
    """Online governor state: the current reference, the dataset and the phase.

    ``steady_map`` supplies ``x_nu(nu)`` and ``d(nu)``; it may be a
    :class:`lrg.simkit.SteadyStateMap` or any object with ``state`` and
    ``distance`` methods.
    """

    def __init__(self, config: GovernorConfig, steady_map, nu0, dataset: Dataset | None = None,
                 n_x: int | None = None, phase: str = "learning", enhanced: bool = False):
        self.config = config
        self.map = steady_map
        self.current_nu = _vec(nu0)
        if n_x is None:
            n_x = len(np.atleast_1d(steady_map.state(self.current_nu)))
        self.dataset = Dataset(self.current_nu.size, n_x) if dataset is None else dataset
        if phase not in ("learning", "operating"):
            raise ValueError("phase must be 'learning' or 'operating'")
        self.phase = phase
        self.enhanced = enhanced
        self.last = None

    def state_deviation(self, x):
        return _vec(x) - _vec(self.map.state(self.current_nu))

    def step(self, x, r) -> np.ndarray:
        """Update the reference at a sample instant and return the new value."""
        r = _vec(r, self.current_nu.size)
        nu = self.current_nu
        if hasattr(self.map, "path_usable") and not self.map.path_usable(nu, nu):
            raise ValueError(f"current reference {nu} is outside the usable steady-state map")
        x_dev = self.state_deviation(x)
        d = float(self.map.distance(nu))
        res = compute_kappa(self.dataset, x_dev, r, nu, d, self.config)
        if self.enhanced:
            new = apply_update_enhanced(nu, r, res.kappa, self.map, self.config)
        else:
            new = apply_update(nu, r, res.kappa)
        self.last = {"kappa": res.kappa, "certificates": res.certificates, "d": d, "x_dev": x_dev,
                     "nu_minus": nu.copy(), "delta_nu": new - nu}
        self.current_nu = np.asarray(new, dtype=float)
        return self.current_nu
