"""Tank-truck parameter sets and the key/value configuration grammar.

Configuration files are plain text, one ``key = value`` pair per line, SI
units throughout.  ``#`` starts a comment.  Vector-valued keys
(``pend_m``, ``pend_b``) take nine whitespace- or comma-separated numbers.
Unknown keys are rejected.

Values marked *placeholder* below are not published for the reference
vehicle; they are engineering defaults chosen so the model behaves like a
light tank truck and must not be read as measured data.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

G = 9.81

# placeholder slosh-pendulum polynomial coefficients (see module docstring).
# Ordering of the nine terms: 1, D, L, D^2, D*L, L^2, D^3, D^2*L, D*L^2
# with D the fill ratio and L the tank aspect ratio.
DEFAULT_PEND_M = (0.85, -0.7, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
DEFAULT_PEND_B = (1.0, -0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


class ParameterError(ValueError):
    """Raised for physically invalid or unparseable vehicle parameters."""


@dataclass(frozen=True)
class PendulumParams:
    """Equivalent trammel pendulum of the sloshing liquid."""

    m_f: float
    m_p: float
    a_p: float
    b_p: float

    @property
    def natural_frequency(self) -> float:
        """Small-oscillation angular frequency about the rest position (rad/s)."""
        return math.sqrt(G * self.b_p) / self.a_p


@dataclass(frozen=True)
class TireParams:
    B: float
    C: float
    D: float
    E: float


@dataclass(frozen=True)
class VehicleParams:
    V: float = 25.0
    m_t: float = 1700.0
    m_u: float = 300.0
    m_l: float = 2000.0
    tank_a: float = 1.0
    tank_b: float = 1.0
    tank_length: float = 3.0  # placeholder
    fill_ratio: float = 0.5
    h_s: float = 0.858
    h_f: float | None = None  # None -> h_s + tank_b
    c: float = 0.0  # placeholder
    e_1: float = 0.0  # placeholder
    e_2: float = 0.0  # placeholder
    l_f: float = 1.160
    l_r: float = 1.750
    W: float = 2.0  # placeholder
    k_phi: float = 95707.0
    c_phi: float = 7471.0
    I_xxs: float = 1280.0
    I_zzs: float = 2800.0
    I_xzs: float = 0.0
    I_zzu: float | None = None  # None -> slender rod over the wheelbase
    I_xxf: float | None = None  # None -> homogeneous elliptic cylinder
    I_zzf: float | None = None
    I_xzf: float = 0.0
    B_mf: float = 10.0  # placeholder
    C_mf: float = 1.9  # placeholder
    D_mf: float = 0.8  # placeholder, peak force per unit mean axle load and unit friction
    mu: float = 0.5  # placeholder road friction coefficient
    E_mf: float = 0.97  # placeholder
    k_deltaf: float = 1.0 / 20.0
    pend_m: tuple = DEFAULT_PEND_M
    pend_b: tuple = DEFAULT_PEND_B
    LTR_lim: float = 1.0

    def __post_init__(self):
        for name in ("V", "m_t", "m_u", "W", "k_phi", "c_phi", "tank_a", "tank_b", "D_mf", "mu"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if self.m_l < 0:
            raise ParameterError("m_l must be non-negative")
        if not 0.0 < self.fill_ratio < 1.0:
            raise ParameterError(f"fill_ratio must lie in (0, 1), got {self.fill_ratio}")
        if not 0.0 < self.LTR_lim <= 1.0:
            raise ParameterError("LTR_lim must lie in (0, 1]")
        if len(self.pend_m) != 9 or len(self.pend_b) != 9:
            raise ParameterError("pend_m and pend_b need nine coefficients each")
        object.__setattr__(self, "pend_m", tuple(float(v) for v in self.pend_m))
        object.__setattr__(self, "pend_b", tuple(float(v) for v in self.pend_b))

    @property
    def mass(self) -> float:
        return self.m_t + self.m_u + self.m_l

    @property
    def aspect_ratio(self) -> float:
        return self.tank_b / self.tank_a

    def replace(self, **changes) -> "VehicleParams":
        return dataclasses.replace(self, **changes)

    def solid_load(self) -> "VehicleParams":
        """Same vehicle with the liquid frozen into the sprung mass."""
        return self.replace(m_t=self.m_t + self.m_l, m_l=0.0)

    def with_fill_ratio(self, fill_ratio: float, full_mass: float | None = None) -> "VehicleParams":
        """Change the fill ratio, scaling the liquid mass with the wetted cross-section.

        ``full_mass`` is the liquid mass of a completely full tank; by default
        it is inferred from the current ``m_l`` and ``fill_ratio``.
        """
        if full_mass is None:
            full_mass = self.m_l / ellipse_fill_fraction(self.fill_ratio)
        return self.replace(fill_ratio=fill_ratio, m_l=full_mass * ellipse_fill_fraction(fill_ratio))


def ellipse_fill_fraction(fill_ratio: float) -> float:
    """Fraction of an elliptic cross-section below a level at ``fill_ratio`` of its height."""
    h = 2.0 * fill_ratio - 1.0  # level relative to centre, in units of the half-height
    return 0.5 + (h * math.sqrt(1.0 - h * h) + math.asin(h)) / math.pi


def _poly_terms(fill: float, lam: float) -> np.ndarray:
    return np.array([1.0, fill, lam, fill**2, fill * lam, lam**2, fill**3, fill**2 * lam, fill * lam**2])


def pendulum_params(fill_ratio, tank_a, tank_b, m_l, pend_m, pend_b) -> PendulumParams:
    """Trammel pendulum parameters from the fill-ratio/aspect-ratio polynomial fits.

    Raises
    ------
    ParameterError
        If the fill ratio is outside (0, 1) or the fitted values are unphysical
        (pendulum mass outside ``[0, m_l]`` or non-positive ``b_p``).
    """
    if not 0.0 < fill_ratio < 1.0:
        raise ParameterError(f"fill_ratio must lie in (0, 1), got {fill_ratio}")
    if len(pend_m) != 9 or len(pend_b) != 9:
        raise ParameterError("expected 9 + 9 polynomial coefficients")
    lam = tank_b / tank_a
    terms = _poly_terms(fill_ratio, lam)
    m_p = float(np.dot(pend_m, terms)) * m_l
    b_p = float(np.dot(pend_b, terms)) * tank_b
    if m_p < -1e-12 * max(m_l, 1.0) or m_p > m_l * (1.0 + 1e-12):
        raise ParameterError(f"pendulum mass {m_p:.6g} outside [0, {m_l}]")
    if b_p <= 0.0:
        raise ParameterError(f"pendulum semi-axis b_p = {b_p:.6g} must be positive")
    m_p = min(max(m_p, 0.0), m_l)
    return PendulumParams(m_f=m_l - m_p, m_p=m_p, a_p=lam * b_p, b_p=b_p)


@dataclass(frozen=True)
class DerivedParams:
    """Quantities computed once from :class:`VehicleParams` for the dynamics."""

    pend: PendulumParams
    h_f: float
    I_x: float
    I_z: float
    I_xz: float
    front: TireParams
    rear: TireParams
    extras: dict = field(default_factory=dict)


def derive(params: VehicleParams) -> DerivedParams:
    pend = pendulum_params(params.fill_ratio, params.tank_a, params.tank_b, params.m_l,
                           params.pend_m, params.pend_b)
    m_f = pend.m_f
    a, b = params.tank_a, params.tank_b
    h_f = params.h_s + b if params.h_f is None else params.h_f
    wheelbase = params.l_f + params.l_r
    I_zzu = params.m_u * wheelbase**2 / 12.0 if params.I_zzu is None else params.I_zzu
    I_xxf = m_f * (a * a + b * b) / 4.0 if params.I_xxf is None else params.I_xxf
    I_zzf = m_f * (a * a / 4.0 + params.tank_length**2 / 12.0) if params.I_zzf is None else params.I_zzf
    I_x = params.I_xxs + I_xxf + params.m_t * params.h_s**2
    I_z = params.I_zzs + I_zzu + I_zzf + params.m_t * params.c**2 + params.m_u * params.e_1**2
    I_xz = params.I_xzs + params.I_xzf + params.m_t * params.h_s * params.c
    # one peak force for both axles, scaled by the mean axle load
    peak = params.D_mf * params.mu * params.mass * G / 2.0
    front = TireParams(params.B_mf, params.C_mf, peak, params.E_mf)
    rear = TireParams(params.B_mf, params.C_mf, peak, params.E_mf)
    return DerivedParams(pend=pend, h_f=h_f, I_x=I_x, I_z=I_z, I_xz=I_xz, front=front, rear=rear,
                         extras={"I_zzu": I_zzu, "I_xxf": I_xxf, "I_zzf": I_zzf})


# layout of the flat parameter vector consumed by the compiled dynamics
_PACK_ORDER = (
    "m_t", "m_u", "m_f", "m_p", "a_p", "b_p", "b", "h_s", "h_f", "c", "e_1", "e_2",
    "l_f", "l_r", "k_phi", "c_phi", "I_x", "I_z", "I_xz",
    "Bf", "Cf", "Df", "Ef", "Br", "Cr", "Dr", "Er", "g",
)
PACK_INDEX = {name: i for i, name in enumerate(_PACK_ORDER)}


def pack(params: VehicleParams, derived: DerivedParams | None = None) -> np.ndarray:
    """Flatten parameters into the float vector used by :mod:`lrg.vehicle.dynamics`."""
    d = derive(params) if derived is None else derived
    values = {
        "m_t": params.m_t, "m_u": params.m_u, "m_f": d.pend.m_f, "m_p": d.pend.m_p,
        "a_p": d.pend.a_p, "b_p": d.pend.b_p, "b": params.tank_b, "h_s": params.h_s,
        "h_f": d.h_f, "c": params.c, "e_1": params.e_1, "e_2": params.e_2,
        "l_f": params.l_f, "l_r": params.l_r, "k_phi": params.k_phi, "c_phi": params.c_phi,
        "I_x": d.I_x, "I_z": d.I_z, "I_xz": d.I_xz,
        "Bf": d.front.B, "Cf": d.front.C, "Df": d.front.D, "Ef": d.front.E,
        "Br": d.rear.B, "Cr": d.rear.C, "Dr": d.rear.D, "Er": d.rear.E, "g": G,
    }
    return np.array([values[k] for k in _PACK_ORDER], dtype=float)


_FIELD_TYPES = {f.name: f for f in dataclasses.fields(VehicleParams)}


def parse_config(text: str) -> dict:
    """Parse ``key = value`` text into a dict of raw values (strings kept for vectors)."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ParameterError(f"line {lineno}: empty key")
        if key in out:
            raise ParameterError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def params_from_mapping(mapping: dict, base: VehicleParams | None = None) -> VehicleParams:
    base = VehicleParams() if base is None else base
    changes = {}
    for key, value in mapping.items():
        if key not in _FIELD_TYPES:
            raise ParameterError(f"unknown vehicle parameter {key!r}")
        try:
            if key in ("pend_m", "pend_b"):
                changes[key] = tuple(float(v) for v in value.replace(",", " ").split())
            elif isinstance(value, str) and value.lower() == "auto" and key in ("h_f", "I_zzu", "I_xxf", "I_zzf"):
                changes[key] = None
            else:
                changes[key] = float(value)
        except ValueError as exc:
            raise ParameterError(f"bad value for {key!r}: {value!r}") from exc
    return base.replace(**changes)


def load_vehicle_params(path) -> VehicleParams:
    return params_from_mapping(parse_config(Path(path).read_text()))


def dump_vehicle_params(params: VehicleParams) -> str:
    lines = []
    for f in dataclasses.fields(VehicleParams):
        value = getattr(params, f.name)
        if value is None:
            text = "auto"
        elif isinstance(value, tuple):
            text = " ".join(repr(v) for v in value)
        else:
            text = repr(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"
