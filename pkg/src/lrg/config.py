"""Run configuration: one key/value file for plant, governor, learning and scenario settings.

Grammar: one ``key = value`` per line, ``#`` comments, keys carry a section
prefix (``vehicle.``, ``governor.``, ``learning.``, ``map.``, ``holder.``,
``scenario.``, ``lti.``) except the top-level ``plant`` key.  Lists are
comma- or whitespace-separated; LTI matrices use ``;`` between rows.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .governor import GovernorConfig, ProductNorm
from .learning import LearningConfig
from .simkit import LTIPlant, analytic_steady_state_map, build_steady_state_map
from .vehicle.model import SpeedSchedule, TruckPlant
from .vehicle.params import ParameterError, parse_config, params_from_mapping


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


DEFAULTS = {
    "plant": "truck",
    # governor; angles enter the truck norm in units of governor.angle_unit degrees
    "governor.L": "0.3",
    "governor.beta": "1",
    "governor.horizon_T": "4",
    "governor.epsilon": "0.02",
    "governor.sample_period": "0.2",
    "governor.operating_sample_period": "0.1",
    "governor.lambda": "0.01",
    "governor.delta_v1": "0.01",
    "governor.norm": "max",
    "governor.angle_unit": "2",
    "governor.w_nu": "",
    "governor.w_dnu": "",
    "governor.w_dx": "",
    # learning
    "learning.n_max": "150",
    "learning.k_max": "100",
    "learning.source": "profile",
    "learning.profile": "50, -50",
    "learning.window": "1000",
    "learning.threshold": "0",
    "learning.prune_m": "0",
    "learning.seed": "0",
    "learning.dt": "0.004",
    "learning.nu0": "-50",
    "learning.nu_range": "",
    # steady-state map
    "map.nodes": "-60:60:1",
    "map.settle_tolerance": "1e-8",
    "map.max_settle_time": "300",
    "map.dt": "0.005",
    "map.mode": "linear",
    # sampled Hölder estimate
    "holder.samples": "80",
    "holder.seed": "0",
    "holder.safety_factor": "1.1",
    "holder.horizon_T": "6",
    "holder.dt": "0.002",
    "holder.nu_range": "-50, 50",
    "holder.dx_scale": "1, 5, 0.5, 2, 10, 20",
    # scenarios
    "scenario.kind": "step",
    "scenario.mode": "no_lrg",
    "scenario.step": "25",
    "scenario.step_time": "1",
    "scenario.amplitude": "50",
    "scenario.frequency": "0.7",
    "scenario.dwell": "0.5",
    "scenario.start": "1",
    "scenario.duration": "10",
    "scenario.dt": "0.001",
    "scenario.speed_rate": "0",
    "scenario.seed": "0",
    "scenario.speeds": "20, 25, 30",
    "scenario.fills": "0.1, 0.5, 0.9",
    "scenario.probe": "-25, 25",
    "scenario.fill_ratio": "",
    "scenario.surface_profile": "0, -25",
    "scenario.surface_commands": "10",
    # LTI plant
    "lti.A": "-1",
    "lti.B": "1",
    "lti.C": "1",
    "lti.F": "0",
    "lti.nu_bounds": "-1, 1",
    "lti.y_bounds": "-1, 1",
    "lti.input_exponent": "1",
}

SECTIONS = ("vehicle", "governor", "learning", "map", "holder", "scenario", "lti")


def floats(text: str) -> list:
    return [float(v) for v in text.replace(",", " ").split()]


def matrix(text: str) -> np.ndarray:
    rows = [floats(r) for r in text.split(";") if r.strip()]
    if len({len(r) for r in rows}) != 1:
        raise ConfigError(f"ragged matrix {text!r}")
    return np.array(rows, dtype=float)


def node_grid(text: str) -> np.ndarray:
    """``start:stop:step`` (inclusive) or an explicit list."""
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        n = int(round((stop - start) / step))
        return start + step * np.arange(n + 1)
    return np.array(floats(text))


@dataclass
class RunConfig:
    """Parsed run configuration with typed accessors."""

    values: dict
    vehicle: dict = field(default_factory=dict)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        try:
            raw = parse_config(text)
        except ParameterError as exc:
            raise ConfigError(str(exc)) from exc
        values = dict(DEFAULTS)
        vehicle = {}
        for key, value in raw.items():
            if key.startswith("vehicle."):
                vehicle[key[len("vehicle."):]] = value
            elif key in DEFAULTS:
                values[key] = value
            else:
                raise ConfigError(f"unknown configuration key {key!r}")
        out = cls(values, vehicle)
        out.validate()
        return out

    @classmethod
    def load(cls, path) -> "RunConfig":
        if path is None:
            return cls.from_text("")
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text)

    def canonical_text(self) -> str:
        items = sorted(self.values.items()) + sorted(("vehicle." + k, v) for k, v in self.vehicle.items())
        return "".join(f"{k} = {v}\n" for k, v in items)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]

    def get(self, key: str) -> str:
        return self.values[key]

    def num(self, key: str) -> float:
        try:
            return float(self.values[key])
        except ValueError as exc:
            raise ConfigError(f"{key} must be a number, got {self.values[key]!r}") from exc

    def int(self, key: str) -> int:
        v = self.num(key)
        if v != int(v):
            raise ConfigError(f"{key} must be an integer")
        return int(v)

    def list(self, key: str) -> list:
        try:
            return floats(self.values[key])
        except ValueError as exc:
            raise ConfigError(f"{key} must be a list of numbers") from exc

    def validate(self):
        if self.get("plant") not in ("truck", "lti"):
            raise ConfigError("plant must be 'truck' or 'lti'")
        try:
            self.governor_config()
            self.learning_config()
            self.plant()
        except (ValueError, ParameterError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    # builders -------------------------------------------------------------

    def vehicle_params(self, **overrides):
        try:
            vp = params_from_mapping(self.vehicle)
        except ParameterError as exc:
            raise ConfigError(str(exc)) from exc
        return vp.replace(**overrides) if overrides else vp

    def plant(self, speed_rate=0.0, vehicle_params=None):
        if self.get("plant") == "truck":
            vp = self.vehicle_params() if vehicle_params is None else vehicle_params
            return TruckPlant(vp, speed=SpeedSchedule(vp.V, speed_rate))
        return LTIPlant(matrix(self.get("lti.A")), matrix(self.get("lti.B")), matrix(self.get("lti.C")),
                        matrix(self.get("lti.F")), nu_bounds=tuple(self.list("lti.nu_bounds")),
                        y_bounds=tuple(self.list("lti.y_bounds")),
                        input_exponent=self.num("lti.input_exponent"))

    def norm(self) -> ProductNorm:
        kind = self.get("governor.norm")
        explicit = [self.get(k) for k in ("governor.w_nu", "governor.w_dnu", "governor.w_dx")]
        if all(explicit):
            return ProductNorm(floats(explicit[0]), floats(explicit[1]), floats(explicit[2]), kind=kind)
        if any(explicit):
            raise ConfigError("give all of governor.w_nu, w_dnu, w_dx or none")
        if self.get("plant") == "truck":
            # commands are in degrees, states in radians; both measured in angle_unit degrees
            unit = self.num("governor.angle_unit")
            return ProductNorm(1.0 / unit, 1.0 / unit, [180.0 / math.pi / unit] * 6, kind=kind)
        return ProductNorm(kind=kind)

    def governor_config(self, operating=False) -> GovernorConfig:
        ts = self.num("governor.operating_sample_period" if operating else "governor.sample_period")
        return GovernorConfig(holder_L=self.num("governor.L"), holder_beta=self.num("governor.beta"),
                              horizon_T=self.num("governor.horizon_T"), epsilon=self.num("governor.epsilon"),
                              sample_period=ts, lam=self.num("governor.lambda"),
                              delta_v1=self.num("governor.delta_v1"), norm=self.norm())

    def learning_config(self) -> LearningConfig:
        return LearningConfig(n_max=self.int("learning.n_max"), k_max=self.int("learning.k_max"),
                              command_source=self.get("learning.source"),
                              profile=tuple(self.list("learning.profile")),
                              moving_window_T=self.num("learning.window"),
                              error_threshold=self.num("learning.threshold"),
                              prune_cell_diameter=self.num("learning.prune_m"),
                              rng_seed=self.int("learning.seed"), dt=self.num("learning.dt"),
                              nu_range=self._range("learning.nu_range"))

    def _range(self, key):
        if not self.get(key).strip():
            return None
        bounds = self.list(key)
        if len(bounds) != 2 or not bounds[0] < bounds[1]:
            raise ConfigError(f"{key} must be 'lower, upper'")
        return tuple(bounds)

    def initial_nu(self) -> float:
        """Starting reference of a learning run (must be strictly admissible)."""
        if self.get("plant") == "truck":
            return self.num("learning.nu0")
        lo, hi = self.list("lti.nu_bounds")
        return 0.5 * (lo + hi)

    def steady_state_map(self, plant=None):
        plant = self.plant() if plant is None else plant
        grid = node_grid(self.get("map.nodes")) if self.get("plant") == "truck" else \
            np.linspace(*self.list("lti.nu_bounds"), 201)
        if isinstance(plant, LTIPlant):
            return analytic_steady_state_map(plant, grid, mode=self.get("map.mode"))
        return build_steady_state_map(plant, grid, settle_tolerance=self.num("map.settle_tolerance"),
                                      max_settle_time=self.num("map.max_settle_time"),
                                      dt=self.num("map.dt"), mode=self.get("map.mode"))


def header_lines(config: RunConfig, seeds: dict | None = None, extra: dict | None = None) -> str:
    """Comment block recording version, config hash and seeds for CSV outputs."""
    import numba
    import scipy

    lines = [f"# lrg_version={__version__} numpy={np.__version__} scipy={scipy.__version__} "
             f"numba={numba.__version__}",
             f"# config_hash={config.digest()}"]
    if seeds:
        lines.append("# seeds " + " ".join(f"{k}={v}" for k, v in sorted(seeds.items())))
    if extra:
        lines.append("# " + " ".join(f"{k}={v}" for k, v in extra.items()))
    return "\n".join(lines) + "\n"
