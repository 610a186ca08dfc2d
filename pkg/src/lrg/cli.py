"""Command-line scenario runner: ``python -m lrg <subcommand> [options]``.

Subcommands
-----------
learn        run the safe learning loop and write the dataset (plus log/trace)
run          run a scenario (step, sine-and-dwell, speed ramp) with or without the governor
map          build the steady-state map d(nu)
estimate-L   sampled Hölder estimate (truck) or closed-form bound and probe check (LTI)
prune        thin a dataset on a grid of cells of diameter m
surface      D-bar at a fixed probe over a speed x fill-ratio grid

Exit codes: 0 success, 2 configuration or input error, 3 safety fault,
4 numerical fault.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, header_lines
from .governor import Dataset, Governor
from .holder import estimate_holder_sampling, lti_lipschitz_bound, verify_holder_on_lti
from .learning import SafetyFault, prune_dataset, run_learning
from .scenarios import Scenario, ScheduledGovernor, dbar_surface, simulate_scenario
from .simkit import IntegrationFault, SteadyStateMap
from .vehicle import ModelSingularityError, TruckPlant, VehicleState
from .vehicle.params import ParameterError

EXIT_OK, EXIT_CONFIG, EXIT_SAFETY, EXIT_NUMERIC = 0, 2, 3, 4


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _read(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _seeds(cfg: RunConfig) -> dict:
    return {"learning": cfg.int("learning.seed"), "holder": cfg.int("holder.seed"),
            "scenario": cfg.int("scenario.seed")}


def _load_map(cfg: RunConfig, plant, path):
    if path:
        return SteadyStateMap.from_csv(_strip_comments(_read(path)), mode=cfg.get("map.mode"))
    return cfg.steady_state_map(plant)


def _strip_comments(text: str) -> str:
    return "\n".join(line for line in text.splitlines() if not line.startswith("#"))


def _load_dataset(path) -> Dataset:
    try:
        return Dataset.from_csv(_read(path))[0]
    except (KeyError, ValueError, IndexError) as exc:
        raise ConfigError(f"malformed dataset {path}: {exc}") from exc


def _keyed_paths(items, n_keys):
    """Parse ``KEY[,KEY]=path`` arguments; a bare path gets key ``None``."""
    out = {}
    for item in items or []:
        if "=" in item:
            key, path = item.split("=", 1)
            try:
                parts = tuple(float(v) for v in key.split(","))
            except ValueError as exc:
                raise ConfigError(f"bad dataset key in {item!r}") from exc
            if len(parts) != n_keys:
                raise ConfigError(f"dataset key {key!r} needs {n_keys} value(s)")
            out[parts if n_keys > 1 else parts[0]] = path
        else:
            out[None] = item
    return out


# subcommands ------------------------------------------------------------------


def cmd_map(args, cfg: RunConfig):
    smap = cfg.steady_state_map()
    extra = {"max_adjacent_jump": repr(smap.max_adjacent_jump())}
    _write(args.out, header_lines(cfg, extra=extra) + smap.to_csv())


def cmd_learn(args, cfg: RunConfig):
    plant = cfg.plant()
    smap = _load_map(cfg, plant, args.map)
    gcfg = cfg.governor_config()
    governor = Governor(gcfg, smap, [cfg.initial_nu()])
    report = run_learning(plant, governor, cfg.learning_config())
    head = header_lines(cfg, _seeds(cfg), {"points": len(report.dataset),
                                            "hypothetical_violations": report.hypothetical_violations})
    _write(args.out, head + report.dataset.to_csv(gcfg.norm))
    if args.log:
        _write(args.log, head + report.log_csv())
    if args.trace:
        _write(args.trace, head + report.trace_csv())


def _scenario(cfg: RunConfig) -> Scenario:
    return Scenario(kind=cfg.get("scenario.kind"), mode=cfg.get("scenario.mode"), plant=cfg.get("plant"),
                    step=cfg.num("scenario.step"), step_time=cfg.num("scenario.step_time"),
                    amplitude=cfg.num("scenario.amplitude"), frequency=cfg.num("scenario.frequency"),
                    dwell=cfg.num("scenario.dwell"), start=cfg.num("scenario.start"),
                    duration=cfg.num("scenario.duration"), dt=cfg.num("scenario.dt"),
                    speed_rate=cfg.num("scenario.speed_rate"),
                    fill_ratio=cfg.num("scenario.fill_ratio") if cfg.get("scenario.fill_ratio") else None)


def cmd_run(args, cfg: RunConfig):
    try:
        sc = _scenario(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if sc.kind == "learning_run":
        return cmd_learn(args, cfg)
    if sc.kind == "dbar_surface":
        return cmd_surface(args, cfg)
    vp = None
    if sc.plant == "truck" and sc.fill_ratio is not None:
        vp = cfg.vehicle_params().with_fill_ratio(sc.fill_ratio)
    plant = cfg.plant(speed_rate=sc.speed_rate, vehicle_params=vp)
    smap = _load_map(cfg, plant, args.map)
    governor = None
    if sc.mode != "no_lrg":
        gcfg = cfg.governor_config(operating=True)
        paths = _keyed_paths(args.dataset, 1)
        if sc.mode == "after" and not paths:
            raise ConfigError("mode 'after' needs --dataset")
        if len(paths) > 1 or (paths and None not in paths):
            if None in paths:
                raise ConfigError("mix of keyed and unkeyed datasets")
            nodes = {}
            for speed, path in paths.items():
                node_plant = cfg.plant(vehicle_params=(vp or cfg.vehicle_params()).replace(V=speed))
                data = _load_dataset(path) if sc.mode == "after" else None
                nodes[speed] = (cfg.steady_state_map(node_plant), data)
            governor = ScheduledGovernor(gcfg, nodes, [0.0])
        else:
            data = _load_dataset(paths[None]) if sc.mode == "after" else None
            governor = Governor(gcfg, smap, [0.0], dataset=data, phase="operating")
    result = simulate_scenario(plant, sc.command(), sc.duration, sc.dt, governor=governor,
                               sample_period=cfg.num("governor.operating_sample_period"),
                               steady_map=smap)
    extra = {"kind": sc.kind, "mode": sc.mode, "violations": result.violations,
             "command_modification": repr(result.command_modification())}
    if isinstance(plant, TruckPlant):
        names = [f.name for f in dataclasses.fields(VehicleState)]
        delta_f = np.array([plant.delta_f(v) for v in result.nu])
        body = result.to_csv(state_names=names, delta_f=delta_f).replace(",y,d,", ",LTR,d,", 1)
    else:
        body = result.to_csv()
    _write(args.out, header_lines(cfg, _seeds(cfg), extra) + body)


def cmd_estimate_l(args, cfg: RunConfig):
    if cfg.get("plant") == "lti":
        plant = cfg.plant()
        A, B, C, F = plant.A, plant.B, plant.C, plant.F
        L, eta = lti_lipschitz_bound(A, B, C, F)
        rep = verify_holder_on_lti(A, B, C, F, L, probe_count=cfg.int("holder.samples"),
                                   rng_seed=cfg.int("holder.seed"))
        extra = {"L_prime": repr(L), "eta": repr(eta), "passed": int(rep.passed)}
        _write(args.out, header_lines(cfg, _seeds(cfg), extra) + rep.to_csv())
        return
    plant = cfg.plant()
    smap = _load_map(cfg, plant, args.map)
    unit = 180.0 / np.pi
    est = estimate_holder_sampling(plant, smap, cfg.int("holder.samples"),
                                   beta_fixed=cfg.num("governor.beta"), rng_seed=cfg.int("holder.seed"),
                                   safety_factor=cfg.num("holder.safety_factor"), norm=cfg.norm(),
                                   horizon_T=cfg.num("holder.horizon_T"), dt=cfg.num("holder.dt"),
                                   nu_range=cfg.list("holder.nu_range"),
                                   dx_scale=np.array(cfg.list("holder.dx_scale")) / unit)
    _write(args.out, header_lines(cfg, _seeds(cfg)) + est.to_csv())


def cmd_prune(args, cfg: RunConfig):
    data, norm = Dataset.from_csv(_read(args.dataset))
    norm = cfg.norm() if norm is None else norm
    m = cfg.num("learning.prune_m") if args.m is None else args.m
    if m < 0:
        raise ConfigError("cell diameter must be non-negative")
    out = prune_dataset(data, m, norm)
    extra = {"cell_diameter": repr(m), "points_in": len(data), "points_out": len(out)}
    _write(args.out, header_lines(cfg, _seeds(cfg), extra) + out.to_csv(norm))


def train_surface_node(cfg: RunConfig, speed, fill, probe_nu):
    """Learn one (speed, fill) node; ``None`` when the probe lies outside its usable map."""
    vp = cfg.vehicle_params().with_fill_ratio(fill).replace(V=speed)
    plant = cfg.plant(vehicle_params=vp)
    smap = cfg.steady_state_map(plant)
    profile = cfg.list("scenario.surface_profile")
    if not all(smap.path_usable([p], [p]) for p in profile + [probe_nu]):
        return None
    governor = Governor(cfg.governor_config(), smap, [profile[-1]])
    lc = dataclasses.replace(cfg.learning_config(), n_max=cfg.int("scenario.surface_commands"), command_source="profile",
                             profile=tuple(profile))
    return run_learning(plant, governor, lc).dataset


def cmd_surface(args, cfg: RunConfig):
    speeds = cfg.list("scenario.speeds")
    fills = cfg.list("scenario.fills")
    nu, dnu = cfg.list("scenario.probe")
    paths = _keyed_paths(args.dataset, 2)
    n_x = 6 if cfg.get("plant") == "truck" else cfg.plant().n_state
    ensemble = {}
    for v in speeds:
        for f in fills:
            if paths:
                p = paths.get((v, f))
                ensemble[(v, f)] = _load_dataset(p) if p else None
            else:
                ensemble[(v, f)] = train_surface_node(cfg, v, f, nu)
    surf = dbar_surface(ensemble, ([nu], [dnu], np.zeros(n_x)), speeds, fills, cfg.governor_config())
    _write(args.out, header_lines(cfg, _seeds(cfg), {"probe_nu": nu, "probe_dnu": dnu}) + surf.to_csv())


# entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lrg", description="Learning reference governor toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--out", default="-", help="output CSV (default stdout)")
        p.set_defaults(func=func)
        return p

    p = add("learn", cmd_learn, "run the safe learning loop")
    p.add_argument("--map", help="precomputed steady-state map CSV")
    p.add_argument("--log", help="per-sample log CSV")
    p.add_argument("--trace", help="windowed tracking-error CSV")
    p = add("run", cmd_run, "run a scenario")
    p.add_argument("--map", help="precomputed steady-state map CSV")
    p.add_argument("--dataset", action="append",
                   help="learned dataset CSV; repeat as SPEED=path for speed scheduling")
    p.add_argument("--log", help=argparse.SUPPRESS)
    p.add_argument("--trace", help=argparse.SUPPRESS)
    add("map", cmd_map, "build the steady-state map")
    p = add("estimate-L", cmd_estimate_l, "estimate or bound the Hölder constant")
    p.add_argument("--map", help="precomputed steady-state map CSV")
    p = add("prune", cmd_prune, "thin a dataset on a grid of cells")
    p.add_argument("--dataset", required=True, help="dataset CSV")
    p.add_argument("--m", type=float, help="cell diameter (default learning.prune_m)")
    p = add("surface", cmd_surface, "D-bar over a speed x fill grid")
    p.add_argument("--dataset", action="append", help="SPEED,FILL=path; trains missing grid when omitted")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
        args.func(args, cfg)
    except (ConfigError, ParameterError, OSError) as exc:
        print(f"lrg: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SafetyFault as exc:
        print(f"lrg: safety fault: {exc}", file=sys.stderr)
        return EXIT_SAFETY
    except (ModelSingularityError, IntegrationFault, ArithmeticError) as exc:
        print(f"lrg: numerical fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"lrg: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK
