"""Command-line entry point: ``gasnetopt <command> [options]``.

Commands
--------
optimize        solve the day-ahead problem and write a run directory
simulate        replay controls (a run directory or a schedule document) forward in time
mesh-study      compare optima on coarse pipe meshes against a fine reference
storage-curve   maximal steady withdrawal against reservoir pressure
synth-network   write a synthetic network document

Settings come from built-in defaults, then an INI file given by
``--config`` (section ``[gasnetopt]``, then a section named after the
command), then the command line. Keys are the long flag names with
underscores or dashes, e.g. ``delta_km = 5``. ``GASNETOPT_LOG_LEVEL`` sets
the logging level (default ``WARNING``); ``-v`` lowers it to ``INFO``.

Exit status is 0 on success, 1 when a solve or simulation does not
succeed, and 2 for invalid input.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from importlib.resources import files
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .analysis import (DEFAULT_MESH_KM, MESH_STUDY_TOL, MeshStudyError, mean_relative_error, mesh_study,
                       storage_curve, synthetic_network)
from .ipm import SolverOptions, solve
from .network import NetworkError, NetworkModel, load_network, parse_network, segment_network, validate
from .nondim import PSI_TO_PA, SECONDS_PER_HOUR
from .results import load_controls, read_trajectory, write_run, write_summary
from .simulator import STORAGE_CONTROLS, ControlSchedule, SimulationError, simulate
from .transcription import TimeGrid, build_nlp, counts, extract_solution, objective_breakdown, period_mass_balance

log = logging.getLogger("gasnetopt")

COMMANDS = ("optimize", "simulate", "mesh-study", "storage-curve", "synth-network")
LOG_ENV = "GASNETOPT_LOG_LEVEL"
CONFIG_SECTION = "gasnetopt"


@dataclass
class RunConfig:
    command: str = "optimize"
    network: str | None = None
    out: str = "out"
    delta_km: float = 10.0
    dt_hours: float = 1.0
    horizon_hours: float | None = None
    kappa: float = 0.95
    tol: float = 1e-6
    max_iter: int = 500
    mu_init: float = 0.1
    seed: int = 0
    smoothing: bool = False
    line_search: str = "filter"
    # simulate
    controls: str | None = None
    dt_seconds: float = 60.0
    sample_hours: float = 1.0
    storage_control: str = "ratio"
    initial: str = "auto"
    # mesh-study
    deltas: str = ",".join(f"{d:g}" for d in DEFAULT_MESH_KM)
    reference_km: float = 0.5
    storage: str | None = None
    junction: str | None = None
    # storage-curve
    samples: int = 25
    wellhead_psi: float | None = None
    # synth-network
    junctions: int = 506
    compressors: int = 20
    storages: int = 4
    transfers: int = 196
    length_km: float = 3490.0
    loops: int | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.horizon_hours is not None and not self.horizon_hours > 0:
            raise ValueError("horizon_hours must be positive")
        for name in ("delta_km", "dt_hours", "tol", "mu_init", "dt_seconds", "sample_hours", "reference_km", "length_km"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError("kappa must lie in [0, 1]")
        if self.storage_control not in STORAGE_CONTROLS:
            raise ValueError(f"storage_control must be one of {STORAGE_CONTROLS}")
        if self.initial not in ("auto", "steady", "run"):
            raise ValueError("initial must be auto, steady or run")

    @property
    def mesh_deltas(self) -> list[float]:
        return [float(v) for v in str(self.deltas).replace(";", ",").split(",") if v.strip()]

    def solver_options(self) -> SolverOptions:
        return SolverOptions(tol=self.tol, max_iter=self.max_iter, mu_init=self.mu_init, line_search=self.line_search)


# per-command defaults that differ from the dataclass
COMMAND_DEFAULTS = {"mesh-study": {"tol": MESH_STUDY_TOL, "max_iter": 1000}}

_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, raw):
    if raw is None:
        return None
    kind = _TYPES[name]
    if isinstance(raw, str) and raw.strip().lower() in ("none", ""):
        return None
    if "bool" in kind:
        if isinstance(raw, bool):
            return raw
        return str(raw).strip().lower() in ("1", "true", "yes", "on")
    if kind.startswith("int"):
        return int(raw)
    if kind.startswith("float"):
        return float(raw)
    return str(raw)


def _config_file(path, command: str) -> dict:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise FileNotFoundError(f"config file {path} not found")
    values = {}
    for section in (CONFIG_SECTION, command):
        if parser.has_section(section):
            for key, raw in parser.items(section):
                name = key.replace("-", "_")
                if name not in _TYPES or name == "command":
                    raise ValueError(f"unknown key {key!r} in [{section}] of {path}")
                values[name] = _coerce(name, raw)
    return values


def build_config(command: str, flags: dict, config_path=None) -> RunConfig:
    """Defaults, then the config file, then explicit flags."""
    values = dict(COMMAND_DEFAULTS.get(command, {}))
    if config_path:
        values.update(_config_file(config_path, command))
    values.update({k: v for k, v in flags.items() if v is not None and k in _TYPES})
    return RunConfig(command=command, **values)


# ------------------------------------------------------------------ helpers
def resolve_network(name) -> Path:
    """A file path, or the name of a bundled network (``six_junction``, ...)."""
    if name is None:
        raise ValueError("--network is required")
    path = Path(name)
    if path.exists():
        return path
    stem = name[:-5] if name.endswith(".json") else name
    bundled = files("gasnetopt") / "data" / f"{stem}.json"
    if bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(f"network {name!r} is neither a file nor a bundled network ({', '.join(bundled_networks())})")


def bundled_networks() -> list[str]:
    return sorted(p.name[:-5] for p in (files("gasnetopt") / "data").iterdir() if p.name.endswith(".json"))


def load_model(cfg: RunConfig, apply_horizon: bool = True) -> tuple[NetworkModel, Path]:
    path = resolve_network(cfg.network)
    model = load_network(path)
    if apply_horizon and cfg.horizon_hours is not None:
        model = model.with_params(horizon_hours=cfg.horizon_hours)
    return model, path


def _grid(cfg: RunConfig, model: NetworkModel) -> TimeGrid:
    return TimeGrid(model.params.horizon_hours, cfg.dt_hours)


def _config_dict(cfg: RunConfig) -> dict:
    return asdict(cfg)


# ------------------------------------------------------------------ commands
def cmd_optimize(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    model, path = load_model(cfg)
    findings = validate(model)
    for f in findings:
        log.warning("network: %s", f)
    grid = _grid(cfg, model)
    net = segment_network(model, cfg.delta_km * 1000.0)
    t1 = time.perf_counter()
    problem = build_nlp(net, grid, cfg.kappa, smoothing=cfg.smoothing)
    t2 = time.perf_counter()
    sol = solve(problem, cfg.solver_options())
    t3 = time.perf_counter()
    tr = extract_solution(net, grid, sol.x)
    obj = objective_breakdown(problem, sol.x)
    N = grid.n_nodes
    curtailed = float(np.sum(tr.curtailment()[:, 1:N + 1]) * grid.dt_hours * SECONDS_PER_HOUR)
    nominated = float(np.sum(tr.delivery_nomination[:, 1:N + 1]) * grid.dt_hours * SECONDS_PER_HOUR)
    summary = {
        "command": "optimize",
        "version": __version__,
        "network": str(path),
        "status": sol.status,
        "message": sol.message,
        "iterations": sol.iterations,
        "objective": obj,
        "kkt": sol.kkt,
        "counts": counts(net, grid),
        "curtailment_kg": curtailed,
        "nominated_kg": nominated,
        "period_mass_balance": period_mass_balance(net, grid, sol.x),
        "findings": findings,
        "timings_s": {"setup": t1 - t0, "build": t2 - t1, "solve": t3 - t2, "total": time.perf_counter() - t0},
        "config": _config_dict(cfg),
    }
    out = Path(cfg.out)
    write_run(out, tr, summary)
    (out / "controls.json").write_text(json.dumps(ControlSchedule.from_trajectory(tr, model).to_document(), indent=1))
    print(f"{sol.status}: J = {obj['J']:.6g}, J_P = {obj['J_P']:.6g}, J_E = {obj['J_E']:.6g} "
          f"({sol.iterations} iterations, {t3 - t2:.1f} s) -> {out}")
    return 0 if sol.success else 1


def _comparison(sim, ref, model: NetworkModel) -> dict:
    """Mean relative errors of the simulation against the run it replays, on shared times after the start."""
    shared = [t for t in ref.times_hours if t > 0 and np.any(np.isclose(sim.times_hours, t))]
    if not shared:
        return {}
    s, r = sim.sample(shared), ref.sample(shared)
    out = {"pressure": {}, "storage_flow": {}}
    for j in model.junctions:
        out["pressure"][j.id] = mean_relative_error(s.junction(j.id), r.junction(j.id))
    for st in model.storages:
        ref_flow = r.storage(st.id)
        if np.all(ref_flow != 0):
            out["storage_flow"][st.id] = mean_relative_error(s.storage(st.id), ref_flow)
    return out


def cmd_simulate(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    # here the horizon is the simulated duration, not a property of the network
    model, path = load_model(cfg, apply_horizon=False)
    net = segment_network(model, cfg.delta_km * 1000.0)
    reference = None
    if cfg.controls is None:
        controls = ControlSchedule.from_model(model)
        source = "nominal"
    else:
        controls = load_controls(cfg.controls, model)
        source = str(cfg.controls)
        if Path(cfg.controls).is_dir():
            reference = read_trajectory(cfg.controls)
    initial = None
    if cfg.initial == "run" and reference is None:
        raise ValueError("initial = run needs --controls pointing at a run directory")
    if reference is not None and cfg.initial in ("auto", "run"):
        if tuple(reference.junction_ids) == tuple(net.junction_ids):
            initial = reference
        elif cfg.initial == "run":
            raise ValueError("the run was produced on a different pipe segmentation; pass its --delta-km")
        else:
            log.warning("run segmentation differs from --delta-km %g; starting from steady state", cfg.delta_km)
    t1 = time.perf_counter()
    try:
        sim = simulate(net, controls, initial, dt_seconds=cfg.dt_seconds, horizon_hours=cfg.horizon_hours,
                       sample_hours=cfg.sample_hours, storage_control=cfg.storage_control)
    except SimulationError as exc:
        write_summary(cfg.out, {"command": "simulate", "status": "failed", "message": str(exc), "step": exc.step,
                                "time_hours": exc.time_hours, "worst_row": exc.row, "config": _config_dict(cfg)})
        print(f"error: {exc}", file=sys.stderr)
        return 1
    t2 = time.perf_counter()
    summary = {
        "command": "simulate",
        "version": __version__,
        "network": str(path),
        "controls": source,
        "initial_state": "run" if initial is not None else "steady",
        "status": "completed",
        "steps": sim.meta["steps"],
        "newton_iterations": sim.meta["newton_iterations"],
        "warnings": sim.meta["warnings"],
        "timings_s": {"setup": t1 - t0, "simulate": t2 - t1},
        "config": _config_dict(cfg),
    }
    if reference is not None:
        summary["comparison"] = _comparison(sim, reference, model)
    write_run(cfg.out, sim, summary)
    print(f"simulated {sim.meta['steps']} steps of {cfg.dt_seconds:g} s in {t2 - t1:.1f} s -> {cfg.out}")
    return 0


def cmd_mesh_study(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    model, path = load_model(cfg)
    grid = _grid(cfg, model)
    out = Path(cfg.out)
    status = 0
    try:
        study = mesh_study(model, cfg.mesh_deltas, cfg.reference_km, cfg.storage, cfg.junction, grid, cfg.kappa,
                           cfg.solver_options())
        message = "completed"
    except MeshStudyError as exc:
        study, message, status = exc.partial, str(exc), 1
        print(f"error: {exc}", file=sys.stderr)
    table = pd.DataFrame(study.table(), columns=["delta_km", "storage_error", "pressure_error", "status",
                                                 "iterations", "seconds"])
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "mesh_study.csv", index=False, float_format="%.6e")
    write_summary(out, {
        "command": "mesh-study", "version": __version__, "network": str(path), "status": message,
        "reference_km": study.reference_km, "reference_status": study.reference_status,
        "storage": study.storage_id, "junction": study.junction_id, "rows": study.table(),
        "timings_s": {"total": time.perf_counter() - t0}, "config": _config_dict(cfg),
    })
    if status == 0:
        print(table.to_string(index=False))
    return status


def cmd_storage_curve(cfg: RunConfig) -> int:
    model, path = load_model(cfg)
    p_wh = None if cfg.wellhead_psi is None else cfg.wellhead_psi * PSI_TO_PA
    curve = storage_curve(model, cfg.storage, cfg.samples, wellhead_pressure=p_wh, delta_km=cfg.delta_km)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    table = pd.DataFrame(curve.table())
    table.to_csv(out / "storage_curve.csv", index=False, float_format="%.10g")
    write_summary(out, {
        "command": "storage-curve", "version": __version__, "network": str(path), "storage": curve.storage_id,
        "wellhead_pressure_pa": curve.wellhead_pressure, "threshold_pressure_pa": curve.threshold_pressure,
        "monotone": bool(np.all(np.diff(curve.withdrawal) >= 0)), "config": _config_dict(cfg),
    })
    print(table.to_string(index=False))
    return 0


def cmd_synth_network(cfg: RunConfig) -> int:
    doc = synthetic_network(cfg.junctions, cfg.compressors, cfg.storages, cfg.transfers, cfg.length_km, cfg.seed,
                            cfg.loops)
    findings = validate(parse_network(doc))
    if findings:
        raise ValueError("generated network failed validation: " + "; ".join(findings))
    out = Path(cfg.out)
    path = out if out.suffix == ".json" else out / "network.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    print(f"{len(doc['junctions'])} junctions, {len(doc['compressors'])} compressors, "
          f"{len(doc['storages'])} storages, {len(doc['receipts']) + len(doc['deliveries'])} transfer points -> {path}")
    return 0


HANDLERS = {
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "mesh-study": cmd_mesh_study,
    "storage-curve": cmd_storage_curve,
    "synth-network": cmd_synth_network,
}


# ------------------------------------------------------------------ parser
def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with default settings")
    common.add_argument("--network", help="network document (path or bundled name)")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--delta-km", type=float, help="maximal sub-pipe length in km (default 10)")
    common.add_argument("--dt-hours", type=float, help="optimizer time step in hours (default 1)")
    common.add_argument("--horizon-hours", type=float, help="horizon in hours (default: from the network)")
    common.add_argument("--kappa", type=float, help="weight of economic value against compressor energy (0.95)")
    common.add_argument("--tol", type=float, help="solver tolerance")
    common.add_argument("--max-iter", type=int, help="solver iteration limit")
    common.add_argument("--mu-init", type=float, help="initial barrier parameter (0.1)")
    common.add_argument("--seed", type=int, help="random seed (synthetic networks)")
    common.add_argument("--smoothing", action="store_true", default=None, help="smooth the friction term near zero flow")
    common.add_argument("--line-search", choices=("filter", "merit"), help="step acceptance rule")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")

    parser = argparse.ArgumentParser(prog="gasnetopt", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"gasnetopt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("optimize", parents=[common], help="solve the day-ahead problem")
    p = sub.add_parser("simulate", parents=[common], help="replay controls forward in time")
    p.add_argument("--controls", help="run directory from optimize, or a schedule JSON document")
    p.add_argument("--dt-seconds", type=float, help="simulation step in seconds (default 60)")
    p.add_argument("--sample-hours", type=float, help="output cadence in hours (default 1)")
    p.add_argument("--storage-control", choices=STORAGE_CONTROLS, help="prescribe regulator ratio or storage flow")
    p.add_argument("--initial", choices=("auto", "steady", "run"), help="initial state source")
    p = sub.add_parser("mesh-study", parents=[common], help="pipe mesh refinement study")
    p.add_argument("--deltas", help="comma separated sub-pipe lengths in km")
    p.add_argument("--reference-km", type=float, help="reference sub-pipe length in km (default 0.5)")
    p.add_argument("--storage", help="storage to compare (default: first)")
    p.add_argument("--junction", help="junction whose pressure is compared (default: the storage's)")
    p = sub.add_parser("storage-curve", parents=[common], help="withdrawal capacity against reservoir pressure")
    p.add_argument("--storage", help="storage id (default: first)")
    p.add_argument("--samples", type=int, help="number of reservoir pressures (default 25)")
    p.add_argument("--wellhead-psi", type=float, help="wellhead pressure in psi (default: its minimum)")
    p = sub.add_parser("synth-network", parents=[common], help="generate a synthetic network")
    p.add_argument("--junctions", type=int)
    p.add_argument("--compressors", type=int)
    p.add_argument("--storages", type=int)
    p.add_argument("--transfers", type=int)
    p.add_argument("--length-km", type=float)
    p.add_argument("--loops", type=int)
    return parser


def _setup_logging(verbose: bool):
    level = os.environ.get(LOG_ENV, "INFO" if verbose else "WARNING").upper()
    if verbose and level == "WARNING":
        level = "INFO"
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    _setup_logging(args.verbose)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        cfg = build_config(args.command, flags, args.config)
        return HANDLERS[args.command](cfg)
    except (NetworkError, ValueError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
