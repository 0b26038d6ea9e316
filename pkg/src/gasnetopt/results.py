"""Run directories: one structured summary plus one CSV per entity class.

All CSVs are long tables keyed by ``time_hours`` and an entity id, in SI
units. The headers are stable::

    junctions.csv    time_hours, junction, kind, pressure_pa, density_kg_m3
    pipes.csv        time_hours, pipe, parent, is_well, flux_in_kg_m2_s, flux_out_kg_m2_s,
                     flow_in_kg_s, flow_out_kg_s, linepack_kg
    compressors.csv  time_hours, compressor, ratio, flow_kg_s, power_w
    storage.csv      time_hours, storage, flow_kg_s, ratio, wellhead_pressure_pa,
                     bottomhole_flow_kg_s, reservoir_mass_kg, reservoir_pressure_pa
    transfers.csv    time_hours, transfer, kind, flow_kg_s, nomination_kg_s

``pipes.csv`` lists the sub-pipes of the segmented network, wells
included; ``parent`` names the network pipe or storage they belong to.
In ``transfers.csv`` the kind is ``receipt``, ``delivery`` or ``slack``
(gas supplied by a slack junction, simulator only); nominations are only
given for deliveries. Storage flow is positive when injecting.

:func:`read_trajectory` rebuilds the trajectory from these files, and
:func:`controls_from_run` turns an optimizer run into a simulator
schedule without any conversion step.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pandas as pd

from .network import NetworkModel
from .simulator import ControlSchedule
from .trajectory import TransientTrajectory

SUMMARY = "summary.json"
TABLES = ("junctions", "pipes", "compressors", "storage", "transfers")

JUNCTION_COLUMNS = ("pressure_pa", "density_kg_m3")
PIPE_COLUMNS = ("flux_in_kg_m2_s", "flux_out_kg_m2_s", "flow_in_kg_s", "flow_out_kg_s", "linepack_kg")
COMPRESSOR_COLUMNS = ("ratio", "flow_kg_s", "power_w")
STORAGE_COLUMNS = ("flow_kg_s", "ratio", "wellhead_pressure_pa", "bottomhole_flow_kg_s", "reservoir_mass_kg",
                   "reservoir_pressure_pa")

_PIPE_FIELDS = dict(zip(PIPE_COLUMNS, ("flux_in", "flux_out", "flow_in", "flow_out", "linepack")))
_COMPRESSOR_FIELDS = dict(zip(COMPRESSOR_COLUMNS, ("compressor_ratio", "compressor_flow", "compressor_power")))
_STORAGE_FIELDS = dict(zip(STORAGE_COLUMNS, ("storage_flow", "storage_ratio", "wellhead_pressure",
                                             "bottomhole_flow", "reservoir_mass", "reservoir_pressure")))


def _long(times, ids, key: str, columns: dict, extra: dict | None = None) -> pd.DataFrame:
    """Stack ``(entities, times)`` arrays into a long table."""
    K, E = len(times), len(ids)
    frame = {"time_hours": np.tile(times, E), key: np.repeat(np.asarray(ids, dtype=object), K)}
    for name, values in (extra or {}).items():
        frame[name] = np.repeat(np.asarray(values, dtype=object), K)
    for name, arr in columns.items():
        frame[name] = np.asarray(arr, dtype=float).reshape(E, K).ravel()
    return pd.DataFrame(frame)


def trajectory_tables(tr: TransientTrajectory) -> dict[str, pd.DataFrame]:
    t = tr.times_hours
    tables = {
        "junctions": _long(t, tr.junction_ids, "junction",
                           {"pressure_pa": tr.pressure, "density_kg_m3": tr.density}, {"kind": tr.junction_kind}),
        "pipes": _long(t, tr.pipe_ids, "pipe", {c: getattr(tr, f) for c, f in _PIPE_FIELDS.items()},
                       {"parent": tr.pipe_parent, "is_well": [bool(w) for w in tr.pipe_is_well]}),
        "compressors": _long(t, tr.compressor_ids, "compressor",
                             {c: getattr(tr, f) for c, f in _COMPRESSOR_FIELDS.items()}),
        "storage": _long(t, tr.storage_ids, "storage", {c: getattr(tr, f) for c, f in _STORAGE_FIELDS.items()}),
    }
    nan = np.full((len(tr.receipt_ids), len(t)), np.nan)
    parts = [
        _long(t, tr.receipt_ids, "transfer", {"flow_kg_s": tr.receipt_flow, "nomination_kg_s": nan},
              {"kind": ["receipt"] * len(tr.receipt_ids)}),
        _long(t, tr.delivery_ids, "transfer", {"flow_kg_s": tr.delivery_flow,
                                               "nomination_kg_s": tr.delivery_nomination},
              {"kind": ["delivery"] * len(tr.delivery_ids)}),
    ]
    if tr.slack_injection:
        ids = list(tr.slack_injection)
        parts.append(_long(t, ids, "transfer",
                           {"flow_kg_s": np.array([tr.slack_injection[j] for j in ids]),
                            "nomination_kg_s": np.full((len(ids), len(t)), np.nan)},
                           {"kind": ["slack"] * len(ids)}))
    tables["transfers"] = pd.concat(parts, ignore_index=True)
    order = {
        "junctions": ["time_hours", "junction", "kind", *JUNCTION_COLUMNS],
        "pipes": ["time_hours", "pipe", "parent", "is_well", *PIPE_COLUMNS],
        "compressors": ["time_hours", "compressor", *COMPRESSOR_COLUMNS],
        "storage": ["time_hours", "storage", *STORAGE_COLUMNS],
        "transfers": ["time_hours", "transfer", "kind", "flow_kg_s", "nomination_kg_s"],
    }
    return {name: df[order[name]] for name, df in tables.items()}


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, Path):
        return str(value)
    return value


def write_summary(out_dir, summary: dict) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / SUMMARY
    path.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    return path


def read_summary(run_dir) -> dict:
    return json.loads((Path(run_dir) / SUMMARY).read_text())


def write_trajectory(out_dir, tr: TransientTrajectory) -> list[Path]:
    """Write the five entity CSVs; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, df in trajectory_tables(tr).items():
        path = out / f"{name}.csv"
        df.to_csv(path, index=False, float_format="%.17g")
        paths.append(path)
    return paths


def write_run(out_dir, tr: TransientTrajectory | None, summary: dict) -> Path:
    """Trajectory CSVs (when given) and ``summary.json``; the trajectory metadata goes into the summary."""
    if tr is not None:
        write_trajectory(out_dir, tr)
        summary = dict(summary, trajectory_meta=tr.meta)
    return write_summary(out_dir, summary)


def _wide(df: pd.DataFrame, key: str, column: str, ids, times) -> np.ndarray:
    if not len(ids):
        return np.zeros((0, len(times)))
    table = df.pivot(index=key, columns="time_hours", values=column)
    return table.loc[list(ids), list(times)].to_numpy(dtype=float)


def _ids(df: pd.DataFrame, key: str) -> tuple:
    return tuple(pd.unique(df[key].astype(str)))


def read_trajectory(run_dir) -> TransientTrajectory:
    """Inverse of :func:`write_trajectory` (metadata from ``summary.json`` when present)."""
    run = Path(run_dir)
    missing = [n for n in TABLES if not (run / f"{n}.csv").exists()]
    if missing:
        raise FileNotFoundError(f"{run} is not a run directory; missing {', '.join(m + '.csv' for m in missing)}")
    ids_as_str = {k: str for k in ("junction", "pipe", "parent", "compressor", "storage", "transfer", "kind")}
    df = {n: pd.read_csv(run / f"{n}.csv", dtype=ids_as_str, keep_default_na=False, na_values=[""],
                         float_precision="round_trip")
          for n in TABLES}
    times = np.sort(pd.unique(df["junctions"]["time_hours"]))

    j = df["junctions"]
    junction_ids = _ids(j, "junction")
    kinds = j.drop_duplicates("junction").set_index("junction").loc[list(junction_ids), "kind"]
    p = df["pipes"]
    pipe_ids = _ids(p, "pipe")
    first = p.drop_duplicates("pipe").set_index("pipe").loc[list(pipe_ids)]
    is_well = first["is_well"].astype(str).str.lower().isin(("true", "1")).to_numpy()
    c, s, x = df["compressors"], df["storage"], df["transfers"]
    comp_ids, stor_ids = _ids(c, "compressor"), _ids(s, "storage")
    rec = x[x["kind"] == "receipt"]
    dlv = x[x["kind"] == "delivery"]
    slk = x[x["kind"] == "slack"]
    rec_ids, dlv_ids = _ids(rec, "transfer"), _ids(dlv, "transfer")

    kw = {f: _wide(p, "pipe", col, pipe_ids, times) for col, f in _PIPE_FIELDS.items()}
    kw.update({f: _wide(c, "compressor", col, comp_ids, times) for col, f in _COMPRESSOR_FIELDS.items()})
    kw.update({f: _wide(s, "storage", col, stor_ids, times) for col, f in _STORAGE_FIELDS.items()})
    meta = {}
    if (run / SUMMARY).exists():
        meta = read_summary(run).get("trajectory_meta") or {}
    return TransientTrajectory(
        times_hours=times,
        junction_ids=junction_ids,
        junction_kind=tuple(kinds),
        pressure=_wide(j, "junction", "pressure_pa", junction_ids, times),
        density=_wide(j, "junction", "density_kg_m3", junction_ids, times),
        pipe_ids=pipe_ids,
        pipe_parent=tuple(first["parent"]),
        pipe_is_well=is_well,
        compressor_ids=comp_ids,
        storage_ids=stor_ids,
        receipt_ids=rec_ids,
        receipt_flow=_wide(rec, "transfer", "flow_kg_s", rec_ids, times),
        delivery_ids=dlv_ids,
        delivery_flow=_wide(dlv, "transfer", "flow_kg_s", dlv_ids, times),
        delivery_nomination=_wide(dlv, "transfer", "nomination_kg_s", dlv_ids, times),
        slack_injection={k: _wide(slk, "transfer", "flow_kg_s", [k], times)[0] for k in _ids(slk, "transfer")},
        meta=meta,
        **kw,
    )


def controls_from_run(run_dir, model: NetworkModel) -> ControlSchedule:
    """Simulator schedule realized by the run stored in ``run_dir``."""
    return ControlSchedule.from_trajectory(read_trajectory(run_dir), model)


def load_controls(path, model: NetworkModel) -> ControlSchedule:
    """A run directory or a standalone schedule document (JSON)."""
    path = Path(path)
    if path.is_dir():
        return controls_from_run(path, model)
    return ControlSchedule.from_document(json.loads(path.read_text()))
