import json
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

from gasnetopt.cli import build_config, main, resolve_network
from gasnetopt.results import (load_controls, read_summary, read_trajectory, trajectory_tables, write_run,
                               write_trajectory)
from gasnetopt.simulator import ControlSchedule

from conftest import fixture_model

HEADERS = {
    "junctions": ["time_hours", "junction", "kind", "pressure_pa", "density_kg_m3"],
    "pipes": ["time_hours", "pipe", "parent", "is_well", "flux_in_kg_m2_s", "flux_out_kg_m2_s", "flow_in_kg_s",
              "flow_out_kg_s", "linepack_kg"],
    "compressors": ["time_hours", "compressor", "ratio", "flow_kg_s", "power_w"],
    "storage": ["time_hours", "storage", "flow_kg_s", "ratio", "wellhead_pressure_pa", "bottomhole_flow_kg_s",
                "reservoir_mass_kg", "reservoir_pressure_pa"],
    "transfers": ["time_hours", "transfer", "kind", "flow_kg_s", "nomination_kg_s"],
}


def test_csv_headers_are_stable(with_storage, tmp_path):
    write_trajectory(tmp_path, with_storage.trajectory)
    for name, header in HEADERS.items():
        assert list(pd.read_csv(tmp_path / f"{name}.csv", nrows=0).columns) == header


def test_trajectory_round_trip(with_storage, tmp_path):
    tr = with_storage.trajectory
    write_run(tmp_path, tr, {"status": "optimal"})
    back = read_trajectory(tmp_path)
    for name in ("pressure", "density", "flux_in", "flux_out", "linepack", "compressor_ratio", "compressor_flow",
                 "storage_flow", "storage_ratio", "reservoir_mass", "receipt_flow", "delivery_flow",
                 "delivery_nomination", "times_hours"):
        assert np.array_equal(getattr(back, name), getattr(tr, name)), name
    assert back.junction_ids == tr.junction_ids and back.pipe_parent == tr.pipe_parent
    assert np.array_equal(back.pipe_is_well, tr.pipe_is_well)
    assert back.meta == json.loads(json.dumps(tr.meta))


def test_controls_from_run_match_schedule(with_storage, tmp_path):
    write_run(tmp_path, with_storage.trajectory, {})
    model = with_storage.model
    direct = ControlSchedule.from_trajectory(with_storage.trajectory, model)
    loaded = load_controls(tmp_path, model)
    assert np.array_equal(loaded.compressor_ratio, direct.compressor_ratio)
    assert np.array_equal(loaded.storage_ratio, direct.storage_ratio)
    path = tmp_path / "schedule.json"
    path.write_text(json.dumps(direct.to_document()))
    assert np.array_equal(load_controls(path, model).delivery_flow, direct.delivery_flow)


def test_summary_nan_becomes_null(tmp_path):
    write_run(tmp_path, None, {"x": float("nan"), "y": np.float64(2.0), "z": np.arange(2)})
    assert read_summary(tmp_path) == {"x": None, "y": 2.0, "z": [0, 1]}


def test_read_trajectory_requires_all_tables(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_trajectory(tmp_path)


def test_transfer_kinds(with_storage):
    t = trajectory_tables(with_storage.trajectory)["transfers"]
    assert set(t["kind"]) == {"receipt", "delivery"}
    assert t.loc[t["kind"] == "receipt", "nomination_kg_s"].isna().all()


def test_config_precedence(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[gasnetopt]\ndelta_km = 5\nkappa = 0.5\n[optimize]\nkappa = 0.8\ntol = 1e-7\n")
    cfg = build_config("optimize", {"tol": 1e-5}, ini)
    assert cfg.delta_km == 5.0
    assert cfg.kappa == 0.8
    assert cfg.tol == 1e-5
    assert cfg.max_iter == 500
    assert build_config("mesh-study", {}).tol == 1e-9


def test_resolve_network():
    assert resolve_network("six_junction").name == "six_junction.json"
    with pytest.raises(FileNotFoundError):
        resolve_network("no_such_network")


def test_optimize_then_simulate(tmp_path):
    run = tmp_path / "opt"
    assert main(["optimize", "--network", "six_junction_storage", "--delta-km", "20", "--out", str(run)]) == 0
    summary = read_summary(run)
    assert summary["status"] == "optimal"
    assert set(summary["objective"]) >= {"J", "J_P", "J_E"}
    for name in HEADERS:
        assert (run / f"{name}.csv").exists()
    sim = tmp_path / "sim"
    assert main(["simulate", "--network", "six_junction_storage", "--delta-km", "20", "--controls", str(run),
                 "--dt-seconds", "300", "--out", str(sim)]) == 0
    comparison = read_summary(sim)["comparison"]
    assert all(v < 0.02 for v in comparison["pressure"].values())


def test_cli_errors(tmp_path, capsys):
    assert main(["optimize", "--network", "missing_net", "--out", str(tmp_path)]) == 2
    assert main(["optimize", "--network", "six_junction", "--delta-km", "40", "--max-iter", "2",
                 "--out", str(tmp_path / "short")]) == 1
    assert read_summary(tmp_path / "short")["status"] == "max-iter"


def test_synth_network_command_is_deterministic(tmp_path):
    args = ["synth-network", "--junctions", "40", "--compressors", "3", "--storages", "1", "--transfers", "12",
            "--length-km", "500", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a.json")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.json")]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    doc = json.loads((tmp_path / "a.json").read_text())
    assert len(doc["junctions"]) == 40 and len(doc["compressors"]) == 3


def test_storage_curve_command(tmp_path):
    assert main(["storage-curve", "--network", "six_junction_storage", "--samples", "21", "--out",
                 str(tmp_path)]) == 0
    table = pd.read_csv(tmp_path / "storage_curve.csv")
    assert len(table) == 21
    assert (table["max_withdrawal_kg_s"].diff().dropna() >= 0).all()


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "gasnetopt", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for command in ("optimize", "simulate", "mesh-study", "storage-curve", "synth-network"):
        assert command in out.stdout
