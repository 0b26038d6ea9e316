import json
import math

import numpy as np
import pytest

from gasnetopt import segment_network
from gasnetopt.analysis import (MeshStudyError, max_withdrawal, mean_relative_error, mesh_study, storage_curve,
                                synthetic_model, synthetic_network)
from gasnetopt.ipm import SolverOptions
from gasnetopt.network import validate
from gasnetopt.nondim import PSI_TO_PA

from conftest import fixture_model


def test_mean_relative_error():
    assert mean_relative_error([1, 2, 3], [1, 2, 3]) == 0.0
    assert mean_relative_error([1.1, 2.0], [1.0, 2.0]) == pytest.approx(0.05)
    assert mean_relative_error([1.1, 2.0], [1.0, 2.0], weights=[1, 3]) == pytest.approx(0.025)
    with pytest.raises(ValueError):
        mean_relative_error([1.0], [0.0])


def test_mesh_study_reference_row_is_exact():
    model = fixture_model("six_junction_storage")
    study = mesh_study(model, deltas_km=(20.0, 40.0), reference_km=20.0, options=SolverOptions(tol=1e-8))
    first, second = study.table()
    assert first["storage_error"] == 0.0 and first["pressure_error"] == 0.0
    assert second["status"] == "optimal"
    assert 0.0 < second["pressure_error"] < 1e-2
    assert study.junction_id == "3"


def test_mesh_study_failure_keeps_partial_table():
    model = fixture_model("six_junction_storage")
    with pytest.raises(MeshStudyError) as err:
        mesh_study(model, deltas_km=(40.0,), reference_km=40.0, options=SolverOptions(max_iter=3))
    assert err.value.partial.reference_status == "max-iter"
    assert err.value.partial.rows == []


def test_mesh_study_requires_storage():
    with pytest.raises(ValueError):
        mesh_study(fixture_model("six_junction"))


def test_storage_curve_monotone_and_anchored():
    model = fixture_model("six_junction_storage")
    curve = storage_curve(model, samples=25, p_max=1365 * PSI_TO_PA)
    assert len(curve.withdrawal) == 25
    assert np.all(np.diff(curve.withdrawal) >= 0)
    assert curve.withdrawal[-1] == curve.withdrawal.max() > 0
    assert np.all(curve.withdrawal_capped <= model.storages[0].flow_max)
    rows = curve.table()
    assert rows[-1]["reservoir_pressure_psi"] == pytest.approx(1365)


def test_withdrawal_starts_at_static_column_pressure():
    model = fixture_model("six_junction_storage")
    net = segment_network(model, 10_000.0)
    s = model.storages[0]
    curve = storage_curve(net, samples=5)
    expected = s.wellhead_p_min * math.exp(model.params.gravity * s.well_length / net.scales.a2)
    assert curve.threshold_pressure == pytest.approx(expected, rel=1e-10)
    assert max_withdrawal(net, s.id, curve.threshold_pressure * (1 - 1e-9)) == 0.0
    assert max_withdrawal(net, s.id, curve.threshold_pressure * 1.01) > 0.0


def test_withdrawal_closes_the_well_equations():
    from gasnetopt.physics import steady_outlet_density
    model = fixture_model("six_junction_storage")
    net = segment_network(model, 10_000.0)
    s = model.storages[0]
    sc = net.scales
    p_res = 1200 * PSI_TO_PA
    w = max_withdrawal(net, s.id, p_res)
    flux = -w / s.well_area / sc.phi0
    rho = s.wellhead_p_min / sc.a2 / sc.rho0
    for p in net.well_chains[s.id]:
        rho = steady_outlet_density(rho, flux, net.pipe_length[p], net.pipe_friction[p], net.pipe_diameter[p],
                                    net.pipe_beta[p])
    assert rho * sc.rho0 * sc.a2 == pytest.approx(p_res, rel=1e-10)


def test_storage_curve_arguments():
    with pytest.raises(ValueError):
        storage_curve(fixture_model("six_junction"))
    with pytest.raises(ValueError):
        storage_curve(fixture_model("six_junction_storage"), samples=1)


def test_synthetic_counts_and_validity():
    doc = synthetic_network(seed=0)
    assert len(doc["junctions"]) == 506
    assert len(doc["compressors"]) == 20
    assert len(doc["storages"]) == 4
    assert len(doc["receipts"]) + len(doc["deliveries"]) == 196
    assert sum(p["length"] for p in doc["pipes"]) == pytest.approx(3490e3, abs=1.0)
    model = synthetic_model(seed=0)
    assert validate(model) == []


def test_synthetic_is_deterministic():
    a = json.dumps(synthetic_network(seed=3), sort_keys=True)
    b = json.dumps(synthetic_network(seed=3), sort_keys=True)
    assert a == b
    assert a != json.dumps(synthetic_network(seed=4), sort_keys=True)


def test_small_synthetic_resembles_six_junction():
    doc = synthetic_network(n_junctions=6, n_compressors=2, n_storages=1, n_transfers=6, total_length_km=290, seed=0,
                            loops=0)
    model = synthetic_model(n_junctions=6, n_compressors=2, n_storages=1, n_transfers=6, total_length_km=290, seed=0,
                            loops=0)
    assert validate(model) == []
    assert (len(model.junctions), len(model.compressors), len(model.storages)) == (6, 2, 1)
    assert len(model.receipts) == 1 and len(model.deliveries) == 5
    assert len(model.pipes) == 3
    assert sum(p["length"] for p in doc["pipes"]) == pytest.approx(290e3, abs=1.0)


def test_synthetic_argument_checks():
    with pytest.raises(ValueError):
        synthetic_network(n_junctions=1)
    with pytest.raises(ValueError):
        synthetic_network(n_junctions=5, n_compressors=4)
