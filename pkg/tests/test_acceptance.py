"""The twelve acceptance criteria, each checked at its stated tolerance and time budget.

Every test prints one PASS/FAIL line; the lines are repeated in the pytest
terminal summary under "acceptance criteria".
"""

import math
import time

import numpy as np
import pytest

from gasnetopt import TimeGrid, build_nlp, extract_solution, parse_network, segment_network
from gasnetopt.analysis import mean_relative_error, mesh_study, storage_curve, synthetic_model
from gasnetopt.ipm import SolverOptions, solve
from gasnetopt.nondim import PSI_TO_PA
from gasnetopt.physics import pipe_momentum_residual, steady_outlet_density
from gasnetopt.simulator import ControlSchedule, simulate
from gasnetopt.transcription import counts, objective_breakdown, period_mass_balance

from _checks import derivative_errors, random_point
from conftest import Solved, fixture_document, fixture_model, report, solved, two_junction_document


def test_01_static_column():
    t0 = time.perf_counter()
    doc = fixture_document("six_junction_storage")
    model = parse_network(doc)
    s = model.storages[0]
    worst = 0.0
    for n in (1, 5, 50):
        net = segment_network(model, s.well_length / n)
        chain = net.well_chains[s.id]
        assert len(chain) == n
        rho = 1.0
        for p in chain:
            rho = steady_outlet_density(rho, 0.0, net.pipe_length[p], net.pipe_friction[p], net.pipe_diameter[p],
                                        net.pipe_beta[p])
        exact = math.exp(model.params.gravity * s.well_length / net.scales.a2)
        worst = max(worst, abs(rho / exact - 1.0))
    seconds = time.perf_counter() - t0
    ok = worst <= 1e-10 and seconds < 1.0
    report(1, "static column", ok, seconds, f"max relative error {worst:.2e} for N in (1, 5, 50)")
    assert ok


def test_02_steady_pipe():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    cases = 0
    while cases < 100:
        L = rng.uniform(1e3, 1.5e5)
        D = rng.uniform(0.2, 1.2)
        lam = rng.uniform(0.005, 0.02)
        p_i = rng.uniform(3e6, 7e6)
        doc = two_junction_document(length=L, diameter=D, friction=lam)
        doc["junctions"][0]["slack_pressure"] = p_i
        doc["junctions"][0]["p_max"] = 8e6
        net = segment_network(parse_network(doc), rng.uniform(2e3, 2e4))
        sc = net.scales
        phi = rng.uniform(-1, 1) * math.sqrt(0.9 * p_i**2 * D / (lam * L * sc.a2))
        drop = p_i**2 - lam * L * sc.a2 / D * phi * abs(phi)
        if drop <= 0.04 * p_i**2:
            continue
        closed = math.sqrt(drop)
        rho = p_i / sc.a2 / sc.rho0
        for p in net.chains["p"]:
            nxt = steady_outlet_density(rho, phi / sc.phi0, net.pipe_length_nd[p], net.pipe_friction[p],
                                        net.pipe_diameter[p] / sc.ell)
            assert abs(pipe_momentum_residual(rho, nxt, phi / sc.phi0, net.pipe_length_nd[p], net.pipe_friction[p],
                                              net.pipe_diameter[p] / sc.ell)) < 1e-12
            rho = nxt
        worst = max(worst, abs(rho * sc.rho0 * sc.a2 / closed - 1.0))
        cases += 1
    seconds = time.perf_counter() - t0
    ok = worst <= 1e-8 and seconds < 5.0
    report(2, "steady pipe", ok, seconds, f"max relative error {worst:.2e} over {cases} cases")
    assert ok


def test_03_derivatives():
    t0 = time.perf_counter()
    net = segment_network(fixture_model("six_junction_storage"), 10_000.0)
    problem = build_nlp(net, TimeGrid(24))
    rng = np.random.default_rng(3)
    jac = hess = leak = 0.0
    for _ in range(10):
        x = random_point(problem, rng)
        err = derivative_errors(problem, x, rng.normal(size=problem.m))
        jac, hess = max(jac, err["jacobian"]), max(hess, err["hessian"])
        leak = max(leak, err["jacobian_leak"], err["hessian_leak"])
    seconds = time.perf_counter() - t0
    ok = jac <= 1e-6 and hess <= 1e-5 and leak <= 1e-6 and seconds < 60.0
    report(3, "derivative checks", ok, seconds,
           f"Jacobian {jac:.1e}, Hessian {hess:.1e}, unstructured entries {leak:.1e} on 10 points (n={problem.n})")
    assert ok


def test_04_baseline(baseline):
    tr = baseline.trajectory
    N = baseline.grid.n_nodes
    d4 = tr.delivery("d4")[:N]
    nom4 = tr.delivery_nomination[tr.delivery_ids.index("d4"), :N]
    served = {}
    for did in ("d2", "d3"):
        i = tr.delivery_ids.index(did)
        served[did] = float(np.min(tr.delivery_flow[i, :N] / tr.delivery_nomination[i, :N]))
    starved = bool(np.all(d4 <= 0.01 * nom4 + 1e-9))
    ok = baseline.solution.success and starved and min(served.values()) >= 0.99 and baseline.seconds < 120
    report(4, "baseline six-junction", ok, baseline.seconds,
           f"{baseline.solution.status}; off-take 4 max {d4.max():.2e} kg/s of {nom4.max():g} nominated; "
           f"off-takes 2, 3 served at >= {min(served.values()):.4f}")
    assert ok


def test_05_storage_meets_demand(with_storage, baseline):
    tr, N = with_storage.trajectory, with_storage.grid.n_nodes
    w = with_storage.grid.weights_hours
    nominated = float(np.sum(tr.delivery_nomination[:, :N] * w))
    curtailed = float(np.sum((tr.delivery_nomination[:, :N] - tr.delivery_flow[:, :N]) * w))
    intake = tr.receipt("r1")[:N]
    base = baseline.trajectory.receipt("r1")[:N]
    k = int(np.argmin(intake))
    reduction = 1.0 - intake[k] / base[k]
    ok = (with_storage.solution.success and curtailed <= 0.005 * nominated and reduction >= 0.90
          and with_storage.seconds < 180)
    report(5, "storage meets demand", ok, with_storage.seconds,
           f"curtailment {curtailed / nominated:.2e} of nominations; intake at hour {k} "
           f"{intake[k]:.2f} vs baseline {base[k]:.2f} kg/s ({100 * reduction:.1f}% lower)")
    assert ok


def test_06_lower_bounded_intake(lower_bound):
    tr, N = lower_bound.trajectory, lower_bound.grid.n_nodes
    flow = tr.storage("s1")[:N]
    signs = np.sign(np.where(np.abs(flow) < 1e-6, 0.0, flow))
    nonzero = signs[signs != 0]
    changes = int(np.sum(nonzero[1:] != nonzero[:-1])) + int(nonzero[0] != nonzero[-1])  # periodic day
    early = bool(np.all(flow[:4] > 0))
    ok = lower_bound.solution.success and changes >= 2 and early and lower_bound.seconds < 180
    injecting = [int(h) for h in np.flatnonzero(flow > 0)]
    report(6, "lower-bounded intake", ok, lower_bound.seconds,
           f"{changes} sign changes; injecting at hours {injecting}")
    assert ok


def test_07_mesh_study():
    t0 = time.perf_counter()
    study = mesh_study(fixture_model("six_junction_storage"))
    seconds = time.perf_counter() - t0
    rows = study.table()
    worst = max(max(r["storage_error"], r["pressure_error"]) for r in rows)
    ok = all(r["status"] == "optimal" for r in rows) and worst < 1e-4 and seconds < 900
    detail = ", ".join(f"{r['delta_km']:g} km: {r['storage_error']:.1e}/{r['pressure_error']:.1e}" for r in rows)
    report(7, "mesh study", ok, seconds, f"E_s/E_p {detail}")
    assert ok


def test_08_storage_curve():
    t0 = time.perf_counter()
    model = fixture_model("six_junction_storage")
    curve = storage_curve(model, samples=25, p_max=1365 * PSI_TO_PA)
    seconds = time.perf_counter() - t0
    s = model.storages[0]
    lo = s.mass_min / s.reservoir_volume * model.params.sound_speed**2
    monotone = bool(np.all(np.diff(curve.withdrawal) >= 0))
    ok = (monotone and len(curve.withdrawal) >= 20 and curve.reservoir_pressure[0] == pytest.approx(lo)
          and seconds < 60)
    report(8, "storage curve", ok, seconds,
           f"{len(curve.withdrawal)} samples {curve.reservoir_pressure[0] / PSI_TO_PA:.0f}-1365 psi, monotone "
           f"{monotone}, max {curve.withdrawal[-1]:.1f} kg/s")
    assert ok


def test_09_cross_validation(with_storage):
    t0 = time.perf_counter()
    tr, model = with_storage.trajectory, with_storage.model
    controls = ControlSchedule.from_trajectory(tr, model)
    sim = simulate(with_storage.net, controls, tr, dt_seconds=60.0)
    seconds = time.perf_counter() - t0
    hours = tr.times_hours[1:]
    s, r = sim.sample(hours), tr.sample(hours)
    e_p = mean_relative_error(s.junction("3"), r.junction("3"))
    e_s = mean_relative_error(s.storage("s1"), r.storage("s1"))
    ok = e_p <= 0.01 and e_s <= 0.01 and seconds < 120
    report(9, "cross-validation", ok, seconds,
           f"junction 3 pressure {100 * e_p:.3f}%, storage flow {100 * e_s:.3f}% mean relative error at 60 s")
    assert ok


def test_10_conservation_and_periodicity(baseline, with_storage, lower_bound):
    t0 = time.perf_counter()
    worst = 0.0
    periodic = True
    for run in (baseline, with_storage, lower_bound):
        assert run.solution.success
        worst = max(worst, abs(period_mass_balance(run.net, run.grid, run.solution.x)["residual"]))
        # one set of variables per node; t = T is node 0 by construction
        assert run.problem.n == counts(run.net, run.grid)["n"]
        tr = run.trajectory
        for arr in (tr.density, tr.flux_in, tr.flux_out, tr.compressor_flow, tr.storage_flow, tr.receipt_flow,
                    tr.delivery_flow):
            periodic &= bool(np.array_equal(arr[:, 0], arr[:, -1]))
    seconds = time.perf_counter() - t0
    ok = worst <= 1e-8 and periodic
    report(10, "conservation and periodicity", ok, seconds,
           f"max period mass-balance residual {worst:.1e} (nondim); x(0) == x(T) exactly: {periodic}")
    assert ok


def test_11_scalability():
    t0 = time.perf_counter()
    model = synthetic_model(seed=0)
    net = segment_network(model, 10_000.0)
    problem = build_nlp(net, TimeGrid(24))
    sol = solve(problem)
    seconds = time.perf_counter() - t0
    ok = sol.success and seconds < 900
    report(11, "scalability", ok, seconds,
           f"506/20/4/196 synthetic network, n={problem.n}, m={problem.m}: {sol.status} in {sol.iterations} "
           f"iterations")
    assert ok


def test_12_scaling_invariance():
    t0 = time.perf_counter()
    options = SolverOptions(tol=1e-8)
    model = fixture_model("six_junction_storage")
    ell = model.params.sound_speed * 1000.0
    runs = {
        "reference": Solved("six_junction_storage", options=options),
        "2 ell": Solved("scaled", options=options, model=model.with_params(nominal_length=2 * ell)),
        "2 p0": Solved("scaled", options=options,
                       model=model.with_params(nominal_pressure=2 * model.params.nominal_pressure)),
    }
    J = {k: objective_breakdown(r.problem, r.solution.x)["J"] for k, r in runs.items()}
    changes = {k: abs(J[k] / J["reference"] - 1.0) for k in ("2 ell", "2 p0")}
    seconds = time.perf_counter() - t0
    ok = all(r.solution.success for r in runs.values()) and max(changes.values()) < 1e-6
    report(12, "scaling invariance", ok, seconds,
           f"objective change {changes['2 ell']:.1e} (2 ell), {changes['2 p0']:.1e} (2 p0) at solver tol 1e-8")
    assert ok
