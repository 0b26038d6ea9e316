import math

import numpy as np
import pytest
import scipy.sparse as sp

from gasnetopt import TimeGrid, build_nlp, extract_solution, parse_network, segment_network
from gasnetopt.physics import steady_outlet_density
from gasnetopt.transcription import counts, objective_breakdown, period_mass_balance

from _checks import derivative_errors, fd_sparse, random_point
from conftest import fixture_model, two_junction_document


@pytest.fixture(scope="module")
def storage_problem():
    net = segment_network(fixture_model("six_junction_storage"), 10_000.0)
    return net, build_nlp(net, TimeGrid(24))


def test_time_grid():
    g = TimeGrid(24, 1)
    assert g.n_nodes == 24
    assert g.prev[0] == 23 and g.prev[5] == 4
    assert TimeGrid(24, 0.5).n_nodes == 48
    with pytest.raises(ValueError):
        TimeGrid(24, 5)
    with pytest.raises(ValueError):
        TimeGrid(1, 1)


@pytest.mark.parametrize("name,delta_km,dt", [("six_junction", 10, 1), ("six_junction_storage", 10, 1),
                                              ("six_junction_storage", 5, 2), ("six_junction_storage_lb", 20, 0.5)])
def test_counts_match_built_problem(name, delta_km, dt):
    net = segment_network(fixture_model(name), delta_km * 1000.0)
    grid = TimeGrid(24, dt)
    p = build_nlp(net, grid)
    c = counts(net, grid)
    assert (p.n, p.m_eq, p.m_ineq) == (c["n"], c["m_eq"], c["m_ineq"])
    N, J, P = grid.n_nodes, net.n_junctions, net.n_pipes
    C, S, R, D = net.n_compressors, net.n_storages, net.n_receipts, net.n_deliveries
    assert c["n"] == N * (J + 4 * P + 3 * C + 5 * S + R + D)
    assert c["m_eq"] == N * (J + 4 * P + 2 * C + 4 * S)
    assert c["m_ineq"] == N * C  # all fixture compressors are unidirectional


def test_bidirectional_compressor_adds_rows():
    model = fixture_model("six_junction")
    from dataclasses import replace
    comps = (replace(model.compressors[0], type="bidirectional"), model.compressors[1])
    net = segment_network(replace(model, compressors=comps), 10_000.0)
    p = build_nlp(net, TimeGrid(24))
    assert p.m_ineq == 24 * 3
    assert counts(net, TimeGrid(24))["m_ineq"] == 24 * 3


def test_slack_density_is_fixed(storage_problem):
    net, p = storage_problem
    rho = p.block("density")
    j = net.junction_index("1")
    assert np.array_equal(p.x_lb[rho[j]], p.x_ub[rho[j]])
    assert p.x_lb[rho[j]] * net.scales.rho0 * net.scales.a2 == pytest.approx(4e6)


def test_kappa_range():
    net = segment_network(fixture_model("six_junction"), 10_000.0)
    with pytest.raises(ValueError):
        build_nlp(net, kappa=1.2)


def test_derivatives_match_finite_differences(storage_problem):
    _, p = storage_problem
    rng = np.random.default_rng(11)
    for _ in range(3):
        x = random_point(p, rng)
        err = derivative_errors(p, x, rng.normal(size=p.m))
        assert err["jacobian"] < 1e-6 and err["jacobian_leak"] < 1e-6
        assert err["hessian"] < 1e-5 and err["hessian_leak"] < 1e-5


def test_derivatives_with_smoothing():
    net = segment_network(fixture_model("six_junction_storage"), 20_000.0)
    p = build_nlp(net, TimeGrid(24, 2), smoothing=True)
    rng = np.random.default_rng(3)
    x = random_point(p, rng)
    x[p.block("flux_plus")] = rng.normal(scale=1e-5, size=p.block("flux_plus").shape)  # a few eps wide
    err = derivative_errors(p, x, rng.normal(size=p.m), h=1e-9)
    assert err["jacobian"] < 1e-6 and err["hessian"] < 1e-5


def test_fd_oracle_detects_missing_pattern_entry():
    f = lambda z: np.array([z[0] * z[1], z[1] ** 2])
    full = sp.csr_matrix(np.array([[1.0, 1.0], [0.0, 1.0]]))
    _, leak = fd_sparse(f, np.array([2.0, 3.0]), full)
    assert leak == 0.0
    # a missing entry in a claimed row corrupts the grouped estimate
    partial = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 1.0]]))
    est, _ = fd_sparse(f, np.array([2.0, 3.0]), partial)
    assert abs(est[0, 0] - 3.0) > 1.0
    # a row nobody claims shows up as leakage
    only_second = sp.csr_matrix(np.array([[0.0, 0.0], [0.0, 1.0]]))
    _, leak = fd_sparse(f, np.array([2.0, 3.0]), only_second)
    assert leak > 1.0


def _steady_point(problem, net, delivery):
    """Hand-built steady state of the two-junction network."""
    sc = net.scales
    x = problem.initial_point().copy()
    area = net.pipe_area[0]
    phi = delivery / area / sc.phi0
    rho_a = 4e6 / sc.a2 / sc.rho0
    rho_b = steady_outlet_density(rho_a, phi, net.pipe_length_nd[0], net.pipe_friction[0],
                                  net.pipe_diameter[0] / sc.ell)
    x[problem.block("density")[0]] = rho_a
    x[problem.block("density")[1]] = rho_b
    for label in ("flux_plus", "flux_in", "flux_out"):
        x[problem.block(label)] = phi
    x[problem.block("flux_minus")] = 0.0
    x[problem.block("receipt")] = delivery / sc.f0
    x[problem.block("delivery")] = delivery / sc.f0
    return x


def test_steady_single_pipe_is_feasible():
    net = segment_network(parse_network(two_junction_document(delivery=50.0)), 10_000.0)
    p = build_nlp(net, TimeGrid(24))
    x = _steady_point(p, net, 50.0)
    g = p.eval_g(x)
    assert np.max(np.abs(g[: p.m_eq])) < 1e-12
    assert np.all(x >= p.x_lb - 1e-15) and np.all(x <= p.x_ub + 1e-15)
    tr = extract_solution(net, TimeGrid(24), x)
    closed = math.sqrt(4e6**2 - 0.01 * 10_000.0 * net.scales.a2 / 0.6 * (50.0 / net.pipe_area[0]) ** 2)
    assert tr.pressure[1] == pytest.approx(closed, rel=1e-10)
    mb = period_mass_balance(net, TimeGrid(24), x)
    assert abs(mb["residual"]) < 1e-12


def test_objective_breakdown_on_steady_point():
    net = segment_network(parse_network(two_junction_document(delivery=50.0)), 10_000.0)
    p = build_nlp(net, TimeGrid(24), kappa=1.0)
    x = _steady_point(p, net, 50.0)
    parts = objective_breakdown(p, x)
    assert parts["J_P"] == pytest.approx(24 * 50.0 * (3 - 1))
    assert parts["J_E"] == 0.0
    assert p.eval_f(x) == pytest.approx(parts["J"])


def test_extract_solution_is_periodic(storage_problem):
    net, p = storage_problem
    rng = np.random.default_rng(0)
    tr = extract_solution(net, TimeGrid(24), random_point(p, rng))
    assert tr.times_hours[-1] == 24.0
    assert np.array_equal(tr.pressure[:, 0], tr.pressure[:, -1])
    assert np.array_equal(tr.flux_in[:, 0], tr.flux_in[:, -1])
    assert np.array_equal(tr.compressor_flow[:, 0], tr.compressor_flow[:, -1])
    s = fixture_model("six_junction_storage").storages[0]
    assert tr.reservoir_mass[0, 0] == pytest.approx(s.initial_mass)


def test_nonfinite_oracle_reports_name(storage_problem):
    _, p = storage_problem
    x = p.initial_point().copy()
    x[p.block("ratio")[0, 0]] = -1.0
    with pytest.raises(FloatingPointError, match="compressor_work"):
        p.eval_g(x)
