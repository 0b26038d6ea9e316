import math

import numpy as np
import pytest

from gasnetopt.nondim import ScaleSet, beta, gravity_factor
from gasnetopt.physics import (compressor_residuals, compressor_work, nodal_balance_residual, objective_terms,
                               pipe_mass_residual, pipe_momentum_residual, reservoir_mass_violation,
                               reservoir_residual, signed_square, signed_sqrt, steady_flux, steady_outlet_density,
                               wellhead_regulator_residual)

SC = ScaleSet()


def test_mass_residual_cases():
    assert pipe_mass_residual(0.0, 0.0, 0.0, 1.0) == 0.0
    assert pipe_mass_residual(1.0, 1.0, -0.5, 1.0) == 0.0


def test_momentum_no_flow_no_gravity_forces_equal_density():
    assert pipe_momentum_residual(1.3, 1.3, 0.0, 1e4, 0.01, 0.6) == 0.0
    assert pipe_momentum_residual(1.3, 1.2, 0.0, 1e4, 0.01, 0.6) != 0.0


def test_horizontal_pressure_drop_example():
    # p_j^2 = p_i^2 - (lam L a^2 / D) phi |phi| gives 3.9711 MPa for these inputs.
    p_i, phi, a2 = 4e6, 100.0, 138_131.0
    closed_form = math.sqrt(p_i**2 - 0.01 * 10_000.0 * a2 / 0.6 * phi**2)
    sc = ScaleSet(sound_speed=math.sqrt(a2), nominal_pressure=p_i)
    rho_j = steady_outlet_density(1.0, phi / sc.phi0, 10_000.0 / sc.ell, 0.01, 0.6 / sc.ell)
    assert rho_j * sc.rho0 * a2 == pytest.approx(closed_form, rel=1e-12)
    assert closed_form / 1e6 == pytest.approx(3.9711, abs=5e-5)


def test_static_well_ratio_example():
    b = beta(1000.0, 9.81, math.sqrt(138_131.0))
    ratio = steady_outlet_density(1.0, 0.0, 1000.0, 0.015, 0.4, b)
    assert ratio == pytest.approx(1.07360, abs=5e-6)


def test_inclined_residual_tends_to_horizontal():
    rng = np.random.default_rng(2)
    for _ in range(50):
        ri, rj, ph = rng.uniform(0.5, 1.5, 2).tolist() + [rng.uniform(-1, 1)]
        flat = pipe_momentum_residual(ri, rj, ph, 5e3, 0.01, 0.5)
        tiny = rng.uniform(-1e-13, 1e-13)
        assert pipe_momentum_residual(ri, rj, ph, 5e3, 0.01, 0.5, tiny) == pytest.approx(flat, rel=1e-12, abs=1e-12)
        # first order in beta: e^b rho_j^2 and the friction factor (e^b - 1)/b
        b = rng.uniform(-1e-8, 1e-8)
        tilted = pipe_momentum_residual(ri, rj, ph, 5e3, 0.01, 0.5, b)
        friction = 5e3 / 0.5 * 0.01 * ph * ph
        assert abs(tilted - flat) <= abs(b) * (rj**2 + friction) * (1 + 1e-6)


def test_orientation_flip_is_equivalent():
    rng = np.random.default_rng(3)
    for _ in range(20):
        ri, rj = rng.uniform(0.8, 1.2, 2)
        phi = steady_flux(ri, rj, 8e4, 0.01, 0.6)
        back = steady_flux(rj, ri, 8e4, 0.01, 0.6)
        assert back == pytest.approx(-phi, rel=1e-14)
        assert pipe_momentum_residual(rj, ri, -phi, 8e4, 0.01, 0.6) == pytest.approx(0.0, abs=1e-14)


def test_steady_flux_inverts_outlet_density():
    rng = np.random.default_rng(4)
    ri = rng.uniform(0.8, 1.5, 30)
    phi = rng.uniform(-0.05, 0.05, 30)
    b = rng.uniform(-0.2, 0.2, 30)
    rj = steady_outlet_density(ri, phi, 2e4, 0.01, 0.5, b)
    assert np.allclose(steady_flux(ri, rj, 2e4, 0.01, 0.5, b), phi, rtol=1e-10, atol=1e-14)


def test_signed_square_and_root():
    x = np.array([-2.0, -0.5, 0.0, 0.25, 3.0])
    assert np.allclose(signed_sqrt(signed_square(x)), x)
    smooth = signed_square(x, 1e-6)
    assert np.allclose(smooth, signed_square(x), rtol=1e-10)


def test_compressor_relations():
    eq, _ = compressor_residuals(2.0, 3.0, 1.5, 10.0)
    assert eq == 0.0
    _, ineq = compressor_residuals(1.0, 1.0, 1.0, -7.0, "bidirectional")
    assert ineq <= 0.0
    _, ineq = compressor_residuals(1.0, 1.5, 1.5, -10.0, "bidirectional")
    assert ineq == pytest.approx(5.0)
    _, ineq = compressor_residuals(1.0, 1.0, 1.0, -1.0, "unidirectional")
    assert ineq > 0.0
    with pytest.raises(ValueError):
        compressor_residuals(1.0, 1.0, 1.0, 1.0, "rotary")


def test_compressor_work_values():
    assert compressor_work(1.0) == 0.0
    # (1.4 * 288.7 / 0.4) * (286.76 / 0.6) * (2**(2/7) - 1)
    assert compressor_work(2.0, 1.4, 0.6, 288.7) == pytest.approx(1.0577e5, rel=1e-4)


def test_compressor_work_monotone_with_matching_derivative():
    a = np.linspace(1.0, 3.0, 41)
    w = compressor_work(a)
    assert np.all(w >= 0) and np.all(np.diff(w) > 0)
    h = 1e-6
    m = 2.0 / 7.0
    coef = 1.4 * 288.7 / 0.4 * 286.76 / 0.6
    fd = (compressor_work(a[1:] + h) - compressor_work(a[1:] - h)) / (2 * h)
    assert np.allclose(fd, coef * m * a[1:] ** (m - 1), rtol=1e-6)


def test_compressor_work_rejects_bad_parameters():
    with pytest.raises(ValueError):
        compressor_work(1.2, gamma=1.0)
    with pytest.raises(ValueError):
        compressor_work(-1.0)


def test_reservoir_linear_in_time():
    V, f, tau = 9.1e6, 40.0, 3600.0
    rho0 = 4.96e8 / V
    rho1 = rho0 + f * tau / V
    assert abs(reservoir_residual((rho1 - rho0) / tau, f, V)) <= 1e-12 * f
    assert (rho1 - rho0) * V == pytest.approx(f * tau)
    assert reservoir_residual(0.0, 0.0, V) == 0.0


def test_reservoir_mass_limits():
    V = 9.1e6
    assert reservoir_mass_violation(4.96e8 / V, V, 3.5e8, 6.2e8) == 0.0
    assert reservoir_mass_violation(3.0e8 / V, V, 3.5e8, 6.2e8) == pytest.approx(0.5e8)


def test_wellhead_regulator():
    eq, viol = wellhead_regulator_residual(2.0, 2.0, 1.0, 2.0)
    assert eq == 0.0 and viol == 0.0
    eq, _ = wellhead_regulator_residual(2.0, 4.0, 0.5, 2.0)
    assert eq == 0.0
    _, viol = wellhead_regulator_residual(1.0, 1.0, 0.3, 2.0)
    assert viol > 0.0


def test_nodal_balance():
    area = math.pi * 0.36 / 4
    phi_out = 150.0 / area
    assert nodal_balance_residual(out_pipe_flows=[area * phi_out], receipts=[150.0]) == pytest.approx(0.0)
    # injection into storage draws gas from the junction
    r = nodal_balance_residual(in_pipe_flows=[50.0], deliveries=[10.0], storage_flows=[40.0])
    assert r == pytest.approx(0.0)


def test_objective_terms():
    w = np.ones(24)
    kw = dict(delivery_flows=np.full(24, 10.0), delivery_prices=np.full(24, 5.0),
              compressor_work=np.full(24, 1e4), compressor_flows=np.full(24, 100.0))
    jp, je, j = objective_terms(1.0, w, **kw)
    assert jp == pytest.approx(10 * 5 * 24)
    assert j == -jp
    jp, je, j = objective_terms(0.0, w, **kw)
    assert je == pytest.approx(1e4 * 100 * 24 / 1e6)
    assert j == je
    with pytest.raises(ValueError):
        objective_terms(1.5, w)
