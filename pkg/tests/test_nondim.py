import math

import numpy as np
import pytest

from gasnetopt.nondim import KINDS, ScaleSet, axial_gravity, beta, gravity_factor, pressure_to_pa

A2 = 371.66**2


def test_default_scales():
    sc = ScaleSet()
    assert sc.t0 == pytest.approx(1000.0)
    assert sc.rho0 == pytest.approx(4e6 / A2)
    assert sc.phi0 == pytest.approx(371.66 * sc.rho0)
    assert sc.m0 == pytest.approx(sc.rho0 * sc.ell)
    assert sc.power0 == pytest.approx(sc.a2 * sc.f0)


def test_pressure_at_nominal_is_one():
    assert ScaleSet().scale(4e6, "pressure") == 1.0


def test_day_in_time_units():
    assert ScaleSet(nominal_length=371_660.0).scale(86_400.0, "time") == pytest.approx(86.4)


def test_round_trip_every_kind():
    rng = np.random.default_rng(1)
    sc = ScaleSet(350.0, 5e6, 2e5)
    for kind in KINDS:
        q = rng.uniform(-1e6, 1e6, size=7)
        assert np.allclose(sc.unscale(sc.scale(q, kind), kind), q, rtol=1e-15, atol=0)


def test_unknown_kind():
    with pytest.raises(ValueError, match="unknown quantity kind"):
        ScaleSet().scale(1.0, "temperature")


def test_rejects_nonpositive_constants():
    with pytest.raises(ValueError):
        ScaleSet(sound_speed=0.0)


def test_beta_horizontal_is_zero():
    assert beta(1000.0, axial_gravity(0.0), 371.66) == 0.0


def test_beta_downward_well():
    assert beta(1000.0, 9.81, math.sqrt(138_131.0)) == pytest.approx(-0.14204, abs=5e-6)


def test_beta_upslope_pipe():
    b = beta(1000.0, axial_gravity(math.radians(30.0)), math.sqrt(138_131.0))
    assert b == pytest.approx(0.07102, abs=5e-6)


def test_gravity_factor_continuous_at_series_switch():
    for b in (1e-4 * (1 - 1e-9), 1e-4 * (1 + 1e-9), -1e-4 * (1 + 1e-9)):
        assert gravity_factor(b) == pytest.approx(math.expm1(b) / b, rel=1e-14)
    assert gravity_factor(0.0) == 1.0


def test_psi_conversion():
    assert pressure_to_pa(1365, "psi") == pytest.approx(1365 * 6894.757)
    assert pressure_to_pa(4, "MPa") == 4e6
