"""Nominal scales for the nondimensional network equations.

All model equations are written in terms of nondimensional density, mass
flux, time and length. Density and pressure coincide after scaling because
the ideal equation of state ``p = a**2 * rho`` is used throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PSI_TO_PA = 6894.757
SECONDS_PER_HOUR = 3600.0
STANDARD_GRAVITY = 9.81

KINDS = (
    "pressure",
    "density",
    "flux",
    "mass-flow",
    "time",
    "length",
    "volume",
    "mass",
    "power",
    "work",
)


@dataclass(frozen=True)
class ScaleSet:
    """Nominal length ``ell`` (m), pressure ``p0`` (Pa) and sound speed ``a`` (m/s)."""

    sound_speed: float = 371.66
    nominal_pressure: float = 4.0e6
    nominal_length: float | None = None

    def __post_init__(self):
        if self.nominal_length is None:
            object.__setattr__(self, "nominal_length", self.sound_speed * 1000.0)
        for name in ("sound_speed", "nominal_pressure", "nominal_length"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")

    @property
    def a(self) -> float:
        return self.sound_speed

    @property
    def a2(self) -> float:
        return self.sound_speed**2

    @property
    def ell(self) -> float:
        return self.nominal_length

    @property
    def p0(self) -> float:
        return self.nominal_pressure

    @property
    def rho0(self) -> float:
        return self.nominal_pressure / self.a2

    @property
    def phi0(self) -> float:
        return self.sound_speed * self.rho0

    @property
    def t0(self) -> float:
        return self.nominal_length / self.sound_speed

    @property
    def v0(self) -> float:
        # unit cross-section times nominal length
        return self.nominal_length

    @property
    def m0(self) -> float:
        return self.rho0 * self.v0

    @property
    def f0(self) -> float:
        # nominal mass flux through a unit area
        return self.phi0

    @property
    def w0(self) -> float:
        # specific work (J/kg) scale
        return self.a2

    @property
    def power0(self) -> float:
        return self.w0 * self.f0

    def factor(self, kind: str) -> float:
        """Physical value of one nondimensional unit of ``kind``."""
        try:
            return {
                "pressure": self.p0,
                "density": self.rho0,
                "flux": self.phi0,
                "mass-flow": self.f0,
                "time": self.t0,
                "length": self.ell,
                "volume": self.v0,
                "mass": self.m0,
                "power": self.power0,
                "work": self.w0,
            }[kind]
        except KeyError:
            raise ValueError(f"unknown quantity kind {kind!r}; expected one of {KINDS}") from None

    def scale(self, value, kind: str):
        return np.asarray(value, dtype=float) / self.factor(kind) if np.ndim(value) else float(value) / self.factor(kind)

    def unscale(self, value, kind: str):
        return np.asarray(value, dtype=float) * self.factor(kind) if np.ndim(value) else float(value) * self.factor(kind)

    def hours(self, hours):
        """Nondimensional time for a duration in hours."""
        return self.scale(np.multiply(hours, SECONDS_PER_HOUR), "time")


def axial_gravity(inclination: float, gravity: float = STANDARD_GRAVITY) -> float:
    """Gravity component along a pipe axis raised ``inclination`` rad above horizontal.

    The axis points from the pipe's first junction to its second, so an
    uphill pipe sees a negative component and a downward well ``+g``.
    """
    return -gravity * math.sin(inclination)


def beta(length: float, g_axial: float, sound_speed: float) -> float:
    """Gravity exponent of a (sub-)pipe of physical ``length`` (m)."""
    return -2.0 * g_axial * length / sound_speed**2


def gravity_factor(b):
    """``(exp(b) - 1) / b`` with its series used near zero."""
    b = np.asarray(b, dtype=float)
    small = np.abs(b) < 1e-4
    safe = np.where(small, 1.0, b)
    exact = np.expm1(safe) / safe
    series = 1.0 + b / 2.0 + b * b / 6.0 + b**3 / 24.0
    out = np.where(small, series, exact)
    return float(out) if out.ndim == 0 else out


def pressure_to_pa(value, unit: str = "Pa") -> float:
    unit = unit.lower()
    if unit == "pa":
        return float(value)
    if unit == "mpa":
        return float(value) * 1e6
    if unit == "psi":
        return float(value) * PSI_TO_PA
    raise ValueError(f"unknown pressure unit {unit!r}")
