"""Residuals of the reduced-order component equations.

Every function works on nondimensional quantities (see :mod:`gasnetopt.nondim`)
unless its docstring says otherwise, and accepts scalars or numpy arrays.
A residual is zero exactly when the component equation holds.
"""

from __future__ import annotations

import numpy as np

from .nondim import gravity_factor

WORK_CONSTANT = 286.76
SMOOTHING_EPS = 1e-6


def signed_square(x, eps: float | None = None):
    """``x |x|``, or the smooth surrogate ``x sqrt(x**2 + eps**2)``."""
    x = np.asarray(x, dtype=float)
    out = x * np.abs(x) if eps is None else x * np.sqrt(x * x + eps * eps)
    return out if out.ndim else float(out)


def signed_sqrt(x):
    """Inverse of :func:`signed_square`."""
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.sqrt(np.abs(x))
    return out if out.ndim else float(out)


def endpoint_fluxes(phi_plus, phi_minus):
    """``(phi_in, phi_out)`` from the mean and half-difference fluxes."""
    return np.subtract(phi_plus, phi_minus), np.add(phi_plus, phi_minus)


def pipe_mass_residual(drho_i, drho_j, phi_minus, length):
    """``L (rho_i' + rho_j') + 4 phi-``; ``drho_*`` are time derivatives."""
    return length * (np.add(drho_i, drho_j)) + 4.0 * np.asarray(phi_minus)


def pipe_momentum_residual(rho_i, rho_j, phi_plus, length, friction, diameter, beta=0.0, eps=None):
    """``e^b rho_j^2 - rho_i^2 + (lam L / D) ((e^b - 1)/b) phi+|phi+|``.

    ``length`` and ``diameter`` are physical (only their ratio enters) and
    ``beta`` is the gravity exponent of the pipe.
    """
    b = np.asarray(beta, dtype=float)
    k = np.asarray(friction) * np.asarray(length) / np.asarray(diameter) * gravity_factor(b)
    return np.exp(b) * np.square(rho_j) - np.square(rho_i) + k * signed_square(phi_plus, eps)


def steady_outlet_density(rho_i, phi_plus, length, friction, diameter, beta=0.0):
    """Density at the far end of a pipe carrying steady flux ``phi_plus``."""
    b = np.asarray(beta, dtype=float)
    k = np.asarray(friction) * np.asarray(length) / np.asarray(diameter) * gravity_factor(b)
    return np.sqrt((np.square(rho_i) - k * signed_square(phi_plus)) / np.exp(b))


def steady_flux(rho_i, rho_j, length, friction, diameter, beta=0.0):
    """Flux that makes the momentum residual vanish for given end densities."""
    b = np.asarray(beta, dtype=float)
    k = np.asarray(friction) * np.asarray(length) / np.asarray(diameter) * gravity_factor(b)
    return signed_sqrt((np.square(rho_i) - np.exp(b) * np.square(rho_j)) / k)


def compressor_residuals(rho_i, rho_j, alpha, flow, ctype: str = "unidirectional"):
    """Return ``(equality, inequality)`` residuals of a compressor.

    The equality is ``rho_j - alpha rho_i``. The inequality is feasible when
    it is ``<= 0``: ``-flow`` for a unidirectional unit and
    ``flow (1 - alpha)`` for a unit that passes uncompressed reverse flow.
    """
    eq = np.asarray(rho_j) - np.asarray(alpha) * np.asarray(rho_i)
    if ctype == "unidirectional":
        ineq = -np.asarray(flow, dtype=float)
    elif ctype == "bidirectional":
        ineq = np.asarray(flow) * (1.0 - np.asarray(alpha))
    else:
        raise ValueError(f"unknown compressor type {ctype!r}")
    return eq, ineq


def compressor_work(alpha, gamma: float = 1.4, gas_gravity: float = 0.6, temperature: float = 288.7):
    """Adiabatic specific work (J/kg) to compress gas by the ratio ``alpha``."""
    if not (gamma > 1 and gas_gravity > 0 and temperature > 0):
        raise ValueError("require gamma > 1, gas_gravity > 0 and temperature > 0")
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise ValueError("compression ratio must be positive")
    m = (gamma - 1.0) / gamma
    out = work_coefficient(gamma, gas_gravity, temperature) * (alpha**m - 1.0)
    return out if out.ndim else float(out)


def work_coefficient(gamma: float = 1.4, gas_gravity: float = 0.6, temperature: float = 288.7) -> float:
    return gamma * temperature / (gamma - 1.0) * WORK_CONSTANT / gas_gravity


def work_exponent(gamma: float = 1.4) -> float:
    return (gamma - 1.0) / gamma


def reservoir_residual(drho_res, flow_bottomhole, volume):
    """``V rho_r' - f_bh``."""
    return np.asarray(volume) * np.asarray(drho_res) - np.asarray(flow_bottomhole)


def reservoir_mass_violation(rho_res, volume, mass_min, mass_max):
    """Positive where the reservoir mass leaves ``[mass_min, mass_max]``."""
    m = np.asarray(rho_res) * volume
    return np.maximum(mass_min - m, 0.0) + np.maximum(m - mass_max, 0.0)


def wellhead_regulator_residual(rho_junction, rho_wellhead, alpha, alpha_max):
    """``(rho_junction - alpha rho_wh, bound violation of alpha)``."""
    eq = np.asarray(rho_junction) - np.asarray(alpha) * np.asarray(rho_wellhead)
    alpha = np.asarray(alpha, dtype=float)
    viol = np.maximum(1.0 / alpha_max - alpha, 0.0) + np.maximum(alpha - alpha_max, 0.0)
    return eq, viol


def nodal_balance_residual(out_pipe_flows=(), in_pipe_flows=(), out_compressor_flows=(),
                           in_compressor_flows=(), receipts=(), deliveries=(), storage_flows=()):
    """Mass-flow balance at a junction.

    ``out_pipe_flows`` are ``A phi_in`` of pipes leaving the junction and
    ``in_pipe_flows`` are ``A phi_out`` of pipes entering it. Storage flows
    are positive when gas is injected into the reservoir.
    """
    outflow = np.sum(out_pipe_flows) - np.sum(in_pipe_flows) + np.sum(out_compressor_flows) - np.sum(in_compressor_flows)
    return outflow - (np.sum(receipts) - np.sum(deliveries) - np.sum(storage_flows))


def well_balance_residuals(f_storage, f_wellhead, f_bottomhole, phi_in_first, phi_out_last, area,
                           phi_out_internal=(), phi_in_internal=()):
    """Residuals coupling the storage flows to the well fluxes."""
    res = [
        np.asarray(f_storage) - np.asarray(f_wellhead),
        np.asarray(f_wellhead) - area * np.asarray(phi_in_first),
        np.asarray(f_bottomhole) - area * np.asarray(phi_out_last),
    ]
    res.extend(np.asarray(a) - np.asarray(b) for a, b in zip(phi_in_internal, phi_out_internal))
    return res


def trapezoid_weights(n_nodes: int, dt: float, periodic: bool = True) -> np.ndarray:
    """Quadrature weights on a uniform grid; a periodic grid omits the repeated end node."""
    if periodic:
        return np.full(n_nodes, dt)
    w = np.full(n_nodes, dt)
    w[0] = w[-1] = dt / 2.0
    return w


def objective_terms(kappa, weights, delivery_flows=(), delivery_prices=(), receipt_flows=(),
                    receipt_prices=(), compressor_work=(), compressor_flows=(), power_unit: float = 1.0e6):
    """Economic value, compressor energy and the combined objective.

    Flows are in kg/s, prices in $ per (kg/s) per hour, work in J/kg and
    ``weights`` are quadrature weights in hours over the time axis (last axis
    of every array). Energy is reported in ``power_unit`` watt-hours.
    """
    if not 0.0 <= kappa <= 1.0:
        raise ValueError(f"kappa must lie in [0, 1], got {kappa!r}")
    w = np.asarray(weights, dtype=float)

    def integral(values):
        values = np.asarray(values, dtype=float)
        return float(np.sum(values * w)) if values.size else 0.0

    jp = integral(np.multiply(delivery_prices, delivery_flows)) + integral(np.multiply(receipt_prices, receipt_flows))
    je = integral(np.multiply(compressor_work, compressor_flows)) / power_unit
    return jp, je, kappa * (-jp) + (1.0 - kappa) * je
