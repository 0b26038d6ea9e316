"""Forward transient simulation of a network under prescribed controls.

Time stepping is implicit Euler. Each step solves the full set of network
equations for the new time layer by damped Newton iteration, with the
previous layer and the controls held as fixed parameters. The residual rows
are the same ones the optimizer uses (see :mod:`gasnetopt.assembly`).

Controls are the compressor ratios, the receipts at non-slack junctions,
the deliveries, the slack pressures and, for each storage, either the
wellhead regulator ratio (``storage_control="ratio"``) or the storage flow
(``storage_control="flow"``). Slack junctions have no balance row; the gas
they supply is reported in ``TransientTrajectory.slack_injection`` and
assigned to the first receipt located there.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.linalg import lsqr

from .assembly import balance_rows, compressor_ratio_rows, pipe_rows, reservoir_volumes_nd, well_rows
from .network import AugmentedNetwork, NetworkModel
from .nondim import SECONDS_PER_HOUR, STANDARD_GRAVITY
from .physics import compressor_work, steady_flux
from .terms import Registry, TermSystem
from .trajectory import TransientTrajectory

log = logging.getLogger(__name__)

STORAGE_CONTROLS = ("ratio", "flow")
_FLUX_FLOOR = 1e-8
_TIME_EPS = 1e-9


class SimulationError(RuntimeError):
    """Newton failure at a time step; names the worst residual row."""

    def __init__(self, step: int, time_hours: float, residual: float, row: str, reason: str = "no convergence"):
        self.step = step
        self.time_hours = time_hours
        self.residual = residual
        self.row = row
        super().__init__(f"{reason} at step {step} (t = {time_hours:.4f} h): worst residual {residual:.3e} in {row}")


def _rows(values, count: int, width: int, fill: float, name: str) -> np.ndarray:
    if values is None:
        return np.full((count, width), fill)
    arr = np.array(values, dtype=float, ndmin=2)
    if arr.shape != (count, width):
        raise ValueError(f"{name} must have shape {(count, width)}, got {arr.shape}")
    return arr


@dataclass
class ControlSchedule:
    """Piecewise-constant controls on a time grid.

    Column ``k`` applies on ``(t_{k-1}, t_k]``, and the interval after the
    last column wraps onto column 0 (periodic horizon). This matches the
    backward differences of the optimizer, so a schedule read off an
    optimal trajectory drives the simulator with exactly the inputs the
    optimizer assumed. Flows are kg/s (storage positive when injecting),
    pressures Pa.
    """

    times_hours: np.ndarray
    horizon_hours: float
    compressor_ids: tuple = ()
    compressor_ratio: np.ndarray = None
    storage_ids: tuple = ()
    storage_ratio: np.ndarray = None
    storage_flow: np.ndarray = None
    receipt_ids: tuple = ()
    receipt_flow: np.ndarray = None
    delivery_ids: tuple = ()
    delivery_flow: np.ndarray = None
    slack_ids: tuple = ()
    slack_pressure: np.ndarray = None

    def __post_init__(self):
        self.times_hours = np.asarray(self.times_hours, dtype=float).ravel()
        K = len(self.times_hours)
        if K == 0:
            raise ValueError("schedule needs at least one time point")
        if np.any(np.diff(self.times_hours) <= 0):
            raise ValueError("schedule times must be strictly increasing")
        if self.times_hours[0] < 0 or self.times_hours[-1] >= self.horizon_hours:
            raise ValueError(f"schedule times must lie in [0, {self.horizon_hours})")
        for ids in ("compressor_ids", "storage_ids", "receipt_ids", "delivery_ids", "slack_ids"):
            setattr(self, ids, tuple(getattr(self, ids)))
        self.compressor_ratio = _rows(self.compressor_ratio, len(self.compressor_ids), K, 1.0, "compressor_ratio")
        self.storage_ratio = _rows(self.storage_ratio, len(self.storage_ids), K, 1.0, "storage_ratio")
        self.storage_flow = _rows(self.storage_flow, len(self.storage_ids), K, 0.0, "storage_flow")
        self.receipt_flow = _rows(self.receipt_flow, len(self.receipt_ids), K, 0.0, "receipt_flow")
        self.delivery_flow = _rows(self.delivery_flow, len(self.delivery_ids), K, 0.0, "delivery_flow")
        self.slack_pressure = _rows(self.slack_pressure, len(self.slack_ids), K, np.nan, "slack_pressure")
        if np.any(~np.isfinite(self.slack_pressure)):
            raise ValueError("slack pressures must be given for every slack junction and time")

    @property
    def n_times(self) -> int:
        return len(self.times_hours)

    def column(self, t_hours: float) -> int:
        """Schedule column in force on the step that ends at ``t_hours``."""
        t = math.fmod(float(t_hours), self.horizon_hours)
        if t < 0:
            t += self.horizon_hours
        if self.horizon_hours - t <= _TIME_EPS:
            t = 0.0
        return int(np.searchsorted(self.times_hours, t - _TIME_EPS, side="left")) % self.n_times

    # ----------------------------------------------------------- builders
    @classmethod
    def from_model(cls, model: NetworkModel, times_hours=None) -> "ControlSchedule":
        """Nominal controls: unit ratios, idle storage, full deliveries, minimum receipts."""
        T = model.params.horizon_hours
        t = np.arange(0.0, T, 1.0) if times_hours is None else np.asarray(times_hours, dtype=float)

        def prof(p, default=0.0):
            return np.full(len(t), default) if p is None else np.asarray(p(t), dtype=float).reshape(len(t))

        slack = [j for j in model.junctions if j.slack]
        return cls(
            times_hours=t,
            horizon_hours=T,
            compressor_ids=[c.id for c in model.compressors],
            storage_ids=[s.id for s in model.storages],
            receipt_ids=[r.id for r in model.receipts],
            receipt_flow=[prof(r.flow_min) for r in model.receipts] or None,
            delivery_ids=[d.id for d in model.deliveries],
            delivery_flow=[prof(d.flow_max) for d in model.deliveries] or None,
            slack_ids=[j.id for j in slack],
            slack_pressure=[prof(j.slack_pressure) for j in slack] or None,
        )

    @classmethod
    def from_trajectory(cls, tr: TransientTrajectory, model: NetworkModel,
                        horizon_hours: float | None = None) -> "ControlSchedule":
        """Controls realized by a trajectory (typically an optimizer solution)."""
        T = model.params.horizon_hours if horizon_hours is None else horizon_hours
        keep = np.flatnonzero(tr.times_hours < T - _TIME_EPS)
        slack = [j.id for j in model.junctions if j.slack]
        return cls(
            times_hours=tr.times_hours[keep],
            horizon_hours=T,
            compressor_ids=tr.compressor_ids,
            compressor_ratio=tr.compressor_ratio[:, keep],
            storage_ids=tr.storage_ids,
            storage_ratio=tr.storage_ratio[:, keep],
            storage_flow=tr.storage_flow[:, keep],
            receipt_ids=tr.receipt_ids,
            receipt_flow=tr.receipt_flow[:, keep],
            delivery_ids=tr.delivery_ids,
            delivery_flow=tr.delivery_flow[:, keep],
            slack_ids=slack,
            slack_pressure=np.array([tr.junction(j)[keep] for j in slack]).reshape(len(slack), len(keep)),
        )

    def to_document(self) -> dict:
        def series(ids, values):
            return {i: [float(v) for v in row] for i, row in zip(ids, values)}

        return {
            "horizon_hours": float(self.horizon_hours),
            "times_hours": [float(t) for t in self.times_hours],
            "units": {"flow": "kg/s", "pressure": "Pa"},
            "compressors": {c: {"ratio": [float(v) for v in self.compressor_ratio[i]]}
                            for i, c in enumerate(self.compressor_ids)},
            "storages": {s: {"ratio": [float(v) for v in self.storage_ratio[i]],
                             "flow": [float(v) for v in self.storage_flow[i]]}
                         for i, s in enumerate(self.storage_ids)},
            "receipts": series(self.receipt_ids, self.receipt_flow),
            "deliveries": series(self.delivery_ids, self.delivery_flow),
            "slack_pressure": series(self.slack_ids, self.slack_pressure),
        }

    @classmethod
    def from_document(cls, doc: dict) -> "ControlSchedule":
        try:
            comps = doc.get("compressors", {})
            stores = doc.get("storages", {})
            rec, dlv, slk = doc.get("receipts", {}), doc.get("deliveries", {}), doc.get("slack_pressure", {})

            def block(mapping, key=None):
                rows = [(v if key is None else v[key]) for v in mapping.values()]
                return rows or None

            return cls(
                times_hours=doc["times_hours"],
                horizon_hours=float(doc["horizon_hours"]),
                compressor_ids=list(comps),
                compressor_ratio=block(comps, "ratio"),
                storage_ids=list(stores),
                storage_ratio=block(stores, "ratio"),
                storage_flow=block(stores, "flow"),
                receipt_ids=list(rec),
                receipt_flow=block(rec),
                delivery_ids=list(dlv),
                delivery_flow=block(dlv),
                slack_ids=list(slk),
                slack_pressure=block(slk),
            )
        except KeyError as exc:
            raise ValueError(f"control schedule document is missing {exc}") from None

    # --------------------------------------------------------- validation
    def aligned(self, model: NetworkModel) -> dict:
        """Control arrays reordered to the model's entity order (SI units)."""

        def pick(ids, values, wanted, what, default=None):
            index = {k: i for i, k in enumerate(ids)}
            missing = [w for w in wanted if w not in index]
            if missing and default is None:
                raise ValueError(f"schedule has no {what} for {', '.join(missing)}")
            out = np.empty((len(wanted), self.n_times))
            for r, w in enumerate(wanted):
                out[r] = values[index[w]] if w in index else default
            return out

        slack = [j.id for j in model.junctions if j.slack]
        slack_receipts = {r.id for r in model.receipts if model.junction(r.junction).slack}
        rec_ids = [r.id for r in model.receipts]
        receipts = pick(self.receipt_ids, self.receipt_flow,
                        [r for r in rec_ids if r not in slack_receipts], "receipt flow")
        full = np.zeros((len(rec_ids), self.n_times))
        full[[k for k, r in enumerate(rec_ids) if r not in slack_receipts]] = receipts
        return {
            "compressor_ratio": pick(self.compressor_ids, self.compressor_ratio,
                                     [c.id for c in model.compressors], "compressor ratio"),
            "storage_ratio": pick(self.storage_ids, self.storage_ratio, [s.id for s in model.storages],
                                  "storage ratio"),
            "storage_flow": pick(self.storage_ids, self.storage_flow, [s.id for s in model.storages],
                                 "storage flow"),
            "receipt_flow": full,
            "delivery_flow": pick(self.delivery_ids, self.delivery_flow, [d.id for d in model.deliveries],
                                  "delivery flow"),
            "slack_pressure": pick(self.slack_ids, self.slack_pressure, slack, "slack pressure"),
        }

    def check_bounds(self, model: NetworkModel, storage_control: str = "ratio", rtol: float = 1e-6) -> list[str]:
        """Human-readable notes for every control outside its operating limits."""
        a = self.aligned(model)
        t = self.times_hours
        notes = []

        def flag(label, values, lo, hi):
            lo = np.broadcast_to(lo, values.shape)
            hi = np.broadcast_to(hi, values.shape)
            tol = rtol * np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))
            bad = np.flatnonzero((values < lo - tol) | (values > hi + tol))
            if bad.size:
                k = bad[0]
                notes.append(f"{label}: {values[k]:.6g} outside [{lo[k]:.6g}, {hi[k]:.6g}] at {t[k]:g} h"
                             + (f" and {bad.size - 1} more" if bad.size > 1 else ""))

        for i, c in enumerate(model.compressors):
            flag(f"compressor {c.id} ratio", a["compressor_ratio"][i], 1.0, c.ratio_max)
        for i, s in enumerate(model.storages):
            if storage_control == "ratio":
                flag(f"storage {s.id} ratio", a["storage_ratio"][i], 1.0 / s.ratio_max, s.ratio_max)
            else:
                flag(f"storage {s.id} flow", a["storage_flow"][i], -s.flow_max, s.flow_max)
        for i, r in enumerate(model.receipts):
            if model.junction(r.junction).slack:
                continue
            lo = 0.0 if r.flow_min is None else r.flow_min(t)
            flag(f"receipt {r.id}", a["receipt_flow"][i], lo, r.flow_max(t))
        for i, d in enumerate(model.deliveries):
            lo = 0.0 if d.flow_min is None else d.flow_min(t)
            flag(f"delivery {d.id}", a["delivery_flow"][i], lo, d.flow_max(t))
        return notes


@dataclass
class SimulationState:
    """One time layer of the network state, nondimensional."""

    density: np.ndarray
    flux_plus: np.ndarray
    flux_minus: np.ndarray
    flux_in: np.ndarray
    flux_out: np.ndarray
    compressor_flow: np.ndarray
    storage_ratio: np.ndarray
    storage_flow: np.ndarray
    wellhead_flow: np.ndarray
    bottomhole_flow: np.ndarray
    reservoir_density: np.ndarray


class _StepSystem:
    """Residuals of one implicit-Euler step, or of a steady state (``dt=None``)."""

    def __init__(self, net: AugmentedNetwork, dt: float | None, storage_control: str):
        model = net.model
        self.net = net
        self.storage_control = storage_control
        V = Registry()
        J_ids, P_ids = net.junction_ids, net.pipe_ids
        C_ids = [c.id for c in model.compressors]
        S_ids = [s.id for s in model.storages]
        slack = list(net.slack_junctions)
        self.slack = slack

        self.rho = V.add("density", J_ids, 1)
        self.php = V.add("flux_plus", P_ids, 1)
        self.phm = V.add("flux_minus", P_ids, 1)
        self.phin = V.add("flux_in", P_ids, 1)
        self.phout = V.add("flux_out", P_ids, 1)
        self.flow = V.add("flow", C_ids, 1)
        ratio_free = storage_control == "flow"
        if ratio_free:
            self.s_ratio = V.add("storage_ratio", S_ids, 1)
        else:
            self.s_flow = V.add("storage_flow", S_ids, 1)
        self.s_wh = V.add("wellhead_flow", S_ids, 1)
        self.s_bh = V.add("bottomhole_flow", S_ids, 1)
        self.s_rho = V.add("reservoir_density", S_ids, 1)
        self.n_u = V.size

        self.rho_prev = V.add("density_prev", J_ids, 1)
        self.s_rho_prev = V.add("reservoir_prev", S_ids, 1)
        self.alpha = V.add("ratio", C_ids, 1)
        if ratio_free:
            self.s_flow = V.add("storage_flow", S_ids, 1)
        else:
            self.s_ratio = V.add("storage_ratio", S_ids, 1)
        self.f_r = V.add("receipt", [r.id for r in model.receipts], 1)
        self.f_d = V.add("delivery", [d.id for d in model.deliveries], 1)
        self.slack_rho = V.add("slack_density", [J_ids[k] for k in slack], 1)
        self.variables = V

        S = TermSystem(V.size)
        pipe_rows(S, net, 1, self.rho, self.rho_prev, self.php, self.phm, self.phin, self.phout, dt)
        if C_ids:
            compressor_ratio_rows(S, net, 1, self.rho, self.alpha)
        balanced = [k for k, kind in enumerate(net.junction_kind) if kind != "well" and k not in slack]
        balance_rows(S, net, 1, balanced, self.phin, self.phout, self.flow, self.f_r, self.f_d, self.s_flow)
        if slack:
            r = S.add_rows("slack_density", [J_ids[k] for k in slack], 1)
            S.linear(r, self.rho[slack], 1.0)
            S.linear(r, self.slack_rho, -1.0)
        if S_ids:
            well_rows(S, net, 1, self.rho, self.phin, self.phout, self.s_ratio, self.s_flow, self.s_wh,
                      self.s_bh, self.s_rho)
            r = S.add_rows("reservoir", S_ids, 1)
            if dt is None:
                S.linear(r, self.s_rho, 1.0)
                S.linear(r, self.s_rho_prev, -1.0)
            else:
                vdt = reservoir_volumes_nd(net)[:, None] / dt
                S.linear(r, self.s_rho, vdt)
                S.linear(r, self.s_rho_prev, -vdt)
                S.linear(r, self.s_bh, -1.0)
        S.finalize()
        if S.n_rows != self.n_u:
            raise ValueError(f"simulation system is not square: {S.n_rows} rows for {self.n_u} unknowns; "
                             "check slack junctions and compressor placement")
        self.system = S
        keep = S.jac_cols < self.n_u
        self._keep = keep
        self._jr, self._jc = S.jac_rows[keep], S.jac_cols[keep]

    # ------------------------------------------------------------ packing
    def pack(self, state: SimulationState) -> np.ndarray:
        u = np.zeros(self.n_u)
        u[self.rho[:, 0]] = state.density
        u[self.php[:, 0]] = state.flux_plus
        u[self.phm[:, 0]] = state.flux_minus
        u[self.phin[:, 0]] = state.flux_in
        u[self.phout[:, 0]] = state.flux_out
        u[self.flow[:, 0]] = state.compressor_flow
        free = self.s_ratio if self.storage_control == "flow" else self.s_flow
        u[free[:, 0]] = state.storage_ratio if self.storage_control == "flow" else state.storage_flow
        u[self.s_wh[:, 0]] = state.wellhead_flow
        u[self.s_bh[:, 0]] = state.bottomhole_flow
        u[self.s_rho[:, 0]] = state.reservoir_density
        return u

    def unpack(self, x) -> SimulationState:
        x = np.asarray(x)
        return SimulationState(
            density=x[self.rho[:, 0]], flux_plus=x[self.php[:, 0]], flux_minus=x[self.phm[:, 0]],
            flux_in=x[self.phin[:, 0]], flux_out=x[self.phout[:, 0]], compressor_flow=x[self.flow[:, 0]],
            storage_ratio=x[self.s_ratio[:, 0]], storage_flow=x[self.s_flow[:, 0]],
            wellhead_flow=x[self.s_wh[:, 0]], bottomhole_flow=x[self.s_bh[:, 0]],
            reservoir_density=x[self.s_rho[:, 0]],
        )

    def parameters(self, prev: SimulationState, controls: dict) -> np.ndarray:
        """Parameter part of the variable vector, in registry order."""
        storage = controls["storage_flow"] if self.storage_control == "flow" else controls["storage_ratio"]
        return np.concatenate([
            prev.density, prev.reservoir_density, controls["compressor_ratio"], storage,
            controls["receipt_flow"], controls["delivery_flow"], controls["slack_density"],
        ])

    # ------------------------------------------------------------- Newton
    def residual(self, x) -> np.ndarray:
        return self.system.values(x)

    def jacobian(self, x) -> sp.csc_matrix:
        xf = np.array(x, dtype=float)
        ph = self.php[:, 0]
        # x|x| has zero slope at rest; a tiny floor keeps looped networks solvable
        xf[ph] = np.where(np.abs(xf[ph]) < _FLUX_FLOOR, np.where(xf[ph] < 0, -_FLUX_FLOOR, _FLUX_FLOOR), xf[ph])
        v = self.system.jacobian_values(xf)[self._keep]
        return sp.csc_matrix((v, (self._jr, self._jc)), shape=(self.n_u, self.n_u))

    def solve(self, u0, params, tol: float, max_iter: int, step: int = 0, t_hours: float = 0.0):
        x = np.concatenate([u0, params])
        F = self.residual(x)
        for it in range(max_iter + 1):
            worst = float(np.max(np.abs(F), initial=0.0))
            if not np.isfinite(worst):
                raise SimulationError(step, t_hours, worst, self._worst_row(F), "non-finite residual")
            if worst <= tol:
                return x[: self.n_u], it
            if it == max_iter:
                break
            try:
                du = spla.splu(self.jacobian(x)).solve(-F)
            except RuntimeError:
                raise SimulationError(step, t_hours, worst, self._worst_row(F), "singular Newton matrix") from None
            norm = float(np.linalg.norm(F))
            lam = 1.0
            while True:
                xt = x.copy()
                xt[: self.n_u] += lam * du
                Ft = self.residual(xt)
                nt = float(np.linalg.norm(Ft))
                if np.isfinite(nt) and nt <= (1.0 - 1e-4 * lam) * norm:
                    break
                lam *= 0.5
                if lam < 1e-6:
                    raise SimulationError(step, t_hours, worst, self._worst_row(F), "Newton stagnation")
            x, F = xt, Ft
        raise SimulationError(step, t_hours, float(np.max(np.abs(F))), self._worst_row(F))

    def _worst_row(self, F) -> str:
        F = np.where(np.isfinite(F), np.abs(F), np.inf)
        return self.system.rows.name(int(np.argmax(F)))


def _nd_controls(net: AugmentedNetwork, aligned: dict, col: int) -> dict:
    sc = net.scales
    return {
        "compressor_ratio": aligned["compressor_ratio"][:, col],
        "storage_ratio": aligned["storage_ratio"][:, col],
        "storage_flow": aligned["storage_flow"][:, col] / sc.f0,
        "receipt_flow": aligned["receipt_flow"][:, col] / sc.f0,
        "delivery_flow": aligned["delivery_flow"][:, col] / sc.f0,
        "slack_density": aligned["slack_pressure"][:, col] / sc.a2 / sc.rho0,
    }


def _static_column(net: AugmentedNetwork, s: int, rho_res: float) -> dict:
    """Nondimensional densities of a well at rest above a reservoir at ``rho_res``."""
    st = net.model.storages[s]
    chain = net.well_chains[st.id]
    depth = np.concatenate([[0.0], np.cumsum(net.pipe_length[list(chain)])])
    g = net.model.params.gravity or STANDARD_GRAVITY
    nodes = [net.pipe_from[chain[0]]] + [net.pipe_to[p] for p in chain]
    return {int(j): rho_res * math.exp(-g * (depth[-1] - depth[q]) / net.scales.a2) for q, j in enumerate(nodes)}


def _densities_from(net: AugmentedNetwork, densities, reservoir_nd) -> np.ndarray:
    """Augmented nondimensional densities from an array or an id-keyed mapping (kg/m^3)."""
    rho0 = net.scales.rho0
    if not isinstance(densities, dict):
        arr = np.asarray(densities, dtype=float).ravel()
        if arr.shape != (net.n_junctions,):
            raise ValueError(f"expected {net.n_junctions} junction densities, got {arr.size}")
        if np.any(~(arr > 0)):
            raise ValueError("junction densities must be positive")
        return arr / rho0

    out = np.full(net.n_junctions, np.nan)
    for jid, value in densities.items():
        value = float(value)
        if not value > 0:
            raise ValueError(f"density at junction {jid} must be positive, got {value}")
        out[net.junction_index(jid)] = value / rho0
    for j in net.model.junctions:
        if np.isnan(out[net.junction_index(j.id)]):
            raise ValueError(f"no density given for junction {j.id}")
    for pid, chain in net.chains.items():
        nodes = [net.pipe_from[chain[0]]] + [net.pipe_to[p] for p in chain]
        x = np.concatenate([[0.0], np.cumsum(net.pipe_length[list(chain)])]) / max(net.pipe_length[list(chain)].sum(), 1e-300)
        a, b = out[nodes[0]] ** 2, out[nodes[-1]] ** 2
        for q, j in enumerate(nodes):
            if np.isnan(out[j]):
                out[j] = math.sqrt((1.0 - x[q]) * a + x[q] * b)
    for s in range(net.n_storages):
        for j, value in _static_column(net, s, reservoir_nd[s]).items():
            if np.isnan(out[j]):
                out[j] = value
    return out


def project_initial_state(net: AugmentedNetwork, densities, prev_densities=None, dt_seconds: float | None = None,
                          reservoir_density=None, receipts=None, deliveries=None) -> SimulationState:
    """Fluxes consistent with given junction densities.

    ``densities`` is either an array over the augmented junctions or a
    mapping from junction id to density (kg/m^3); in a mapping, interior pipe
    points are filled by interpolating the squared density along the pipe and
    well points by the static column above the reservoir. Mean fluxes follow
    from the momentum equation. Flux imbalances follow from the mass equation
    when the previous layer and step are given and are zero otherwise.
    Compressor flows are the least-squares fit to the junction balances for
    the given transfer flows (kg/s, default zero).
    """
    model, sc = net.model, net.scales
    if reservoir_density is None:
        res = np.array([s.initial_mass / s.reservoir_volume for s in model.storages]) / sc.rho0
    else:
        res = np.asarray(reservoir_density, dtype=float).reshape(net.n_storages) / sc.rho0
        if np.any(~(res > 0)):
            raise ValueError("reservoir densities must be positive")
    rho = _densities_from(net, densities, res)
    fr, to = net.pipe_from, net.pipe_to
    php = np.atleast_1d(steady_flux(rho[fr], rho[to], net.pipe_length, net.pipe_friction, net.pipe_diameter,
                                    net.pipe_beta)).astype(float)
    if prev_densities is not None:
        if dt_seconds is None or not dt_seconds > 0:
            raise ValueError("a positive dt_seconds is required with prev_densities")
        prev = _densities_from(net, prev_densities, res)
        phm = -net.pipe_length_nd * (rho[fr] - prev[fr] + rho[to] - prev[to]) / (4.0 * dt_seconds / sc.t0)
    else:
        phm = np.zeros(net.n_pipes)
    phin, phout = php - phm, php + phm

    S = net.n_storages
    aw = np.array([s.well_area for s in model.storages])
    first = np.array([net.well_chains[s.id][0] for s in model.storages], dtype=int)
    last = np.array([net.well_chains[s.id][-1] for s in model.storages], dtype=int)
    f_wh = aw * phin[first] if S else np.zeros(0)
    f_bh = aw * phout[last] if S else np.zeros(0)
    s_ratio = rho[net.storage_junction] / rho[net.wellhead] if S else np.zeros(0)

    flows = np.zeros(net.n_compressors)
    if net.n_compressors:
        slack = set(net.slack_junctions)
        rows = [k for k, kind in enumerate(net.junction_kind) if kind != "well" and k not in slack]
        pos = {k: i for i, k in enumerate(rows)}
        b = np.zeros(net.n_junctions)
        line = ~net.pipe_is_well
        area = net.pipe_area
        np.add.at(b, fr[line], area[line] * phin[line])
        np.add.at(b, to[line], -area[line] * phout[line])
        if receipts is not None:
            np.add.at(b, net.receipt_junction, -np.asarray(receipts, dtype=float) / sc.f0)
        if deliveries is not None:
            np.add.at(b, net.delivery_junction, np.asarray(deliveries, dtype=float) / sc.f0)
        if S:
            np.add.at(b, net.storage_junction, f_wh)
        A = sp.lil_matrix((len(rows), net.n_compressors))
        for c in range(net.n_compressors):
            if int(net.comp_from[c]) in pos:
                A[pos[int(net.comp_from[c])], c] += 1.0
            if int(net.comp_to[c]) in pos:
                A[pos[int(net.comp_to[c])], c] -= 1.0
        flows = lsqr(A.tocsr(), -b[rows], atol=1e-14, btol=1e-14)[0]

    return SimulationState(
        density=rho, flux_plus=php, flux_minus=phm, flux_in=phin, flux_out=phout, compressor_flow=flows,
        storage_ratio=s_ratio, storage_flow=f_wh.copy(), wellhead_flow=f_wh, bottomhole_flow=f_bh,
        reservoir_density=res,
    )


def _guess_state(net: AugmentedNetwork, controls: dict) -> SimulationState:
    """A rough state for starting the steady solve: uniform pressure, static wells, no flow."""
    model = net.model
    rho_ref = float(np.mean(controls["slack_density"])) if len(controls["slack_density"]) else 1.0
    res = np.array([s.initial_mass / s.reservoir_volume for s in model.storages]) / net.scales.rho0
    dens = {j.id: rho_ref * net.scales.rho0 for j in model.junctions}
    for i, k in enumerate(net.slack_junctions):
        dens[net.junction_ids[k]] = controls["slack_density"][i] * net.scales.rho0
    state = project_initial_state(net, dens, reservoir_density=res * net.scales.rho0)
    zeros_p = np.zeros(net.n_pipes)
    state.flux_plus, state.flux_minus, state.flux_in, state.flux_out = zeros_p, zeros_p.copy(), zeros_p.copy(), zeros_p.copy()
    state.compressor_flow = np.zeros(net.n_compressors)
    state.storage_flow = np.zeros(net.n_storages)
    state.wellhead_flow = np.zeros(net.n_storages)
    state.bottomhole_flow = np.zeros(net.n_storages)
    return state


def _continuation(system: _StepSystem, state: SimulationState, start: dict, target: dict, tol: float,
                  max_newton: int, t_hours: float) -> SimulationState:
    """Track the solution while the controls move linearly from ``start`` to ``target``."""
    lam, step = 0.0, 1.0
    while lam < 1.0:
        trial = min(1.0, lam + step)
        ctl = {k: start[k] + trial * (target[k] - start[k]) for k in target}
        params = system.parameters(state, ctl)
        try:
            u, _ = system.solve(system.pack(state), params, tol, max_newton, 0, t_hours)
        except SimulationError:
            step /= 4.0
            if step < 1e-6:
                raise
            continue
        state = system.unpack(np.concatenate([u, params]))
        lam = trial
        step *= 2.0
    return state


def steady_state(net: AugmentedNetwork, controls: ControlSchedule, t_hours: float = 0.0,
                 storage_control: str = "ratio", tol: float = 1e-10, max_newton: int = 50) -> SimulationState:
    """Steady network state under the controls in force at ``t_hours``; reservoirs at their initial inventory.

    The solve starts from the network at rest (no transfers, unit ratios,
    idle storage) and moves the controls to their targets by continuation.
    """
    if storage_control not in STORAGE_CONTROLS:
        raise ValueError(f"storage_control must be one of {STORAGE_CONTROLS}, got {storage_control!r}")
    aligned = controls.aligned(net.model)
    target = _nd_controls(net, aligned, controls.column(t_hours))
    state = _guess_state(net, target)
    rest = dict(target, compressor_ratio=np.ones(net.n_compressors), storage_flow=np.zeros(net.n_storages),
                receipt_flow=np.zeros(net.n_receipts), delivery_flow=np.zeros(net.n_deliveries))
    flow_target = target if storage_control == "flow" else dict(target, storage_flow=np.zeros(net.n_storages))
    state = _continuation(_StepSystem(net, None, "flow"), state, rest, flow_target, tol, max_newton, t_hours)
    if storage_control == "ratio" and net.n_storages:
        start = dict(target, storage_ratio=np.asarray(state.storage_ratio, dtype=float))
        state = _continuation(_StepSystem(net, None, "ratio"), state, start, target, tol, max_newton, t_hours)
    return state


def _state_from_trajectory(net: AugmentedNetwork, tr: TransientTrajectory) -> SimulationState:
    index = {jid: k for k, jid in enumerate(tr.junction_ids)}
    try:
        order = [index[j] for j in net.junction_ids]
    except KeyError as exc:
        raise ValueError(f"trajectory has no junction {exc}; it was produced on a different segmentation") from None
    dens = tr.density[order, 0]
    prev, dt = None, None
    if tr.n_times > 2 and tr.meta.get("source") == "optimizer":
        prev = tr.density[order, -2]
        dt = float(tr.times_hours[-1] - tr.times_hours[-2]) * SECONDS_PER_HOUR
    volumes = np.array([s.reservoir_volume for s in net.model.storages])
    res = tr.reservoir_mass[:, 0] / volumes if net.n_storages else None
    return project_initial_state(net, dens, prev, dt, reservoir_density=res)


def simulate(net: AugmentedNetwork, controls: ControlSchedule, initial_state=None, dt_seconds: float = 60.0,
             horizon_hours: float | None = None, sample_hours: float = 1.0, storage_control: str = "ratio",
             tol: float = 1e-10, max_newton: int = 50) -> TransientTrajectory:
    """Integrate the network forward from ``initial_state`` under ``controls``.

    ``initial_state`` may be a :class:`SimulationState`, a trajectory (its
    first column is used, e.g. an optimizer solution on the same
    segmentation), densities accepted by :func:`project_initial_state`, or
    ``None`` for the steady state under the controls at time zero. States
    are recorded every ``sample_hours``.
    """
    if storage_control not in STORAGE_CONTROLS:
        raise ValueError(f"storage_control must be one of {STORAGE_CONTROLS}, got {storage_control!r}")
    if not dt_seconds > 0:
        raise ValueError("dt_seconds must be positive")
    T = controls.horizon_hours if horizon_hours is None else float(horizon_hours)
    n_steps = T * SECONDS_PER_HOUR / dt_seconds
    every = sample_hours * SECONDS_PER_HOUR / dt_seconds
    if abs(n_steps - round(n_steps)) > 1e-9 or round(n_steps) < 1:
        raise ValueError(f"horizon {T} h is not a whole number of {dt_seconds} s steps")
    if abs(every - round(every)) > 1e-9 or round(every) < 1:
        raise ValueError(f"sample interval {sample_hours} h is not a whole number of {dt_seconds} s steps")
    n_steps, every = int(round(n_steps)), int(round(every))
    model, sc = net.model, net.scales

    warnings = controls.check_bounds(model, storage_control)
    for note in warnings:
        log.warning("control out of bounds: %s", note)
    aligned = controls.aligned(model)

    if initial_state is None:
        state = steady_state(net, controls, 0.0, storage_control, tol)
    elif isinstance(initial_state, SimulationState):
        state = initial_state
    elif isinstance(initial_state, TransientTrajectory):
        state = _state_from_trajectory(net, initial_state)
    else:
        state = project_initial_state(net, initial_state)

    system = _StepSystem(net, dt_seconds / sc.t0, storage_control)
    ctl0 = _nd_controls(net, aligned, controls.column(0.0))
    layers = [(0.0, state, ctl0)]
    u = system.pack(state)
    newton_total = 0
    for n in range(1, n_steps + 1):
        t = n * dt_seconds / SECONDS_PER_HOUR
        ctl = _nd_controls(net, aligned, controls.column(t))
        params = system.parameters(state, ctl)
        u, its = system.solve(u, params, tol, max_newton, n, t)
        newton_total += its
        state = system.unpack(np.concatenate([u, params]))
        if n % every == 0:
            layers.append((t, state, ctl))
    tr = _to_trajectory(net, layers)
    tr.meta.update({"source": "simulator", "dt_seconds": dt_seconds, "storage_control": storage_control,
                    "steps": n_steps, "newton_iterations": newton_total, "warnings": warnings})
    for i, s in enumerate(model.storages):
        m = tr.reservoir_mass[i]
        if np.any(m < s.mass_min * (1 - 1e-9)) or np.any(m > s.mass_max * (1 + 1e-9)):
            note = f"storage {s.id}: reservoir mass leaves [{s.mass_min:.4g}, {s.mass_max:.4g}] kg"
            log.warning(note)
            tr.meta["warnings"].append(note)
    return tr


def _to_trajectory(net: AugmentedNetwork, layers) -> TransientTrajectory:
    model, sc, gas = net.model, net.scales, net.model.params
    f0, rho0 = sc.f0, sc.rho0
    times = np.array([t for t, _, _ in layers])

    def stack(fn, rows):
        return np.array([fn(st, c) for _, st, c in layers]).reshape(len(layers), rows).T

    J, P, C, S = net.n_junctions, net.n_pipes, net.n_compressors, net.n_storages
    dens = stack(lambda st, c: st.density, J) * rho0
    phin = stack(lambda st, c: st.flux_in, P) * sc.phi0
    phout = stack(lambda st, c: st.flux_out, P) * sc.phi0
    area = net.pipe_area[:, None]
    linepack = area * net.pipe_length[:, None] * 0.5 * (dens[net.pipe_from] + dens[net.pipe_to])
    alpha = stack(lambda st, c: c["compressor_ratio"], C)
    cflow = stack(lambda st, c: st.compressor_flow, C) * f0
    power = np.zeros_like(cflow)
    if C:
        power = compressor_work(alpha, gas.gamma, gas.gas_gravity, gas.temperature) * cflow
    s_flow = stack(lambda st, c: st.storage_flow, S) * f0
    volumes = np.array([s.reservoir_volume for s in model.storages]).reshape(S, 1)
    res = stack(lambda st, c: st.reservoir_density, S) * rho0
    deliveries = stack(lambda st, c: c["delivery_flow"], net.n_deliveries) * f0
    receipts = stack(lambda st, c: c["receipt_flow"], net.n_receipts) * f0

    # gas drawn from each slack junction
    injection = {}
    for k in net.slack_junctions:
        jid = net.junction_ids[k]
        inj = np.zeros(len(times))
        line = ~net.pipe_is_well
        out_p = line & (net.pipe_from == k)
        in_p = line & (net.pipe_to == k)
        inj += (area[out_p] * phin[out_p]).sum(axis=0) - (area[in_p] * phout[in_p]).sum(axis=0)
        if C:
            inj += cflow[net.comp_from == k].sum(axis=0) - cflow[net.comp_to == k].sum(axis=0)
        inj += deliveries[net.delivery_junction == k].sum(axis=0)
        if S:
            inj += s_flow[net.storage_junction == k].sum(axis=0)
        here = np.flatnonzero(net.receipt_junction == k)
        if here.size:
            receipts[here] = 0.0
            receipts[here[0]] = inj
        injection[jid] = inj

    nominations = np.array([d.flow_max(times % gas.horizon_hours) for d in model.deliveries]).reshape(
        net.n_deliveries, len(times))
    return TransientTrajectory(
        times_hours=times,
        junction_ids=net.junction_ids,
        junction_kind=net.junction_kind,
        pressure=dens * sc.a2,
        density=dens,
        pipe_ids=net.pipe_ids,
        pipe_parent=net.pipe_parent,
        pipe_is_well=np.asarray(net.pipe_is_well),
        flux_in=phin,
        flux_out=phout,
        flow_in=phin * area,
        flow_out=phout * area,
        linepack=linepack,
        compressor_ids=tuple(c.id for c in model.compressors),
        compressor_ratio=alpha,
        compressor_flow=cflow,
        compressor_power=power,
        storage_ids=tuple(s.id for s in model.storages),
        storage_flow=s_flow,
        storage_ratio=stack(lambda st, c: st.storage_ratio, S),
        wellhead_pressure=dens[net.wellhead] * sc.a2 if S else None,
        bottomhole_flow=stack(lambda st, c: st.bottomhole_flow, S) * f0,
        reservoir_mass=res * volumes,
        reservoir_pressure=res * sc.a2,
        receipt_ids=tuple(r.id for r in model.receipts),
        receipt_flow=receipts,
        delivery_ids=tuple(d.id for d in model.deliveries),
        delivery_flow=deliveries,
        delivery_nomination=nominations,
        slack_injection=injection,
        meta={},
    )
