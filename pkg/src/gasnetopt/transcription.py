"""Direct transcription of the periodic network control problem into a sparse NLP.

Time nodes ``k = 0 .. N-1`` sit at ``t_k = k dt``; node 0 doubles as ``t = T``
so every pipeline state is periodic by construction. Differential equations
use backward differences against node ``(k - 1) mod N``. Reservoir density is
the exception: the step ending at node 1 starts from the fixed initial
inventory, so node 0 carries the end-of-day reservoir state.

Variables are nondimensional. Equality rows come first, then inequality
rows ``g(x) <= g_ub``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import balance_rows, compressor_ratio_rows, pipe_rows, reservoir_volumes_nd, well_rows
from .network import AugmentedNetwork
from .nondim import SECONDS_PER_HOUR, STANDARD_GRAVITY
from .physics import SMOOTHING_EPS, work_coefficient, work_exponent
from .terms import Registry, TermSystem
from .trajectory import TransientTrajectory

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeGrid:
    horizon_hours: float = 24.0
    dt_hours: float = 1.0

    def __post_init__(self):
        if not (self.horizon_hours > 0 and self.dt_hours > 0):
            raise ValueError("horizon and step must be positive")
        n = self.horizon_hours / self.dt_hours
        if abs(n - round(n)) > 1e-9 or round(n) < 2:
            raise ValueError(f"horizon {self.horizon_hours} h must be >= 2 whole steps of {self.dt_hours} h")

    @property
    def n_nodes(self) -> int:
        return int(round(self.horizon_hours / self.dt_hours))

    @property
    def hours(self) -> np.ndarray:
        return np.arange(self.n_nodes) * self.dt_hours

    @property
    def prev(self) -> np.ndarray:
        return (np.arange(self.n_nodes) - 1) % self.n_nodes

    @property
    def weights_hours(self) -> np.ndarray:
        return np.full(self.n_nodes, self.dt_hours)


def counts(net: AugmentedNetwork, grid: TimeGrid) -> dict:
    """Variable and constraint counts of :func:`build_nlp` for ``net``.

    With ``J`` augmented junctions, ``P`` sub-pipes (well segments included),
    ``C`` compressors of which ``Cb`` bidirectional, ``S`` storages, ``R``
    receipts, ``D`` deliveries and ``N`` time nodes::

        n   = N (J + 4P + 3C + 5S + R + D)
        m_E = N (J + 4P + 2C + 4S)
        m_I = N (C + Cb)
    """
    N = grid.n_nodes
    J, P, C, S = net.n_junctions, net.n_pipes, net.n_compressors, net.n_storages
    R, D = net.n_receipts, net.n_deliveries
    Cb = sum(c.type == "bidirectional" for c in net.model.compressors)
    return {
        "n": N * (J + 4 * P + 3 * C + 5 * S + R + D),
        "m_eq": N * (J + 4 * P + 2 * C + 4 * S),
        "m_ineq": N * (C + Cb),
    }


class NlpProblem:
    """Sparse NLP with callback oracles.

    Constraints read ``g_lb <= g(x) <= g_ub``; the first ``m_eq`` rows are
    equalities. The Jacobian and the lower triangle of the Lagrangian
    Hessian are returned as value vectors in the order of
    :meth:`jacobian_structure` and :meth:`hessian_structure`.
    """

    def __init__(self, system: TermSystem, variables: Registry, x_lb, x_ub, g_lb, g_ub, m_eq: int,
                 x0=None, context=None):
        self.system = system
        self.variables = variables
        self.n = system.n_vars
        self.m = system.n_rows - 1
        self.m_eq = m_eq
        self.m_ineq = self.m - m_eq
        self.x_lb = np.asarray(x_lb, dtype=float)
        self.x_ub = np.asarray(x_ub, dtype=float)
        self.g_lb = np.asarray(g_lb, dtype=float)
        self.g_ub = np.asarray(g_ub, dtype=float)
        self.x0 = x0
        self.context = context or {}
        obj = system.jac_rows == self.m
        self._obj_entries = np.flatnonzero(obj)
        self._con_entries = np.flatnonzero(~obj)
        self._obj_cols = system.jac_cols[obj]
        bad = np.flatnonzero(self.x_lb > self.x_ub)
        if bad.size:
            names = ", ".join(self.variable_name(i) for i in bad[:5])
            raise ValueError(f"infeasible bounds (lb > ub) for {bad.size} variables: {names}")

    # names
    def variable_name(self, index: int) -> str:
        return self.variables.name(int(index))

    def constraint_name(self, index: int) -> str:
        return self.system.rows.name(int(index))

    def _check(self, values, what, namer):
        if not np.all(np.isfinite(values)):
            bad = np.flatnonzero(~np.isfinite(values))[:5]
            raise FloatingPointError(f"non-finite {what} at " + ", ".join(namer(i) for i in bad))
        return values

    # oracles
    def eval_f(self, x) -> float:
        return float(self._check(self.system.values(x)[-1:], "objective", lambda i: "objective")[0])

    def eval_grad_f(self, x) -> np.ndarray:
        g = np.zeros(self.n)
        g[self._obj_cols] = self.system.jacobian_values(x)[self._obj_entries]
        return self._check(g, "objective gradient", self.variable_name)

    def eval_g(self, x) -> np.ndarray:
        return self._check(self.system.values(x)[:-1], "constraint", self.constraint_name)

    def jacobian_structure(self):
        s = self.system
        return s.jac_rows[self._con_entries], s.jac_cols[self._con_entries]

    def eval_jac_g(self, x) -> np.ndarray:
        v = self.system.jacobian_values(x)[self._con_entries]
        rows = self.system.jac_rows[self._con_entries]
        return self._check(v, "Jacobian entry", lambda i: self.constraint_name(rows[i]))

    def hessian_structure(self):
        return self.system.hess_rows, self.system.hess_cols

    def eval_h(self, x, lagrange, obj_factor: float = 1.0) -> np.ndarray:
        w = np.concatenate([np.asarray(lagrange, dtype=float), [obj_factor]])
        v = self.system.hessian_values(x, w)
        return self._check(v, "Hessian entry", lambda i: self.variable_name(self.system.hess_rows[i]))

    # sparse conveniences
    def jacobian(self, x) -> sp.csr_matrix:
        r, c = self.jacobian_structure()
        return sp.csr_matrix((self.eval_jac_g(x), (r, c)), shape=(self.m, self.n))

    def hessian(self, x, lagrange, obj_factor: float = 1.0) -> sp.csr_matrix:
        w = np.concatenate([np.asarray(lagrange, dtype=float), [obj_factor]])
        return self.system.hessian(x, w)

    def initial_point(self) -> np.ndarray:
        x = np.zeros(self.n) if self.x0 is None else np.array(self.x0, dtype=float)
        return np.clip(x, self.x_lb, self.x_ub)

    def block(self, label: str) -> np.ndarray:
        b = self.variables.block(label)
        return np.arange(b.start, b.start + b.size).reshape(len(b.entities), b.nodes)


def _profile_values(profile, hours, default=0.0):
    if profile is None:
        return np.full(len(hours), default)
    return np.asarray(profile(hours), dtype=float).reshape(len(hours))


def build_nlp(net: AugmentedNetwork, grid: TimeGrid | None = None, kappa: float = 0.95,
              smoothing: bool = False) -> NlpProblem:
    """Transcribe the periodic optimal control problem on ``net``."""
    if not 0.0 <= kappa <= 1.0:
        raise ValueError(f"kappa must lie in [0, 1], got {kappa!r}")
    grid = grid or TimeGrid(net.model.params.horizon_hours)
    model, sc, gas = net.model, net.scales, net.model.params
    N = grid.n_nodes
    prev = grid.prev
    hours = grid.hours
    dt = grid.dt_hours * SECONDS_PER_HOUR / sc.t0
    f0 = sc.f0

    V = Registry()
    J_ids, P_ids = net.junction_ids, net.pipe_ids
    C_ids = [c.id for c in model.compressors]
    S_ids = [s.id for s in model.storages]
    rho = V.add("density", J_ids, N)
    php = V.add("flux_plus", P_ids, N)
    phm = V.add("flux_minus", P_ids, N)
    phin = V.add("flux_in", P_ids, N)
    phout = V.add("flux_out", P_ids, N)
    alpha = V.add("ratio", C_ids, N)
    flow = V.add("flow", C_ids, N)
    work = V.add("work", C_ids, N)
    s_ratio = V.add("storage_ratio", S_ids, N)
    s_flow = V.add("storage_flow", S_ids, N)
    s_wh = V.add("wellhead_flow", S_ids, N)
    s_bh = V.add("bottomhole_flow", S_ids, N)
    s_rho = V.add("reservoir_density", S_ids, N)
    f_r = V.add("receipt", [r.id for r in model.receipts], N)
    f_d = V.add("delivery", [d.id for d in model.deliveries], N)

    lb = np.full(V.size, -np.inf)
    ub = np.full(V.size, np.inf)
    x0 = np.zeros(V.size)

    def bound(idx, lo, hi):
        lb[idx] = np.broadcast_to(lo, idx.shape)
        ub[idx] = np.broadcast_to(hi, idx.shape)

    # ---- bounds and a physically sensible starting point
    bound(rho, net.rho_min_nd[:, None], net.rho_max_nd[:, None])
    ref = None
    for j in net.slack_junctions:
        values = _profile_values(model.junctions[j].slack_pressure, hours) / sc.a2 / sc.rho0
        bound(rho[j], values, values)
        ref = values if ref is None else ref
    ref = np.ones(N) if ref is None else ref
    x0[rho] = np.clip(ref[None, :], net.rho_min_nd[:, None], net.rho_max_nd[:, None])
    for j in net.slack_junctions:
        x0[rho[j]] = lb[rho[j]]

    fmax = net.pipe_flux_max / sc.phi0
    for blk in (php, phm, phin, phout):
        bound(blk, -fmax[:, None], fmax[:, None])

    for c, comp in enumerate(model.compressors):
        bound(alpha[c], 1.0, comp.ratio_max)
        lo = 0.0 if comp.type == "unidirectional" else -comp.flow_max / f0
        bound(flow[c], lo, comp.flow_max / f0)
    x0[alpha] = 1.0

    for s, st in enumerate(model.storages):
        bound(s_ratio[s], 1.0 / st.ratio_max, st.ratio_max)
        bound(s_flow[s], -st.flow_max / f0, st.flow_max / f0)
        V_nd = st.reservoir_volume / sc.v0
        bound(s_rho[s], st.mass_min / V_nd / sc.m0, st.mass_max / V_nd / sc.m0)
        rho_init = st.initial_mass / V_nd / sc.m0
        x0[s_rho[s]] = rho_init
        chain = net.well_chains[st.id]
        depth = np.concatenate([[0.0], np.cumsum(net.pipe_length[list(chain)])])
        total = depth[-1]
        g = gas.gravity if gas.gravity else STANDARD_GRAVITY
        nodes = [net.pipe_from[chain[0]]] + [net.pipe_to[p] for p in chain]
        for q, jn in enumerate(nodes):
            x0[rho[jn]] = rho_init * math.exp(-g * (total - depth[q]) / sc.a2)
        jn = net.storage_junction[s]
        x0[s_ratio[s]] = np.clip(x0[rho[jn]] / x0[rho[net.wellhead[s]]], 1.0 / st.ratio_max, st.ratio_max)

    for blk, items in ((f_r, model.receipts), (f_d, model.deliveries)):
        for i, t in enumerate(items):
            bound(blk[i], _profile_values(t.flow_min, hours) / f0, _profile_values(t.flow_max, hours) / f0)

    # ---- constraints
    S = TermSystem(V.size, smoothing=SMOOTHING_EPS if smoothing else None)
    rho_prev = rho[:, prev]
    pipe_rows(S, net, N, rho, rho_prev, php, phm, phin, phout, dt)
    if len(C_ids):
        compressor_ratio_rows(S, net, N, rho, alpha)
        r = S.add_rows("compressor_work", C_ids, N)
        wc = work_coefficient(gas.gamma, gas.gas_gravity, gas.temperature) / sc.w0
        S.linear(r, work, 1.0)
        S.power(r, alpha, -wc, work_exponent(gas.gamma))
        S.constant(r, np.full(r.shape, wc))

    balanced = [k for k, kind in enumerate(net.junction_kind) if kind != "well"]
    balance_rows(S, net, N, balanced, phin, phout, flow, f_r, f_d, s_flow)
    if S_ids:
        well_rows(S, net, N, rho, phin, phout, s_ratio, s_flow, s_wh, s_bh, s_rho)
        r = S.add_rows("reservoir", S_ids, N)
        vdt = reservoir_volumes_nd(net)[:, None] / dt
        S.linear(r, s_rho, vdt)
        S.linear(r, s_bh, -1.0)
        seam = np.arange(N) != 1
        S.linear(r[:, seam], s_rho[:, prev][:, seam], -vdt)
        init = np.array([st.initial_mass / st.reservoir_volume / sc.rho0 for st in model.storages])[:, None]
        S.constant(r[:, 1], -(vdt * init)[:, 0])
    m_eq = S.n_rows

    g_ub = [np.zeros(m_eq)]
    if len(C_ids):
        r = S.add_rows("compressor_power", C_ids, N)
        S.bilinear(r, work, flow, 1.0)
        g_ub.append(np.repeat([c.power_max / sc.power0 for c in model.compressors], N))
        bi = [k for k, c in enumerate(model.compressors) if c.type == "bidirectional"]
        if bi:
            r = S.add_rows("reverse_uncompressed", [C_ids[k] for k in bi], N)
            S.linear(r, flow[bi], 1.0)
            S.bilinear(r, flow[bi], alpha[bi], -1.0)
            g_ub.append(np.zeros(r.size))
    g_ub = np.concatenate(g_ub)
    g_lb = np.concatenate([np.zeros(m_eq), np.full(S.n_rows - m_eq, -np.inf)])

    # ---- objective: kappa (-J_P) + (1 - kappa) J_E
    obj = S.add_rows("objective", ["J"], 1)[0, 0]
    w = grid.weights_hours
    for blk, items in ((f_d, model.deliveries), (f_r, model.receipts)):
        for i, t in enumerate(items):
            S.linear(obj, blk[i], -kappa * _profile_values(t.price, hours) * w * f0)
    for s, st in enumerate(model.storages):
        if st.price is not None:
            S.linear(obj, s_flow[s], kappa * _profile_values(st.price, hours) * w * f0)
    if len(C_ids) and kappa < 1.0:
        S.bilinear(obj, work, flow, (1.0 - kappa) * w * sc.a2 * f0 / gas.power_unit)
    S.finalize()

    ctx = {"net": net, "grid": grid, "kappa": kappa, "smoothing": smoothing}
    prob = NlpProblem(S, V, lb, ub, g_lb, g_ub, m_eq, x0=x0, context=ctx)
    log.debug("built NLP: n=%d m_eq=%d m_ineq=%d", prob.n, prob.m_eq, prob.m_ineq)
    return prob


def objective_breakdown(problem: NlpProblem, x) -> dict:
    """``J``, economic value ``J_P`` ($) and compressor energy ``J_E`` (power_unit * h)."""
    ctx = problem.context
    net, grid, kappa = ctx["net"], ctx["grid"], ctx["kappa"]
    tr = extract_solution(net, grid, x)
    model = net.model
    N, w, hours = grid.n_nodes, grid.weights_hours, grid.hours
    jp = 0.0
    for i, d in enumerate(model.deliveries):
        jp += float(np.sum(_profile_values(d.price, hours) * tr.delivery_flow[i, :N] * w))
    for i, rcp in enumerate(model.receipts):
        jp += float(np.sum(_profile_values(rcp.price, hours) * tr.receipt_flow[i, :N] * w))
    for s, st in enumerate(model.storages):
        if st.price is not None:
            jp -= float(np.sum(_profile_values(st.price, hours) * tr.storage_flow[s, :N] * w))
    je = float(np.sum(tr.compressor_power[:, :N] * w)) / model.params.power_unit
    return {"J": kappa * (-jp) + (1 - kappa) * je, "J_P": jp, "J_E": je}


def node_values(problem: NlpProblem, x, label: str) -> np.ndarray:
    return np.asarray(x)[problem.block(label)]


def extract_solution(net: AugmentedNetwork, grid: TimeGrid, x) -> TransientTrajectory:
    """Physical time series on ``t_0 .. t_N``; node 0 provides both ends except for reservoirs."""
    model, sc = net.model, net.scales
    N = grid.n_nodes
    J, P = net.n_junctions, net.n_pipes
    C, S, R, D = net.n_compressors, net.n_storages, net.n_receipts, net.n_deliveries
    x = np.asarray(x, dtype=float)
    pos = [0]

    def take(rows):
        a = x[pos[0]: pos[0] + rows * N].reshape(rows, N)
        pos[0] += rows * N
        return np.concatenate([a, a[:, :1]], axis=1)

    rho = take(J)
    php, phm, phin, phout = take(P), take(P), take(P), take(P)
    alpha, flow, work = take(C), take(C), take(C)
    s_ratio, s_flow, s_wh, s_bh, s_rho = take(S), take(S), take(S), take(S), take(S)
    f_r, f_d = take(R), take(D)
    for s, st in enumerate(model.storages):
        s_rho[s, 0] = st.initial_mass / st.reservoir_volume / sc.rho0

    times = np.arange(N + 1) * grid.dt_hours
    dens = rho * sc.rho0
    area = net.pipe_area[:, None]
    linepack = area * net.pipe_length[:, None] * 0.5 * (dens[net.pipe_from] + dens[net.pipe_to])
    f0 = sc.f0
    nominations = np.array([_profile_values(d.flow_max, times % grid.horizon_hours) for d in model.deliveries]).reshape(D, N + 1)
    volumes = np.array([st.reservoir_volume for st in model.storages]).reshape(S, 1)
    return TransientTrajectory(
        times_hours=times,
        junction_ids=net.junction_ids,
        junction_kind=net.junction_kind,
        pressure=dens * sc.a2,
        density=dens,
        pipe_ids=net.pipe_ids,
        pipe_parent=net.pipe_parent,
        pipe_is_well=np.asarray(net.pipe_is_well),
        flux_in=phin * sc.phi0,
        flux_out=phout * sc.phi0,
        flow_in=phin * sc.phi0 * area,
        flow_out=phout * sc.phi0 * area,
        linepack=linepack,
        compressor_ids=tuple(c.id for c in model.compressors),
        compressor_ratio=alpha,
        compressor_flow=flow * f0,
        compressor_power=work * sc.w0 * flow * f0,
        storage_ids=tuple(s.id for s in model.storages),
        storage_flow=s_flow * f0,
        storage_ratio=s_ratio,
        wellhead_pressure=dens[net.wellhead] * sc.a2,
        bottomhole_flow=s_bh * f0,
        reservoir_mass=s_rho * sc.rho0 * volumes,
        reservoir_pressure=s_rho * sc.rho0 * sc.a2,
        receipt_ids=tuple(r.id for r in model.receipts),
        receipt_flow=f_r * f0,
        delivery_ids=tuple(d.id for d in model.deliveries),
        delivery_flow=f_d * f0,
        delivery_nomination=nominations,
        meta={"source": "optimizer", "dt_hours": grid.dt_hours},
    )


def period_mass_balance(net: AugmentedNetwork, grid: TimeGrid, x) -> dict:
    """Nondimensional period balance: change of stored mass vs. net intake."""
    tr = extract_solution(net, grid, x)
    m0 = net.scales.m0
    dt_s = grid.dt_hours * SECONDS_PER_HOUR
    stored = (tr.total_linepack()[-1] - tr.total_linepack()[0]
              + tr.total_reservoir_mass()[-1] - tr.total_reservoir_mass()[0]) / m0
    net_in = float(np.sum(tr.receipt_flow[:, 1:]) - np.sum(tr.delivery_flow[:, 1:])) * dt_s / m0
    return {"stored": float(stored), "net_intake": net_in, "residual": float(stored - net_in)}
