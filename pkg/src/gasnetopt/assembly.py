"""Equation rows shared by the optimizer transcription and the simulator.

Each builder appends rows to a :class:`~gasnetopt.terms.TermSystem`. Index
arguments are integer arrays of shape ``(entities, nodes)`` pointing into
the system's variable vector; the caller decides whether an index refers to
an unknown or to a parameter held fixed (a previous time layer or a
control).
"""

from __future__ import annotations

import numpy as np

from .network import AugmentedNetwork
from .terms import TermSystem


def pipe_rows(S: TermSystem, net: AugmentedNetwork, nodes: int, rho, rho_prev, php, phm, phin, phout,
              dt: float | None):
    """Mass, momentum and endpoint-flux rows for every sub-pipe.

    ``dt=None`` gives the steady form where the mass row reduces to
    ``phi- = 0``.
    """
    fr, to = net.pipe_from, net.pipe_to
    P_ids = net.pipe_ids
    r = S.add_rows("pipe_mass", P_ids, nodes)
    if dt is not None:
        c = net.pipe_length_nd[:, None] / dt
        S.linear(r, rho[fr], c)
        S.linear(r, rho_prev[fr], -c)
        S.linear(r, rho[to], c)
        S.linear(r, rho_prev[to], -c)
    S.linear(r, phm, 4.0)

    r = S.add_rows("pipe_momentum", P_ids, nodes)
    S.square(r, rho[to], np.exp(net.pipe_beta)[:, None])
    S.square(r, rho[fr], -1.0)
    S.signed_square(r, php, net.pipe_resistance[:, None])

    r = S.add_rows("flux_in_def", P_ids, nodes)
    S.linear(r, phin, 1.0)
    S.linear(r, php, -1.0)
    S.linear(r, phm, 1.0)
    r = S.add_rows("flux_out_def", P_ids, nodes)
    S.linear(r, phout, 1.0)
    S.linear(r, php, -1.0)
    S.linear(r, phm, -1.0)


def compressor_ratio_rows(S: TermSystem, net: AugmentedNetwork, nodes: int, rho, alpha):
    """``rho_discharge - alpha rho_suction``."""
    r = S.add_rows("compressor_ratio", [c.id for c in net.model.compressors], nodes)
    S.linear(r, rho[net.comp_to], 1.0)
    S.bilinear(r, alpha, rho[net.comp_from], -1.0)


def balance_rows(S: TermSystem, net: AugmentedNetwork, nodes: int, junctions, phin, phout, flow=None,
                 receipts=None, deliveries=None, storage_flow=None):
    """Mass balance at the listed augmented junctions.

    Terms attached to junctions outside ``junctions`` are skipped, which is
    how the simulator leaves slack junctions free to inject whatever the
    network draws.
    """
    junctions = list(junctions)
    r = S.add_rows("nodal_balance", [net.junction_ids[k] for k in junctions], nodes)
    jrow = np.full((net.n_junctions, nodes), -1)
    jrow[junctions] = r

    def add(at, cols, coef):
        rows = jrow[at]
        keep = rows[:, 0] >= 0
        if np.any(keep):
            c = np.broadcast_to(np.asarray(coef, dtype=float), rows.shape)
            S.linear(rows[keep], cols[keep], c[keep])

    area = net.pipe_area[:, None]
    line = ~net.pipe_is_well
    add(net.pipe_from[line], phin[line], area[line])
    add(net.pipe_to[line], phout[line], -area[line])
    if flow is not None and net.n_compressors:
        add(net.comp_from, flow, 1.0)
        add(net.comp_to, flow, -1.0)
    if receipts is not None and net.n_receipts:
        add(net.receipt_junction, receipts, -1.0)
    if deliveries is not None and net.n_deliveries:
        add(net.delivery_junction, deliveries, 1.0)
    if storage_flow is not None and net.n_storages:
        add(net.storage_junction, storage_flow, 1.0)
    return r


def well_rows(S: TermSystem, net: AugmentedNetwork, nodes: int, rho, phin, phout, s_ratio, s_flow, s_wh,
              s_bh, s_rho):
    """Well continuity, storage flow definitions, wellhead regulator and bottom-hole density."""
    model = net.model
    S_ids = [s.id for s in model.storages]
    internal = [(s, q) for s, sid in enumerate(S_ids) for q in range(len(net.well_chains[sid]) - 1)]
    if internal:
        r = S.add_rows("well_continuity", [f"{S_ids[s]}:w{q + 1}" for s, q in internal], nodes)
        for row, (s, q) in zip(r, internal):
            chain = net.well_chains[S_ids[s]]
            S.linear(row, phout[chain[q]], 1.0)
            S.linear(row, phin[chain[q + 1]], -1.0)
    first = np.array([net.well_chains[s][0] for s in S_ids])
    last = np.array([net.well_chains[s][-1] for s in S_ids])
    aw = np.array([st.well_area for st in model.storages])[:, None]
    r = S.add_rows("wellhead_flow_def", S_ids, nodes)
    S.linear(r, s_wh, 1.0)
    S.linear(r, phin[first], -aw)
    r = S.add_rows("bottomhole_flow_def", S_ids, nodes)
    S.linear(r, s_bh, 1.0)
    S.linear(r, phout[last], -aw)
    r = S.add_rows("storage_flow_def", S_ids, nodes)
    S.linear(r, s_flow, 1.0)
    S.linear(r, s_wh, -1.0)
    r = S.add_rows("regulator", S_ids, nodes)
    S.linear(r, rho[net.storage_junction], 1.0)
    S.bilinear(r, s_ratio, rho[net.wellhead], -1.0)
    r = S.add_rows("bottomhole_density", S_ids, nodes)
    S.linear(r, rho[net.bottomhole], 1.0)
    S.linear(r, s_rho, -1.0)


def reservoir_volumes_nd(net: AugmentedNetwork) -> np.ndarray:
    return np.array([st.reservoir_volume / net.scales.v0 for st in net.model.storages])
