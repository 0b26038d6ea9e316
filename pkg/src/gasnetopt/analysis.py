"""Studies built on the optimizer: mesh refinement, storage deliverability and synthetic networks."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .ipm import SolverOptions, solve
from .network import AugmentedNetwork, NetworkModel, parse_network, segment_network
from .nondim import PSI_TO_PA
from .physics import steady_outlet_density
from .transcription import TimeGrid, build_nlp, extract_solution

log = logging.getLogger(__name__)

DEFAULT_MESH_KM = (1.0, 2.5, 5.0, 7.5, 10.0)
# Mesh errors are small differences between optima; the default solver
# tolerance would swamp them where the objective is flat.
MESH_STUDY_TOL = 1e-9


# --------------------------------------------------------------------------- mesh study
def mean_relative_error(values, reference, weights=None) -> float:
    """Time-average of ``|values - reference| / |reference|``."""
    values = np.asarray(values, dtype=float)
    reference = np.asarray(reference, dtype=float)
    w = np.ones_like(reference) if weights is None else np.asarray(weights, dtype=float)
    denom = np.abs(reference)
    if np.any(denom == 0):
        raise ValueError("reference series has zeros; relative error undefined")
    return float(np.sum(w * np.abs(values - reference) / denom) / np.sum(w))


@dataclass
class MeshRow:
    delta_km: float
    storage_error: float
    pressure_error: float
    status: str
    iterations: int
    seconds: float


@dataclass
class MeshStudy:
    reference_km: float
    storage_id: str
    junction_id: str
    rows: list = field(default_factory=list)
    reference_status: str = ""

    def table(self) -> list[dict]:
        return [vars(r).copy() for r in self.rows]


class MeshStudyError(RuntimeError):
    def __init__(self, message: str, partial: MeshStudy):
        super().__init__(message)
        self.partial = partial


def _solve_at(model: NetworkModel, delta_km: float, grid: TimeGrid, kappa: float, options: SolverOptions):
    net = segment_network(model, delta_km * 1000.0)
    problem = build_nlp(net, grid, kappa)
    sol = solve(problem, options)
    return net, sol, extract_solution(net, grid, sol.x)


def mesh_study(model: NetworkModel, deltas_km=DEFAULT_MESH_KM, reference_km: float = 0.5,
               storage_id: str | None = None, junction_id: str | None = None, grid: TimeGrid | None = None,
               kappa: float = 0.95, options: SolverOptions | None = None) -> MeshStudy:
    """Storage-flow and junction-pressure errors of coarse meshes against a fine reference.

    Errors are averaged over the time nodes of the horizon. The junction
    defaults to the one hosting the storage. A failed solve stops the study
    and raises :class:`MeshStudyError` carrying the rows computed so far.
    """
    if not model.storages:
        raise ValueError("mesh study needs a network with storage")
    st = model.storages[0] if storage_id is None else next(s for s in model.storages if s.id == storage_id)
    junction_id = junction_id or st.junction
    grid = grid or TimeGrid(model.params.horizon_hours)
    options = options or SolverOptions(tol=MESH_STUDY_TOL, max_iter=1000)
    N = grid.n_nodes
    study = MeshStudy(reference_km, st.id, junction_id)

    _, ref_sol, ref = _solve_at(model, reference_km, grid, kappa, options)
    study.reference_status = ref_sol.status
    if not ref_sol.success:
        raise MeshStudyError(f"reference mesh {reference_km} km did not solve: {ref_sol.status}", study)
    fs_ref = ref.storage(st.id)[:N]
    p_ref = ref.junction(junction_id)[:N]
    for delta in deltas_km:
        t0 = time.perf_counter()
        if delta == reference_km:
            sol, tr = ref_sol, ref
        else:
            _, sol, tr = _solve_at(model, delta, grid, kappa, options)
        row = MeshRow(float(delta), math.nan, math.nan, sol.status, sol.iterations, time.perf_counter() - t0)
        if sol.success:
            row.storage_error = mean_relative_error(tr.storage(st.id)[:N], fs_ref, grid.weights_hours)
            row.pressure_error = mean_relative_error(tr.junction(junction_id)[:N], p_ref, grid.weights_hours)
        study.rows.append(row)
        log.info("mesh %.2f km: E_s %.3e E_p %.3e (%s, %d it, %.1f s)", delta, row.storage_error,
                 row.pressure_error, sol.status, sol.iterations, row.seconds)
        if not sol.success:
            raise MeshStudyError(f"mesh {delta} km did not solve: {sol.status}", study)
    return study


# ----------------------------------------------------------------- storage deliverability
@dataclass
class StorageCurve:
    storage_id: str
    wellhead_pressure: float
    reservoir_pressure: np.ndarray
    withdrawal: np.ndarray
    withdrawal_capped: np.ndarray
    feasible: np.ndarray
    threshold_pressure: float

    def table(self) -> list[dict]:
        return [
            {
                "reservoir_pressure_pa": float(p),
                "reservoir_pressure_psi": float(p / PSI_TO_PA),
                "max_withdrawal_kg_s": float(w),
                "max_withdrawal_capped_kg_s": float(c),
                "feasible": bool(f),
            }
            for p, w, c, f in zip(self.reservoir_pressure, self.withdrawal, self.withdrawal_capped, self.feasible)
        ]


def _well_bottom_density(net: AugmentedNetwork, chain, rho_top: float, flux: float) -> float:
    rho = rho_top
    for p in chain:
        rho = float(steady_outlet_density(rho, flux, net.pipe_length[p], net.pipe_friction[p],
                                          net.pipe_diameter[p], net.pipe_beta[p]))
    return rho


def max_withdrawal(net: AugmentedNetwork, storage_id: str, reservoir_pressure: float,
                   wellhead_pressure: float | None = None) -> float:
    """Largest steady withdrawal (kg/s) through the well with the wellhead held at ``wellhead_pressure``.

    Returns 0 when the reservoir cannot lift gas against the static column.
    """
    s = [st.id for st in net.model.storages].index(storage_id)
    st = net.model.storages[s]
    sc = net.scales
    p_wh = st.wellhead_p_min if wellhead_pressure is None else wellhead_pressure
    rho_wh = p_wh / sc.a2 / sc.rho0
    rho_res = reservoir_pressure / sc.a2 / sc.rho0
    chain = net.well_chains[storage_id]

    def gap(flux):
        return _well_bottom_density(net, chain, rho_wh, flux) - rho_res

    if gap(0.0) >= 0.0:
        return 0.0
    lo = -1e-3
    while gap(lo) < 0.0:
        lo *= 2.0
        if lo < -1e6:
            raise RuntimeError("withdrawal bracket search diverged")
    flux = brentq(gap, lo, 0.0, xtol=1e-15, rtol=1e-13)
    return float(-flux * st.well_area * sc.phi0)


def storage_curve(model: NetworkModel | AugmentedNetwork, storage_id: str | None = None, samples: int = 25,
                  p_min: float | None = None, p_max: float | None = None,
                  wellhead_pressure: float | None = None, delta_km: float = 10.0) -> StorageCurve:
    """Maximal steady withdrawal over reservoir pressures.

    The pressure range defaults to the reservoir pressures at minimum and
    maximum inventory; the wellhead sits at its lower pressure limit. The
    capped column additionally applies the storage flow limit.
    """
    net = model if isinstance(model, AugmentedNetwork) else segment_network(model, delta_km * 1000.0)
    if not net.model.storages:
        raise ValueError("network has no storage")
    st = net.model.storages[0] if storage_id is None else next(s for s in net.model.storages if s.id == storage_id)
    a2 = net.scales.a2
    lo = st.mass_min / st.reservoir_volume * a2 if p_min is None else p_min
    hi = st.mass_max / st.reservoir_volume * a2 if p_max is None else p_max
    if samples < 2 or not hi > lo:
        raise ValueError("need at least two samples over an increasing pressure range")
    p_wh = st.wellhead_p_min if wellhead_pressure is None else wellhead_pressure
    pressures = np.linspace(lo, hi, samples)
    w = np.array([max_withdrawal(net, st.id, p, p_wh) for p in pressures])
    threshold = _well_bottom_density(net, net.well_chains[st.id], p_wh / a2 / net.scales.rho0, 0.0)
    return StorageCurve(
        storage_id=st.id,
        wellhead_pressure=p_wh,
        reservoir_pressure=pressures,
        withdrawal=w,
        withdrawal_capped=np.minimum(w, st.flow_max),
        feasible=w > 0,
        threshold_pressure=threshold * net.scales.rho0 * a2,
    )


# ------------------------------------------------------------------- synthetic network
def _shape(v: float) -> list:
    return [[0.0, round(0.45 * v, 4)], [5.0, round(v, 4)], [22.0, round(0.45 * v, 4)]]


def synthetic_network(n_junctions: int = 506, n_compressors: int = 20, n_storages: int = 4,
                      n_transfers: int = 196, total_length_km: float = 3490.0, seed: int = 0,
                      loops: int | None = None) -> dict:
    """A deterministic tree-plus-loops network document with the requested entity counts.

    Junction ``j0`` is the slack supply. Junctions attach to uniformly chosen
    earlier junctions, which keeps paths from the supply short. Compressors
    replace the tree edges feeding the largest subtrees and push gas away
    from the supply. Pipe diameters grow with the load they carry, lengths
    are drawn at random and rescaled to the requested total, and a few extra
    pipes close loops. About one transfer point in twenty is a receipt (the
    first one at the slack junction); the rest are deliveries with a daytime
    peak. All parameter distributions are our own choices.
    """
    if n_junctions < 2 or n_compressors < 0 or n_storages < 0 or n_transfers < 1:
        raise ValueError("need at least two junctions and one transfer point")
    if n_compressors > n_junctions - 2:
        raise ValueError("too many compressors for the number of junctions")
    if n_storages > n_junctions - 1:
        raise ValueError("too many storages for the number of junctions")
    rng = np.random.default_rng(seed)
    J = n_junctions
    parent = np.zeros(J, dtype=int)
    for k in range(1, J):
        parent[k] = rng.integers(0, k)
    subtree = np.ones(J, dtype=int)
    for k in range(J - 1, 0, -1):
        subtree[parent[k]] += subtree[k]
    depth = np.zeros(J, dtype=int)
    for k in range(1, J):
        depth[k] = depth[parent[k]] + 1

    edges = list(range(1, J))  # edge k joins parent[k] -> k
    # the first edge out of the supply stays a pipe so the slack is not pinned by a compressor
    first_child = min(k for k in edges if parent[k] == 0)
    ranked = sorted((k for k in edges if k != first_child), key=lambda k: (-subtree[k], k))
    comp_edges = set(ranked[:n_compressors])
    pipe_edges = [k for k in edges if k not in comp_edges]
    if loops is None:
        loops = max(0, J // 50)
    extra = []
    tries = 0
    while len(extra) < loops and tries < 100 * (loops + 1):
        tries += 1
        a, b = sorted(int(v) for v in rng.integers(1, J, size=2))
        if a == b or parent[b] == a or parent[a] == b or abs(depth[a] - depth[b]) > 1:
            continue
        if (a, b) in extra:
            continue
        extra.append((a, b))

    n_pipes = len(pipe_edges) + len(extra)
    raw = rng.uniform(0.3, 1.7, size=n_pipes)
    lengths = raw / raw.sum() * total_length_km * 1000.0
    lengths = np.round(lengths, 1)
    lengths[-1] = round(total_length_km * 1000.0 - lengths[:-1].sum(), 1)

    junctions = [{"id": "j0", "p_min": {"value": 3, "unit": "MPa"}, "p_max": {"value": 6, "unit": "MPa"},
                  "slack": True, "slack_pressure": {"value": 5, "unit": "MPa"}}]
    junctions += [{"id": f"j{k}", "p_min": {"value": 3, "unit": "MPa"}, "p_max": {"value": 6, "unit": "MPa"}}
                  for k in range(1, J)]
    pipes = []
    for i, k in enumerate(pipe_edges):
        diameter = round(float(np.clip(0.3 + 0.6 * math.sqrt(subtree[k] / J), 0.3, 0.9)), 3)
        pipes.append({"id": f"p{i + 1}", "from": f"j{parent[k]}", "to": f"j{k}", "length": float(lengths[i]),
                      "diameter": diameter, "friction_factor": 0.01})
    for i, (a, b) in enumerate(extra):
        pipes.append({"id": f"p{len(pipe_edges) + i + 1}", "from": f"j{a}", "to": f"j{b}",
                      "length": float(lengths[len(pipe_edges) + i]), "diameter": 0.3, "friction_factor": 0.01})
    compressors = [{"id": f"c{i + 1}", "from": f"j{parent[k]}", "to": f"j{k}", "ratio_max": 1.6,
                    "flow_max": 1000.0, "power_max": 5.0e7, "type": "unidirectional"}
                   for i, k in enumerate(sorted(comp_edges))]

    hosts = rng.choice(np.arange(1, J), size=n_storages, replace=False) if n_storages else []
    storages = [{"id": f"s{i + 1}", "junction": f"j{int(h)}", "reservoir_volume": 9.1e6, "mass_min": 3.5e8,
                 "mass_max": 6.2e8, "initial_mass": 4.96e8, "well_length": 1500.0, "well_diameter": 0.4,
                 "well_friction_factor": 0.015, "ratio_max": 2.0, "flow_max": 100.0,
                 "wellhead_p_min": {"value": 250, "unit": "psi"}, "wellhead_p_max": {"value": 1500, "unit": "psi"}}
                for i, h in enumerate(hosts)]

    n_receipts = max(1, int(round(n_transfers / 20)))
    n_deliveries = n_transfers - n_receipts
    receipt_sites = [0] + [int(v) for v in rng.integers(1, J, size=n_receipts - 1)]
    receipts = []
    for i, site in enumerate(receipt_sites):
        fmax = 2000.0 if i == 0 else round(float(rng.uniform(5.0, 20.0)), 3)
        price = round(float(rng.uniform(-1.5, -1.0)), 4)
        receipts.append({"id": f"r{i + 1}", "junction": f"j{site}", "flow_max": fmax, "price": price})
    leaves = np.flatnonzero(subtree == 1)
    pool = leaves if len(leaves) >= 1 else np.arange(1, J)
    delivery_sites = rng.choice(pool, size=n_deliveries, replace=n_deliveries > len(pool))
    deliveries = []
    for i, site in enumerate(delivery_sites):
        v = float(rng.uniform(0.3, 2.0))
        price = round(float(rng.uniform(2.0, 5.0)), 4)
        deliveries.append({"id": f"d{i + 1}", "junction": f"j{int(site)}", "flow_max": _shape(v), "price": price})

    return {
        "params": {"horizon_hours": 24, "sound_speed": 371.66, "nominal_pressure": 4.0e6},
        "junctions": junctions,
        "pipes": pipes,
        "compressors": compressors,
        "storages": storages,
        "receipts": receipts,
        "deliveries": deliveries,
        "meta": {"generator": "synthetic_network", "seed": seed, "total_length_km": total_length_km},
    }


def synthetic_model(**kwargs) -> NetworkModel:
    return parse_network(synthetic_network(**kwargs))
