"""Network data model, document parsing and spatial discretization.

A network document is a JSON-compatible tree with the top-level keys
``params``, ``junctions``, ``pipes``, ``compressors``, ``storages``,
``receipts``, ``deliveries`` and ``time_series``. Quantities are SI unless a
pressure carries a unit tag, e.g. ``{"value": 580, "unit": "psi"}``, or
``params.pressure_unit`` sets a document-wide pressure unit. Time-varying
quantities are either constants, inline ``[[hour, value], ...]`` breakpoint
lists, or the name of an entry in ``time_series``; breakpoints are held
piecewise constant.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .nondim import (
    STANDARD_GRAVITY,
    ScaleSet,
    axial_gravity,
    beta,
    gravity_factor,
    pressure_to_pa,
)

TOP_LEVEL_KEYS = (
    "params",
    "junctions",
    "pipes",
    "compressors",
    "storages",
    "receipts",
    "deliveries",
    "time_series",
    "meta",  # free-form provenance, ignored by the parser
)
COMPRESSOR_TYPES = ("unidirectional", "bidirectional")
DEFAULT_POWER_MAX = 1.0e7


class NetworkError(ValueError):
    """Invalid network document or model; names the entity and field."""

    def __init__(self, entity: str, field_name: str, message: str):
        self.entity = entity
        self.field = field_name
        super().__init__(f"{entity}.{field_name}: {message}")


@dataclass(frozen=True)
class Profile:
    """Piecewise-constant time series given by ``(hour, value)`` breakpoints."""

    breakpoints: tuple[tuple[float, float], ...]

    @classmethod
    def constant(cls, value: float) -> "Profile":
        return cls(((0.0, float(value)),))

    def __call__(self, hours):
        t = np.asarray(hours, dtype=float)
        knots = np.array([b[0] for b in self.breakpoints])
        values = np.array([b[1] for b in self.breakpoints])
        idx = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, len(values) - 1)
        out = values[idx]
        return float(out) if out.ndim == 0 else out

    def scaled(self, factor: float) -> "Profile":
        return Profile(tuple((t, v * factor) for t, v in self.breakpoints))

    @property
    def is_constant(self) -> bool:
        return len({v for _, v in self.breakpoints}) == 1

    def to_document(self):
        if self.is_constant and self.breakpoints[0][0] == 0.0:
            return self.breakpoints[0][1]
        return [[t, v] for t, v in self.breakpoints]


@dataclass(frozen=True)
class GasParams:
    horizon_hours: float = 24.0
    sound_speed: float = 371.66
    nominal_pressure: float = 4.0e6
    nominal_length: float | None = None
    gamma: float = 1.4
    gas_gravity: float = 0.6
    temperature: float = 288.7
    gravity: float = STANDARD_GRAVITY
    power_unit: float = 1.0e6

    def scales(self) -> ScaleSet:
        return ScaleSet(self.sound_speed, self.nominal_pressure, self.nominal_length)


@dataclass(frozen=True)
class Junction:
    id: str
    p_min: float
    p_max: float
    slack: bool = False
    slack_pressure: Profile | None = None
    kind: str = "physical"


@dataclass(frozen=True)
class Pipe:
    id: str
    from_junction: str
    to_junction: str
    length: float
    diameter: float
    friction_factor: float
    inclination: float = 0.0
    flux_max: float | None = None

    @property
    def area(self) -> float:
        return math.pi * self.diameter**2 / 4.0


@dataclass(frozen=True)
class Compressor:
    id: str
    from_junction: str
    to_junction: str
    ratio_max: float
    flow_max: float
    power_max: float = DEFAULT_POWER_MAX
    type: str = "unidirectional"


@dataclass(frozen=True)
class Storage:
    id: str
    junction: str
    reservoir_volume: float
    mass_min: float
    mass_max: float
    initial_mass: float
    well_length: float
    well_diameter: float
    well_friction_factor: float
    ratio_max: float
    flow_max: float
    wellhead_p_min: float
    wellhead_p_max: float
    price: Profile | None = None

    @property
    def well_area(self) -> float:
        return math.pi * self.well_diameter**2 / 4.0


@dataclass(frozen=True)
class TransferPoint:
    id: str
    junction: str
    flow_max: Profile
    price: Profile
    flow_min: Profile | None = None


@dataclass(frozen=True)
class NetworkModel:
    junctions: tuple[Junction, ...]
    pipes: tuple[Pipe, ...] = ()
    compressors: tuple[Compressor, ...] = ()
    storages: tuple[Storage, ...] = ()
    receipts: tuple[TransferPoint, ...] = ()
    deliveries: tuple[TransferPoint, ...] = ()
    params: GasParams = field(default_factory=GasParams)

    def junction(self, jid: str) -> Junction:
        for j in self.junctions:
            if j.id == jid:
                return j
        raise KeyError(jid)

    def with_params(self, **changes) -> "NetworkModel":
        return replace(self, params=replace(self.params, **changes))


# ---------------------------------------------------------------- parsing


def _require(obj: dict, key: str, entity: str):
    if key not in obj:
        raise NetworkError(entity, key, "missing required field")
    return obj[key]


def _number(value, entity: str, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise NetworkError(entity, key, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise NetworkError(entity, key, "must be finite")
    return float(value)


def _pressure(value, entity: str, key: str, default_unit: str) -> float:
    unit = default_unit
    if isinstance(value, dict):
        unit = value.get("unit", default_unit)
        value = _require(value, "value", f"{entity}.{key}")
    try:
        return pressure_to_pa(_number(value, entity, key), unit)
    except ValueError as exc:
        if isinstance(exc, NetworkError):
            raise
        raise NetworkError(entity, key, str(exc)) from None


def _profile(value, series: dict, entity: str, key: str, horizon: float, pressure_unit=None) -> Profile:
    if isinstance(value, str):
        if value not in series:
            raise NetworkError(entity, key, f"unknown time series {value!r}")
        value = series[value]
    if isinstance(value, (int, float, dict)) and not isinstance(value, bool):
        if pressure_unit is not None:
            return Profile.constant(_pressure(value, entity, key, pressure_unit))
        return Profile.constant(_number(value, entity, key))
    if not isinstance(value, list) or not value:
        raise NetworkError(entity, key, "expected a number, series name or [[hour, value], ...]")
    points = []
    for item in value:
        if not (isinstance(item, (list, tuple)) and len(item) == 2):
            raise NetworkError(entity, key, f"bad breakpoint {item!r}")
        t = _number(item[0], entity, key)
        v = (
            _pressure(item[1], entity, key, pressure_unit)
            if pressure_unit is not None
            else _number(item[1], entity, key)
        )
        points.append((t, v))
    times = [p[0] for p in points]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise NetworkError(entity, key, "breakpoint hours must be strictly increasing")
    if times[0] > 0.0:
        raise NetworkError(entity, key, "time series must start at hour 0")
    if times[0] < 0.0 or times[-1] > horizon:
        raise NetworkError(entity, key, f"breakpoints must lie within [0, {horizon}] h")
    return Profile(tuple(points))


def _entries(doc: dict, key: str) -> list:
    entries = doc.get(key, [])
    if not isinstance(entries, list):
        raise NetworkError(key, "*", "expected a list")
    for k, e in enumerate(entries):
        if not isinstance(e, dict):
            raise NetworkError(f"{key}[{k}]", "*", "expected an object")
    return entries


def parse_network(document) -> NetworkModel:
    """Build a validated :class:`NetworkModel` from a document tree, JSON text or path."""
    if isinstance(document, Path) or (isinstance(document, str) and not document.lstrip().startswith("{")):
        document = Path(document).read_text()
    if isinstance(document, str):
        document = json.loads(document)
    if not isinstance(document, dict):
        raise NetworkError("document", "*", "expected a JSON object")
    unknown = set(document) - set(TOP_LEVEL_KEYS)
    if unknown:
        raise NetworkError("document", sorted(unknown)[0], "unknown top-level key")

    raw_params = dict(document.get("params", {}))
    punit = raw_params.pop("pressure_unit", "Pa")
    param_names = {f.name for f in fields(GasParams)}
    for key in raw_params:
        if key not in param_names:
            raise NetworkError("params", key, "unknown parameter")
    params = GasParams(
        **{
            k: (None if v is None else _pressure(v, "params", k, punit) if k == "nominal_pressure" else _number(v, "params", k))
            for k, v in raw_params.items()
        }
    )
    if params.horizon_hours <= 0:
        raise NetworkError("params", "horizon_hours", "must be positive")
    T = params.horizon_hours
    series = document.get("time_series", {})
    if not isinstance(series, dict):
        raise NetworkError("time_series", "*", "expected an object of named series")

    junctions = []
    for e in _entries(document, "junctions"):
        jid = str(_require(e, "id", "junction"))
        ent = f"junction {jid}"
        slack = bool(e.get("slack", False))
        sp = None
        if slack:
            sp = _profile(_require(e, "slack_pressure", ent), series, ent, "slack_pressure", T, punit)
        junctions.append(
            Junction(
                id=jid,
                p_min=_pressure(_require(e, "p_min", ent), ent, "p_min", punit),
                p_max=_pressure(_require(e, "p_max", ent), ent, "p_max", punit),
                slack=slack,
                slack_pressure=sp,
                kind=e.get("kind", "physical"),
            )
        )

    pipes = []
    for e in _entries(document, "pipes"):
        pid = str(_require(e, "id", "pipe"))
        ent = f"pipe {pid}"
        fm = e.get("flux_max")
        pipes.append(
            Pipe(
                id=pid,
                from_junction=str(_require(e, "from", ent)),
                to_junction=str(_require(e, "to", ent)),
                length=_number(_require(e, "length", ent), ent, "length"),
                diameter=_number(_require(e, "diameter", ent), ent, "diameter"),
                friction_factor=_number(_require(e, "friction_factor", ent), ent, "friction_factor"),
                inclination=_number(e.get("inclination", 0.0), ent, "inclination"),
                flux_max=None if fm is None else _number(fm, ent, "flux_max"),
            )
        )

    compressors = []
    for e in _entries(document, "compressors"):
        cid = str(_require(e, "id", "compressor"))
        ent = f"compressor {cid}"
        ctype = e.get("type", "unidirectional")
        if ctype not in COMPRESSOR_TYPES:
            raise NetworkError(ent, "type", f"expected one of {COMPRESSOR_TYPES}")
        compressors.append(
            Compressor(
                id=cid,
                from_junction=str(_require(e, "from", ent)),
                to_junction=str(_require(e, "to", ent)),
                ratio_max=_number(_require(e, "ratio_max", ent), ent, "ratio_max"),
                flow_max=_number(_require(e, "flow_max", ent), ent, "flow_max"),
                power_max=_number(e.get("power_max", DEFAULT_POWER_MAX), ent, "power_max"),
                type=ctype,
            )
        )

    storages = []
    for e in _entries(document, "storages"):
        sid = str(_require(e, "id", "storage"))
        ent = f"storage {sid}"
        num = lambda k: _number(_require(e, k, ent), ent, k)  # noqa: E731
        price = e.get("price")
        storages.append(
            Storage(
                id=sid,
                junction=str(_require(e, "junction", ent)),
                reservoir_volume=num("reservoir_volume"),
                mass_min=num("mass_min"),
                mass_max=num("mass_max"),
                initial_mass=num("initial_mass"),
                well_length=num("well_length"),
                well_diameter=num("well_diameter"),
                well_friction_factor=num("well_friction_factor"),
                ratio_max=num("ratio_max"),
                flow_max=num("flow_max"),
                wellhead_p_min=_pressure(_require(e, "wellhead_p_min", ent), ent, "wellhead_p_min", punit),
                wellhead_p_max=_pressure(_require(e, "wellhead_p_max", ent), ent, "wellhead_p_max", punit),
                price=None if price is None else _profile(price, series, ent, "price", T),
            )
        )

    def transfers(key, label):
        out = []
        for e in _entries(document, key):
            tid = str(_require(e, "id", label))
            ent = f"{label} {tid}"
            fmin = e.get("flow_min")
            out.append(
                TransferPoint(
                    id=tid,
                    junction=str(_require(e, "junction", ent)),
                    flow_max=_profile(_require(e, "flow_max", ent), series, ent, "flow_max", T),
                    price=_profile(_require(e, "price", ent), series, ent, "price", T),
                    flow_min=None if fmin is None else _profile(fmin, series, ent, "flow_min", T),
                )
            )
        return tuple(out)

    model = NetworkModel(
        junctions=tuple(junctions),
        pipes=tuple(pipes),
        compressors=tuple(compressors),
        storages=tuple(storages),
        receipts=transfers("receipts", "receipt"),
        deliveries=transfers("deliveries", "delivery"),
        params=params,
    )
    _check_references(model)
    return model


def load_network(path) -> NetworkModel:
    return parse_network(Path(path))


def _check_references(model: NetworkModel):
    ids = [j.id for j in model.junctions]
    seen = set()
    for jid in ids:
        if jid in seen:
            raise NetworkError(f"junction {jid}", "id", "duplicate junction id")
        seen.add(jid)
    for kind, items in (
        ("pipe", model.pipes),
        ("compressor", model.compressors),
        ("storage", model.storages),
        ("receipt", model.receipts),
        ("delivery", model.deliveries),
    ):
        item_ids = set()
        for item in items:
            if item.id in item_ids:
                raise NetworkError(f"{kind} {item.id}", "id", f"duplicate {kind} id")
            item_ids.add(item.id)
            refs = (
                (("from", item.from_junction), ("to", item.to_junction))
                if hasattr(item, "from_junction")
                else (("junction", item.junction),)
            )
            for key, ref in refs:
                if ref not in seen:
                    raise NetworkError(f"{kind} {item.id}", key, f"unknown junction {ref!r}")


def to_document(model: NetworkModel) -> dict:
    """Serialize a model back to a document tree (pressures in Pa)."""

    def prof(p):
        return None if p is None else p.to_document()

    params = {f.name: getattr(model.params, f.name) for f in fields(GasParams)}
    doc = {
        "params": params,
        "junctions": [
            {
                "id": j.id,
                "p_min": j.p_min,
                "p_max": j.p_max,
                **({"slack": True, "slack_pressure": prof(j.slack_pressure)} if j.slack else {}),
                **({"kind": j.kind} if j.kind != "physical" else {}),
            }
            for j in model.junctions
        ],
        "pipes": [
            {
                "id": p.id,
                "from": p.from_junction,
                "to": p.to_junction,
                "length": p.length,
                "diameter": p.diameter,
                "friction_factor": p.friction_factor,
                "inclination": p.inclination,
                **({"flux_max": p.flux_max} if p.flux_max is not None else {}),
            }
            for p in model.pipes
        ],
        "compressors": [
            {
                "id": c.id,
                "from": c.from_junction,
                "to": c.to_junction,
                "type": c.type,
                "ratio_max": c.ratio_max,
                "flow_max": c.flow_max,
                "power_max": c.power_max,
            }
            for c in model.compressors
        ],
        "storages": [
            {
                **{f.name: getattr(s, f.name) for f in fields(Storage) if f.name != "price"},
                **({"price": prof(s.price)} if s.price is not None else {}),
            }
            for s in model.storages
        ],
        "receipts": [],
        "deliveries": [],
        "time_series": {},
    }
    for key, items in (("receipts", model.receipts), ("deliveries", model.deliveries)):
        for t in items:
            entry = {"id": t.id, "junction": t.junction, "flow_max": prof(t.flow_max), "price": prof(t.price)}
            if t.flow_min is not None:
                entry["flow_min"] = prof(t.flow_min)
            doc[key].append(entry)
    return doc


def dump_network(model: NetworkModel, path) -> None:
    Path(path).write_text(json.dumps(to_document(model), indent=1))


# ------------------------------------------------------------- validation


def validate(model: NetworkModel) -> list[str]:
    """Return human-readable findings; an empty list means the model is usable."""
    findings = []
    T = model.params.horizon_hours
    ids = {j.id for j in model.junctions}

    def covers(p: Profile | None) -> bool:
        return p is not None and p.breakpoints[0][0] <= 0.0 and p.breakpoints[-1][0] <= T

    for j in model.junctions:
        if not j.p_min > 0:
            findings.append(f"junction {j.id}: p_min must be positive")
        if j.p_min > j.p_max:
            findings.append(f"junction {j.id}: p_min exceeds p_max")
        if j.slack and not covers(j.slack_pressure):
            findings.append(f"junction {j.id}: slack pressure profile must cover [0, T]")
    for p in model.pipes:
        if not (p.length > 0 and p.diameter > 0 and p.friction_factor > 0):
            findings.append(f"pipe {p.id}: length, diameter and friction factor must be positive")
        if abs(p.inclination) > math.pi / 2:
            findings.append(f"pipe {p.id}: inclination outside [-pi/2, pi/2]")
        if p.flux_max is not None and p.flux_max <= 0:
            findings.append(f"pipe {p.id}: flux_max must be positive")
    for c in model.compressors:
        if c.ratio_max < 1:
            findings.append(f"compressor {c.id}: ratio_max must be >= 1")
        if not (c.flow_max > 0 and c.power_max > 0):
            findings.append(f"compressor {c.id}: flow_max and power_max must be positive")
        if c.type not in COMPRESSOR_TYPES:
            findings.append(f"compressor {c.id}: unknown type {c.type!r}")
    a2 = model.params.sound_speed**2
    for s in model.storages:
        if not (0 < s.mass_min < s.mass_max):
            findings.append(f"storage {s.id}: require 0 < mass_min < mass_max")
        if s.mass_max > s.reservoir_volume * s.wellhead_p_max / a2 * (1 + 1e-9):
            findings.append(f"storage {s.id}: mass_max exceeds the reservoir capacity at the well pressure limit")
        if not (s.mass_min <= s.initial_mass <= s.mass_max):
            findings.append(f"storage {s.id}: initial mass outside [mass_min, mass_max]")
        if not (s.well_length > 0 and s.well_diameter > 0 and s.well_friction_factor > 0):
            findings.append(f"storage {s.id}: well length, diameter and friction factor must be positive")
        if not s.ratio_max > 1:
            findings.append(f"storage {s.id}: ratio_max must exceed 1")
        if not s.flow_max > 0:
            findings.append(f"storage {s.id}: flow_max must be positive")
        if not (0 < s.wellhead_p_min <= s.wellhead_p_max):
            findings.append(f"storage {s.id}: require 0 < wellhead_p_min <= wellhead_p_max")
        if s.reservoir_volume <= 0:
            findings.append(f"storage {s.id}: reservoir volume must be positive")
    for kind, items in (("receipt", model.receipts), ("delivery", model.deliveries)):
        for t in items:
            if not covers(t.flow_max) or not covers(t.price):
                findings.append(f"{kind} {t.id}: profiles must cover [0, T]")
            elif min(v for _, v in t.flow_max.breakpoints) < 0:
                findings.append(f"{kind} {t.id}: flow_max must be nonnegative")
            if t.flow_min is not None and min(v for _, v in t.flow_min.breakpoints) < 0:
                findings.append(f"{kind} {t.id}: flow_min must be nonnegative")
            prices = [v for _, v in t.price.breakpoints]
            if kind == "receipt" and max(prices) > 0:
                findings.append(f"receipt {t.id}: intake prices must be <= 0")
            if kind == "delivery" and min(prices) < 0:
                findings.append(f"delivery {t.id}: off-take prices must be >= 0")
        for t in items:
            if t.junction not in ids:
                findings.append(f"{kind} {t.id}: unknown junction {t.junction!r}")

    if not any(j.slack for j in model.junctions):
        findings.append("no slack junction")
    if not _connected(model):
        findings.append("network graph is not connected")
    return findings


def _connected(model: NetworkModel) -> bool:
    ids = [j.id for j in model.junctions]
    if not ids:
        return False
    adj = {i: set() for i in ids}
    for e in (*model.pipes, *model.compressors):
        if e.from_junction in adj and e.to_junction in adj:
            adj[e.from_junction].add(e.to_junction)
            adj[e.to_junction].add(e.from_junction)
    seen = {ids[0]}
    queue = deque([ids[0]])
    while queue:
        for nb in adj[queue.popleft()]:
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return len(seen) == len(ids)


# ----------------------------------------------------------- augmentation


@dataclass(frozen=True)
class AugmentedNetwork:
    """The network after pipe segmentation and well discretization.

    Entity attributes are numpy arrays indexed by augmented junction, sub-pipe,
    compressor, storage, receipt and delivery position. Physical values are
    kept in SI units; the ``*_nd`` arrays hold their nondimensional forms for
    ``scales``.
    """

    model: NetworkModel
    delta: float
    scales: ScaleSet
    junction_ids: tuple[str, ...]
    junction_kind: tuple[str, ...]
    junction_parent: tuple[str, ...]
    rho_min: np.ndarray
    rho_max: np.ndarray
    slack_junctions: tuple[int, ...]
    pipe_ids: tuple[str, ...]
    pipe_parent: tuple[str, ...]
    pipe_from: np.ndarray
    pipe_to: np.ndarray
    pipe_length: np.ndarray
    pipe_diameter: np.ndarray
    pipe_friction: np.ndarray
    pipe_inclination: np.ndarray
    pipe_beta: np.ndarray
    pipe_is_well: np.ndarray
    pipe_flux_max: np.ndarray
    chains: dict
    well_chains: dict
    wellhead: np.ndarray
    bottomhole: np.ndarray
    comp_from: np.ndarray
    comp_to: np.ndarray
    storage_junction: np.ndarray
    receipt_junction: np.ndarray
    delivery_junction: np.ndarray

    # sizes
    @property
    def n_junctions(self) -> int:
        return len(self.junction_ids)

    @property
    def n_pipes(self) -> int:
        return len(self.pipe_ids)

    @property
    def n_compressors(self) -> int:
        return len(self.model.compressors)

    @property
    def n_storages(self) -> int:
        return len(self.model.storages)

    @property
    def n_receipts(self) -> int:
        return len(self.model.receipts)

    @property
    def n_deliveries(self) -> int:
        return len(self.model.deliveries)

    def junction_index(self, jid: str) -> int:
        return self.junction_ids.index(jid)

    # nondimensional caches
    @property
    def pipe_area(self) -> np.ndarray:
        return np.pi * self.pipe_diameter**2 / 4.0

    @property
    def pipe_length_nd(self) -> np.ndarray:
        return self.pipe_length / self.scales.ell

    @property
    def pipe_resistance(self) -> np.ndarray:
        """Coefficient of ``phi+ |phi+|`` in the nondimensional momentum residual."""
        return self.pipe_friction * self.pipe_length / self.pipe_diameter * gravity_factor(self.pipe_beta)

    @property
    def rho_min_nd(self) -> np.ndarray:
        return self.rho_min / self.scales.rho0

    @property
    def rho_max_nd(self) -> np.ndarray:
        return self.rho_max / self.scales.rho0

    def linepack_volume(self) -> np.ndarray:
        return self.pipe_area * self.pipe_length

    def as_model(self) -> NetworkModel:
        """The augmented topology as a plain model (wells folded back into storages)."""
        m = self.model
        jpress = {j.id: j for j in m.junctions}
        a2 = self.scales.a2
        junctions = []
        for k, jid in enumerate(self.junction_ids):
            if self.junction_kind[k] == "well":
                continue
            base = jpress.get(jid)
            if base is not None:
                junctions.append(base)
            else:
                junctions.append(
                    Junction(jid, float(self.rho_min[k] * a2), float(self.rho_max[k] * a2), kind="internal")
                )
        pipes = []
        for k, pid in enumerate(self.pipe_ids):
            if self.pipe_is_well[k]:
                continue
            pipes.append(
                Pipe(
                    id=pid,
                    from_junction=self.junction_ids[self.pipe_from[k]],
                    to_junction=self.junction_ids[self.pipe_to[k]],
                    length=float(self.pipe_length[k]),
                    diameter=float(self.pipe_diameter[k]),
                    friction_factor=float(self.pipe_friction[k]),
                    inclination=float(self.pipe_inclination[k]),
                    flux_max=None if not np.isfinite(self.pipe_flux_max[k]) else float(self.pipe_flux_max[k]),
                )
            )
        return replace(m, junctions=tuple(junctions), pipes=tuple(pipes))


def _pieces(length: float, delta: float) -> int:
    return max(1, math.ceil(length / delta - 1e-9))


def segment_network(model, delta: float, scales: ScaleSet | None = None) -> AugmentedNetwork:
    """Split pipes and storage wells into equal sub-pipes of length at most ``delta`` (m)."""
    if isinstance(model, AugmentedNetwork):
        scales = scales or model.scales
        model = model.as_model()
    if not delta > 0:
        raise ValueError(f"segment length must be positive, got {delta!r}")
    p = model.params
    scales = scales or p.scales()
    a2 = scales.a2

    jid, jkind, jparent, rmin, rmax = [], [], [], [], []
    for j in model.junctions:
        jid.append(j.id)
        jkind.append(j.kind)
        jparent.append(j.id)
        rmin.append(j.p_min / a2)
        rmax.append(j.p_max / a2)
    index = {k: i for i, k in enumerate(jid)}

    cols = {k: [] for k in ("id", "parent", "from", "to", "L", "D", "lam", "inc", "well", "fmax")}
    chains = {}

    def add_pipe(pid, parent, a, b, L, D, lam, inc, well, fmax):
        cols["id"].append(pid)
        cols["parent"].append(parent)
        cols["from"].append(a)
        cols["to"].append(b)
        cols["L"].append(L)
        cols["D"].append(D)
        cols["lam"].append(lam)
        cols["inc"].append(inc)
        cols["well"].append(well)
        cols["fmax"].append(fmax)
        return len(cols["id"]) - 1

    for pipe in model.pipes:
        k = _pieces(pipe.length, delta)
        a, b = index[pipe.from_junction], index[pipe.to_junction]
        lo = min(rmin[a], rmin[b])
        hi = max(rmax[a], rmax[b])
        nodes = [a]
        for q in range(1, k):
            name = f"{pipe.id}#{q}"
            index[name] = len(jid)
            jid.append(name)
            jkind.append("internal")
            jparent.append(pipe.id)
            rmin.append(lo)
            rmax.append(hi)
            nodes.append(index[name])
        nodes.append(b)
        fmax = math.inf if pipe.flux_max is None else pipe.flux_max
        chain = []
        for q in range(k):
            pid = pipe.id if k == 1 else f"{pipe.id}/{q + 1}"
            chain.append(
                add_pipe(pid, pipe.id, nodes[q], nodes[q + 1], pipe.length / k, pipe.diameter,
                         pipe.friction_factor, pipe.inclination, False, fmax)
            )
        chains[pipe.id] = tuple(chain)

    wells, heads, bottoms = {}, [], []
    for s in model.storages:
        k = _pieces(s.well_length, delta)
        lo, hi = s.wellhead_p_min / a2, s.wellhead_p_max / a2
        nodes = []
        for q in range(k + 1):
            name = f"{s.id}:wh" if q == 0 else f"{s.id}:bh" if q == k else f"{s.id}:w{q}"
            index[name] = len(jid)
            jid.append(name)
            jkind.append("well")
            jparent.append(s.id)
            rmin.append(lo)
            rmax.append(hi)
            nodes.append(index[name])
        chain = []
        for q in range(k):
            chain.append(
                add_pipe(f"{s.id}:well/{q + 1}", s.id, nodes[q], nodes[q + 1], s.well_length / k,
                         s.well_diameter, s.well_friction_factor, -math.pi / 2, True, math.inf)
            )
        wells[s.id] = tuple(chain)
        heads.append(nodes[0])
        bottoms.append(nodes[-1])

    L = np.array(cols["L"], dtype=float)
    inc = np.array(cols["inc"], dtype=float)
    g_ax = np.array([axial_gravity(t, p.gravity) for t in inc]) if len(inc) else np.zeros(0)
    betas = np.array([beta(l, g, scales.a) for l, g in zip(L, g_ax)]) if len(L) else np.zeros(0)

    def arr(values, dtype=float):
        out = np.array(values, dtype=dtype)
        out.setflags(write=False)
        return out

    return AugmentedNetwork(
        model=model,
        delta=float(delta),
        scales=scales,
        junction_ids=tuple(jid),
        junction_kind=tuple(jkind),
        junction_parent=tuple(jparent),
        rho_min=arr(rmin),
        rho_max=arr(rmax),
        slack_junctions=tuple(i for i, j in enumerate(model.junctions) if j.slack),
        pipe_ids=tuple(cols["id"]),
        pipe_parent=tuple(cols["parent"]),
        pipe_from=arr(cols["from"], int),
        pipe_to=arr(cols["to"], int),
        pipe_length=arr(L),
        pipe_diameter=arr(cols["D"]),
        pipe_friction=arr(cols["lam"]),
        pipe_inclination=arr(inc),
        pipe_beta=arr(betas),
        pipe_is_well=arr(cols["well"], bool),
        pipe_flux_max=arr(cols["fmax"]),
        chains=chains,
        well_chains=wells,
        wellhead=arr(heads, int),
        bottomhole=arr(bottoms, int),
        comp_from=arr([index[c.from_junction] for c in model.compressors], int),
        comp_to=arr([index[c.to_junction] for c in model.compressors], int),
        storage_junction=arr([index[s.junction] for s in model.storages], int),
        receipt_junction=arr([index[r.junction] for r in model.receipts], int),
        delivery_junction=arr([index[d.junction] for d in model.deliveries], int),
    )
