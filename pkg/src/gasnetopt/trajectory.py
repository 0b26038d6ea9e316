"""Physical-unit time series produced by the optimizer and the simulator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class TransientTrajectory:
    """Time-indexed states in SI units.

    Arrays are shaped ``(entities, times)``. Pipe arrays cover the augmented
    sub-pipes (wells included) so linepack sums are complete; ``pipe_parent``
    maps each back to its network pipe or storage.
    """

    times_hours: np.ndarray
    junction_ids: tuple
    junction_kind: tuple
    pressure: np.ndarray
    density: np.ndarray
    pipe_ids: tuple
    pipe_parent: tuple
    pipe_is_well: np.ndarray
    flux_in: np.ndarray
    flux_out: np.ndarray
    flow_in: np.ndarray
    flow_out: np.ndarray
    linepack: np.ndarray
    compressor_ids: tuple = ()
    compressor_ratio: np.ndarray = None
    compressor_flow: np.ndarray = None
    compressor_power: np.ndarray = None
    storage_ids: tuple = ()
    storage_flow: np.ndarray = None
    storage_ratio: np.ndarray = None
    wellhead_pressure: np.ndarray = None
    bottomhole_flow: np.ndarray = None
    reservoir_mass: np.ndarray = None
    reservoir_pressure: np.ndarray = None
    receipt_ids: tuple = ()
    receipt_flow: np.ndarray = None
    delivery_ids: tuple = ()
    delivery_flow: np.ndarray = None
    delivery_nomination: np.ndarray = None
    slack_injection: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        def fill(name, rows):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros((rows, len(self.times_hours))))

        for name in ("compressor_ratio", "compressor_flow", "compressor_power"):
            fill(name, len(self.compressor_ids))
        for name in ("storage_flow", "storage_ratio", "wellhead_pressure", "bottomhole_flow",
                     "reservoir_mass", "reservoir_pressure"):
            fill(name, len(self.storage_ids))
        fill("receipt_flow", len(self.receipt_ids))
        fill("delivery_flow", len(self.delivery_ids))
        fill("delivery_nomination", len(self.delivery_ids))

    @property
    def n_times(self) -> int:
        return len(self.times_hours)

    def total_linepack(self) -> np.ndarray:
        return self.linepack.sum(axis=0)

    def total_reservoir_mass(self) -> np.ndarray:
        return self.reservoir_mass.sum(axis=0)

    def junction(self, jid: str, what: str = "pressure") -> np.ndarray:
        return getattr(self, what)[self.junction_ids.index(jid)]

    def storage(self, sid: str, what: str = "storage_flow") -> np.ndarray:
        return getattr(self, what)[self.storage_ids.index(sid)]

    def delivery(self, did: str) -> np.ndarray:
        return self.delivery_flow[self.delivery_ids.index(did)]

    def receipt(self, rid: str) -> np.ndarray:
        return self.receipt_flow[self.receipt_ids.index(rid)]

    def pipe_endpoint_flows(self, parent: str):
        """``(inflow, outflow)`` in kg/s at the two ends of a network pipe."""
        idx = [k for k, p in enumerate(self.pipe_parent) if p == parent and not self.pipe_is_well[k]]
        if not idx:
            raise KeyError(parent)
        return self.flow_in[idx[0]], self.flow_out[idx[-1]]

    def curtailment(self) -> np.ndarray:
        return np.maximum(self.delivery_nomination - self.delivery_flow, 0.0)

    def sample(self, hours) -> "TransientTrajectory":
        """Subset of time points nearest to ``hours``."""
        hours = np.atleast_1d(np.asarray(hours, dtype=float))
        idx = np.array([int(np.argmin(np.abs(self.times_hours - h))) for h in hours])
        out = {}
        for name, value in vars(self).items():
            if isinstance(value, np.ndarray) and value.ndim == 2 and value.shape[1] == self.n_times:
                out[name] = value[:, idx]
            elif name == "times_hours":
                out[name] = value[idx]
            elif name == "slack_injection":
                out[name] = {k: np.asarray(v)[idx] for k, v in value.items()}
            else:
                out[name] = value
        return TransientTrajectory(**out)
