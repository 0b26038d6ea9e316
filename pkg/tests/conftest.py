import json
import time
from importlib.resources import files

import numpy as np
import pytest

from gasnetopt import TimeGrid, build_nlp, extract_solution, load_network, parse_network, segment_network
from gasnetopt.ipm import SolverOptions, solve

DATA = files("gasnetopt") / "data"


def fixture_document(name: str) -> dict:
    return json.loads((DATA / f"{name}.json").read_text())


def fixture_model(name: str):
    return load_network(DATA / f"{name}.json")


class Solved:
    """One optimizer run on a bundled network, with wall time."""

    def __init__(self, name, delta_km=10.0, grid=None, options=None, model=None):
        self.model = model or fixture_model(name)
        self.grid = grid or TimeGrid(self.model.params.horizon_hours)
        t0 = time.perf_counter()
        self.net = segment_network(self.model, delta_km * 1000.0)
        self.problem = build_nlp(self.net, self.grid)
        self.solution = solve(self.problem, options or SolverOptions())
        self.seconds = time.perf_counter() - t0
        self.trajectory = extract_solution(self.net, self.grid, self.solution.x)


_CACHE = {}


def solved(name: str) -> Solved:
    if name not in _CACHE:
        _CACHE[name] = Solved(name)
    return _CACHE[name]


@pytest.fixture(scope="session")
def baseline():
    return solved("six_junction")


@pytest.fixture(scope="session")
def with_storage():
    return solved("six_junction_storage")


@pytest.fixture(scope="session")
def lower_bound():
    return solved("six_junction_storage_lb")


def two_junction_document(length=10_000.0, diameter=0.6, friction=0.01, delivery=20.0):
    """Slack junction feeding one horizontal pipe with a constant delivery at the far end."""
    return {
        "params": {"horizon_hours": 24},
        "junctions": [
            {"id": "a", "p_min": 3e6, "p_max": 6e6, "slack": True, "slack_pressure": 4e6},
            {"id": "b", "p_min": 1e6, "p_max": 6e6},
        ],
        "pipes": [{"id": "p", "from": "a", "to": "b", "length": length, "diameter": diameter,
                   "friction_factor": friction}],
        "receipts": [{"id": "r", "junction": "a", "flow_max": 500, "price": -1}],
        "deliveries": [{"id": "d", "junction": "b", "flow_max": delivery, "flow_min": delivery, "price": 3}],
    }


@pytest.fixture
def two_junction():
    return parse_network(two_junction_document())


def rel(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))


# ---------------------------------------------------------------- acceptance report
ACCEPTANCE_LINES = []


def report(number: int, title: str, passed: bool, seconds: float, detail: str) -> str:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d} {title}: {detail} ({seconds:.1f} s)"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
