"""Transient gas pipeline network optimization with underground storage."""

__version__ = "0.1.0"

from .analysis import max_withdrawal, mesh_study, storage_curve, synthetic_network
from .ipm import SolverOptions, SolverSolution, solve
from .network import (
    AugmentedNetwork,
    NetworkError,
    NetworkModel,
    load_network,
    parse_network,
    segment_network,
    validate,
)
from .nondim import ScaleSet
from .simulator import ControlSchedule, SimulationError, project_initial_state, simulate, steady_state
from .trajectory import TransientTrajectory
from .transcription import NlpProblem, TimeGrid, build_nlp, extract_solution, objective_breakdown
