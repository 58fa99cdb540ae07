"""Slack-free Lagrangian QUBO formulations for MDKP, TSP and MIS."""

from .errors import (
    CapacityError,
    InvalidInstanceError,
    MetricError,
    ParseError,
    SlackfreeError,
    SolverError,
)
from .instances import MdkpInstance, MisInstance, TspInstance, load_instance
from .relaxation import Multipliers, Relaxation
from .dualopt import MethodConfig, StepSchedule, run_dual_optimization
from .qubo import Qubo, qubit_count
from .solvers import SolveBudget, get_backend
from .bench import RunRecord, SuiteConfig, run_pipeline, run_suite

__version__ = "0.1.0"
