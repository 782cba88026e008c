"""Probabilistic tube-based stochastic MPC for linear systems with Gaussian noise."""

from .config import ExperimentConfig
from .controller import INIT_CASES, INIT_MODES, VARIANTS, OcpSolution, TubeSMPC
from .exceptions import ConfigError, EmptyTightening, StmpcError
from .reachability import ChanceSpec, TubeSchedule, build_tube_schedule
from .sets import HPolytope, Zonotope, zonotope_to_hpoly
from .simulation import Metrics, SimConfig, SimRecord, monte_carlo, run_closed_loop
from .synthesis import CostWeights, Synthesis, SystemModel, lqr_gain
from .tightening import TightenedSchedule, build_tightened_schedule, check_axioms

__version__ = "0.1.0"

__all__ = [
    "ChanceSpec",
    "ConfigError",
    "CostWeights",
    "EmptyTightening",
    "ExperimentConfig",
    "HPolytope",
    "INIT_CASES",
    "INIT_MODES",
    "Metrics",
    "OcpSolution",
    "SimConfig",
    "SimRecord",
    "StmpcError",
    "Synthesis",
    "SystemModel",
    "TightenedSchedule",
    "TubeSMPC",
    "TubeSchedule",
    "VARIANTS",
    "Zonotope",
    "build_tightened_schedule",
    "build_tube_schedule",
    "check_axioms",
    "lqr_gain",
    "monte_carlo",
    "run_closed_loop",
    "zonotope_to_hpoly",
]
