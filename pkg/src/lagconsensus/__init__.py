"""Adaptive consensus of networked two-link arms over switching topologies.

The package simulates groups of uncertain planar manipulators that reach
positional agreement through a dynamic feedback law, with optional constant
communication delays on the links, and ships the numerical checks used to
certify the runs (per-agent storage dissipation, windowed-spread
monotonicity, exponential-decay certificates for the switching error flow).
"""

from .config import ConfigError, ScenarioConfig, load_config, scenario_a, scenario_b
from .graphs import DirectedGraph, SwitchingSchedule, fixed_schedule, generate_schedule
from .robot import NOMINAL_THETA, RobotModel, two_link_arm
from .sim import ScenarioRuntime, SignalTrace, SimulationDiverged, run_scenario

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DirectedGraph",
    "NOMINAL_THETA",
    "RobotModel",
    "ScenarioConfig",
    "ScenarioRuntime",
    "SignalTrace",
    "SimulationDiverged",
    "SwitchingSchedule",
    "fixed_schedule",
    "generate_schedule",
    "load_config",
    "run_scenario",
    "scenario_a",
    "scenario_b",
    "two_link_arm",
    "__version__",
]
