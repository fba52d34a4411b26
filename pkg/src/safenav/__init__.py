"""Monitored NMPC for automated driving among occluded pedestrians."""

from .nmpc import NmpcController, Trajectory, solve_nmpc
from .observer import SafetyObserver
from .scenario import ScenarioConfig, load_scenario, run_scenario, write_run_outputs
from .sweep import run_sweep

__all__ = [
    "NmpcController",
    "SafetyObserver",
    "ScenarioConfig",
    "Trajectory",
    "load_scenario",
    "run_scenario",
    "run_sweep",
    "solve_nmpc",
    "write_run_outputs",
]
