"""Discrete-event simulation of one master and its slaves."""

from .campaigns import SweepRow, asymmetry_sweep
from .engine import EventQueue, Future, Simulation
from .network import STAGES, Network, build_scenario, pulse_alignment, run_bringup
from .report import SCHEMA, report_json
from .scenario import (
    DEFAULT_SEED,
    ConfigError,
    EyeScanConfig,
    Scenario,
    SlaveConfig,
    SyncConfig,
    cable_channel,
    fig12_scenario,
    fig13_scenario,
    ideal_scenario,
)

__all__ = [
    "DEFAULT_SEED",
    "SCHEMA",
    "STAGES",
    "ConfigError",
    "EventQueue",
    "EyeScanConfig",
    "Future",
    "Network",
    "Scenario",
    "Simulation",
    "SlaveConfig",
    "SweepRow",
    "SyncConfig",
    "asymmetry_sweep",
    "build_scenario",
    "cable_channel",
    "fig12_scenario",
    "fig13_scenario",
    "ideal_scenario",
    "pulse_alignment",
    "report_json",
    "run_bringup",
]
