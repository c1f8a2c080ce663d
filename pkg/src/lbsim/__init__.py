"""Discrete-event simulation of decentralized replica load balancing (Inv-Load, Avail-Cap, Max-Cap)."""
from .engine import Simulation, run
from .metrics import MetricsStore, overloaded_percentage, utilization_summary, write_csv
from .model import ConfigError, ScenarioConfig, Strategy, WorkloadSpec

__all__ = [
    "ConfigError",
    "MetricsStore",
    "ScenarioConfig",
    "Simulation",
    "Strategy",
    "WorkloadSpec",
    "overloaded_percentage",
    "run",
    "utilization_summary",
    "write_csv",
]
