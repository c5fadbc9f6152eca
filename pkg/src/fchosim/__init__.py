"""System-level simulator for conditional (CHO) and fast conditional (FCHO) handover."""

from .config import ConfigError, HoMode, SimConfig, UeScheme, load_config
from .deployment import Topology, build_topology
from .engine import RunResult, Simulation, run, sweep
from .kpi import KpiReport, build_report
from .signaling import EventKind, EventLedger, SignalEvent

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "EventKind",
    "EventLedger",
    "HoMode",
    "KpiReport",
    "RunResult",
    "SignalEvent",
    "SimConfig",
    "Simulation",
    "Topology",
    "UeScheme",
    "build_report",
    "build_topology",
    "load_config",
    "run",
    "sweep",
]
