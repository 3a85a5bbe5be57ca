"""Deterministic discrete-event simulation of clusters and task behaviour."""

from .backend import SimulatedBackend, SimulationError, inject
from .clock import ClockError, SimClock
from .faults import Fault, FaultScript, FaultScriptError, load_faults, parse_faults
from .simulate import account, simulate

__all__ = [
    "ClockError", "Fault", "FaultScript", "FaultScriptError", "SimClock", "SimulatedBackend",
    "SimulationError", "account", "inject", "load_faults", "parse_faults", "simulate",
]
