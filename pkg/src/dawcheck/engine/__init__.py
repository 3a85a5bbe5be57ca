"""Execution engine: planning, dispatch, constraint checks and recovery."""

from .config import EngineConfig, Mode, RetryPolicy, real_defaults
from .coordinator import NODE_ALIVE_VC, Coordinator, TimeoutEvent, enforce_timeouts
from .events import EventLog, configure_logging
from .heartbeat import HeartbeatMonitor, LivenessEvent, monitor_heartbeats
from .planner import PlanningError, plan
from .predicates import register_predicate
from .records import EXIT_CODES, EXIT_USAGE, Attempt, RunResult, RunStatus, SavingsReport, TaskRecord
from .recovery import RecoveryAction, decide
from .runner import run

__all__ = [
    "EXIT_CODES", "EXIT_USAGE", "NODE_ALIVE_VC", "Attempt", "Coordinator", "EngineConfig", "EventLog",
    "HeartbeatMonitor", "LivenessEvent", "Mode", "PlanningError", "RecoveryAction", "RetryPolicy",
    "RunResult", "RunStatus", "SavingsReport", "TaskRecord", "TimeoutEvent", "configure_logging", "decide",
    "enforce_timeouts", "monitor_heartbeats", "plan", "real_defaults", "register_predicate", "run",
]
