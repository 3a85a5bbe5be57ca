"""Simulated runs and their compute accounting."""

from __future__ import annotations

import tempfile
from decimal import Decimal
from typing import IO, Iterable

from ..constraints import ValidityConstraint, VcKind
from ..engine.config import EngineConfig, Mode
from ..engine.coordinator import Coordinator
from ..engine.events import EventLog
from ..engine.records import RunResult, RunStatus, SavingsReport
from ..engine.workspace import VirtualWorkspace
from ..model import ClusterSpec, LogicalDaw, Schedule
from .backend import SimulatedBackend, SimulationError
from .clock import SimClock
from .faults import FaultScript


def _unpack(workflow, vcs):
    """(daw, vcs, params, inputs, name) from a compiled workflow or a bare DAW."""
    if isinstance(workflow, LogicalDaw):
        return workflow, list(vcs or []), {}, {}, workflow.name
    if vcs is None:
        vcs = workflow.constraints()
    return workflow.daw, list(vcs), workflow.params, workflow.resolved_inputs(), workflow.name


def missing_profiles(daw: LogicalDaw) -> list[str]:
    return [t for t in daw.user_tasks() if daw.task_def(t).sim_profile is None]


def _simulate_once(daw, cluster, vcs, config, faults, schedule, params, inputs, name, log_sink) -> RunResult:
    clock = SimClock()
    workspace = VirtualWorkspace(inputs, config.sandbox_root if config.keep_sandbox else None)
    backend = SimulatedBackend(cluster, workspace, faults, config.seed, clock)
    coord = Coordinator(daw, cluster, vcs, config, backend, schedule=schedule, params=params, input_paths=inputs,
                        log=EventLog(log_sink), workflow=name)
    result = coord.run()
    result.workspace = workspace
    return result


def simulate(workflow, cluster: ClusterSpec, config: EngineConfig | None = None,
             faults: FaultScript | None = None, *, schedule: Schedule | None = None,
             vcs: Iterable[ValidityConstraint] | None = None, counterfactual: bool = True,
             log_sink: IO[str] | None = None) -> RunResult:
    """Run ``workflow`` (a compiled workflow, or a DAW plus ``vcs``) on the simulated cluster.

    The result carries a :class:`SavingsReport`.  When the run stops on
    static checks, the same run is repeated with the static constraints
    stripped to measure what the early abort saved.
    """
    config = (config or EngineConfig()).with_(mode=Mode.SIMULATED)
    if config.keep_sandbox and config.sandbox_root is None:
        config = config.with_(sandbox_root=tempfile.mkdtemp(prefix="dawcheck-sim-"))
    faults = faults or FaultScript()
    daw, vcs, params, inputs, name = _unpack(workflow, vcs)
    missing = missing_profiles(daw)
    if missing:
        raise SimulationError(f"task(s) without a sim profile: {', '.join(missing)}")
    result = _simulate_once(daw, cluster, vcs, config, faults, schedule, params, inputs, name, log_sink)
    baseline = None
    if counterfactual and result.status is RunStatus.ABORTED_STATIC:
        dynamic = [v for v in vcs if v.kind is VcKind.DYNAMIC]
        cf_config = config.with_(static_checks=False, keep_sandbox=False)
        baseline = _simulate_once(daw, cluster, dynamic, cf_config, faults, schedule, params, inputs, name, None)
    result.savings = account(result, baseline)
    return result


def account(run: RunResult, counterfactual: RunResult | None = None) -> SavingsReport:
    """Compute-seconds spent, wasted and saved.

    spend    every attempt's runtime
    waste    attempts whose work was thrown away; all of it if the run failed
    savings  counterfactual spend minus actual spend, for runs stopped by static checks
    """
    spend = run.spend()
    if run.status is RunStatus.CORRECT:
        waste = sum((a.runtime_s or Decimal(0) for r in run.records.values() for a in r.attempts
                     if a.outcome != "ok"), Decimal(0))
    else:
        waste = spend
    cf_spend = counterfactual.spend() if counterfactual is not None else None
    savings = Decimal(0)
    if cf_spend is not None and run.status is RunStatus.ABORTED_STATIC:
        savings = max(Decimal(0), cf_spend - spend)
    return SavingsReport(spend, waste, savings, cf_spend)
