"""The run loop shared by real and simulated execution.

One coordinator owns all workflow state.  Backends launch attempts and
deliver completions as events on a clock; the coordinator handles every
event queued for one instant as a batch, commits the tasks that finished
successfully as one step, and only then dispatches newly ready work.
Events scheduled for the same instant while a batch is handled form the
next batch, so a zero-length task still gets a step of its own.

Backends provide::

    clock, workspace, mode, assume_installed
    licenses() -> frozenset        node_up(node) -> bool
    watches_nodes() -> bool        start(coordinator)
    launch(run, task_def, env)     finalize(run, completion)
    kill(run)                      sample(run) -> dict
    finish()
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Mapping

from ..catalog import CheckTime, Component, Severity
from ..constraints import (
    PRE_EXECUTION,
    Instance,
    PropertyEnvironment,
    RecoveryStep,
    Unevaluable,
    ValidityConstraint,
    Verdict,
    ViolationReport,
    VcKind,
    check_setup,
    dynamic_instances,
    is_synthetic_label,
    instantiate_catalog,
    report_for,
    scope_for_tasks,
)
from ..model import (
    END,
    ClusterSpec,
    DawState,
    ExecutionTrace,
    LogicalDaw,
    Schedule,
    StepRecord,
    initial_state,
    is_valid_state,
    state_from_finished,
)
from ..properties import ComparisonOp, Direction, TargetKind
from .clauses import ClauseContext, evaluate_clause, needs_files
from .config import EngineConfig
from .events import EventLog, jsonable
from .heartbeat import HeartbeatMonitor
from .planner import PlanningError, alternative, plan, shortfall
from .predicates import get_predicate
from .records import Attempt, CheckOutcome, RunResult, RunStatus, TaskRecord
from .recovery import LadderState, RecoveryAction, decide
from .workspace import Sandbox

NODE_ALIVE_VC = "engine:node-alive"
_CAPACITY = {"memory_bytes", "cpu_cores", "gpu_count", "disk_free_bytes"}


# ---- clock items ---------------------------------------------------------

@dataclass
class Completion:
    key: tuple[str, int]
    exit_code: int | None = 0
    stderr: str = ""
    peak_memory_bytes: int | None = None
    lost: bool = False


@dataclass(frozen=True)
class Deadline:
    key: tuple[str, int]


@dataclass(frozen=True)
class Poll:
    key: tuple[str, int]


@dataclass(frozen=True)
class Redispatch:
    task: str


@dataclass(frozen=True)
class Tick:
    pass


@dataclass(frozen=True)
class Callback:
    name: str
    fn: object
    component: str = "M"


# ---- bookkeeping ---------------------------------------------------------

@dataclass
class Running:
    task: str
    node: str
    attempt: Attempt
    sandbox: Sandbox
    tries: int
    deadline: int | None = None
    poll: int | None = None
    handle: object = None
    facts: dict = field(default_factory=dict)
    log: list[dict] = field(default_factory=list)

    @property
    def key(self) -> tuple[str, int]:
        return (self.task, self.tries)


@dataclass
class Pending:
    task: str
    node: str
    tries: int = 0
    retries: int = 0
    reschedules: int = 0
    tried: set[str] = field(default_factory=set)
    not_before: Decimal = Decimal(0)
    lost_on: str | None = None  # node the last attempt vanished with
    waiting: bool = False  # admission wait already logged
    reports: list[ViolationReport] = field(default_factory=list)


@dataclass
class Check:
    vc: ValidityConstraint
    instances: list[Instance]
    error: Unevaluable | None = None
    detail: str = ""
    extra: dict[str, str] = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.error is None and all(i.holds for i in self.instances)

    def outcome(self, when: str, t) -> CheckOutcome:
        failing = [i for i in self.instances if not i.holds]
        pick = failing or self.instances
        observed = pick[0].observed if pick else None
        return CheckOutcome(self.vc.id, when, None if self.error else self.holds, t, observed)


@dataclass(frozen=True)
class TimeoutEvent:
    task: str
    at: Decimal
    limit: Decimal


def runtime_limit(vcs: Iterable[ValidityConstraint]) -> Decimal | None:
    """Tightest ``runtime_seconds <= / <`` bound among during-checks."""
    limits = [Decimal(vc.rhs) for vc in vcs
              if vc.lhs.kind is TargetKind.TASK and vc.lhs.name == "runtime_seconds"
              and vc.op in (ComparisonOp.LE, ComparisonOp.LT) and vc.checked_at(CheckTime.DURING)]
    return min(limits) if limits else None


def enforce_timeouts(running: Mapping[str, tuple[Decimal, Decimal | None]], now) -> list[TimeoutEvent]:
    """Tasks whose runtime has reached their limit at ``now``; ``running`` maps task -> (start, limit)."""
    now = Decimal(now)
    out = []
    for task, (start, limit) in sorted(running.items()):
        if limit is not None and now - Decimal(start) >= Decimal(limit):
            out.append(TimeoutEvent(task, Decimal(start) + Decimal(limit), Decimal(limit)))
    return out


class Coordinator:
    def __init__(self, daw: LogicalDaw, cluster: ClusterSpec, vcs: Iterable[ValidityConstraint],
                 config: EngineConfig, backend, *, schedule: Schedule | None = None,
                 params: Mapping[str, object] | None = None, input_paths: Mapping[str, str] | None = None,
                 log: EventLog | None = None, workflow: str | None = None):
        vcs = list(vcs)
        self.daw = daw
        self.cluster = cluster
        self.static_vcs = [v for v in vcs if v.kind is VcKind.STATIC]
        self.dynamic_vcs = [v for v in vcs if v.kind is VcKind.DYNAMIC]
        self.config = config
        self.backend = backend
        self.clock = backend.clock
        self.workspace = backend.workspace
        self.schedule = schedule
        self.params = dict(params or {})
        self.input_paths = dict(input_paths or {})
        self.log = log or EventLog()
        self.workflow = workflow or daw.name

        self.task_vcs = {t: [v for v in self.dynamic_vcs if v.task in (None, t)] for t in daw.user_tasks()}
        self.alive_vc = instantiate_catalog("setup/infrastructure-health", {}, id=NODE_ALIVE_VC, origin="engine")
        self.alive = {n.id: n.alive for n in cluster.nodes}
        self.monitor: HeartbeatMonitor | None = None
        self.used = {n.id: dict.fromkeys(("memory_bytes", "cpu_cores", "gpu_count", "disk_bytes"), 0)
                     for n in cluster.nodes}

        self.states: list[DawState] = [initial_state(daw)]
        self.steps: list[StepRecord] = []
        self.records: dict[str, TaskRecord] = {t: TaskRecord(t) for t in daw.user_tasks()}
        self.violations: list[ViolationReport] = []
        self.pending: dict[str, Pending] = {}
        self.running: dict[tuple[str, int], Running] = {}
        self.done_now: list[str] = []
        self.node_of_done: dict[str, str] = {}
        self.status: RunStatus | None = None
        self.failure = ""
        self.order = {t: i for i, t in enumerate(daw.topological_order())}

    # ---- helpers ---------------------------------------------------------

    def now(self) -> Decimal:
        return self.clock.now()

    def emit(self, component: str, kind: str, **payload):
        self.log.emit(self.now(), component, kind, **payload)

    @property
    def state(self) -> DawState:
        return self.states[-1]

    @property
    def step_index(self) -> int:
        return len(self.states)

    def _request(self, task: str):
        return self.daw.task_def(task).resource_request

    def _admissible(self, task: str, node: str) -> bool:
        """Free capacity suffices, or the request exceeds the node outright (the before-check will say so)."""
        req = self._request(task)
        nd = self.cluster.node(node)
        if shortfall(req, nd) is not None:
            return True
        cap = dict(req.items())
        total = {"memory_bytes": nd.memory_bytes, "cpu_cores": nd.cpu_cores,
                 "gpu_count": nd.gpu_count, "disk_bytes": nd.disk_free_bytes}
        return all(self.used[node][d] + cap[d] <= total[d] for d in cap if cap[d])

    def _reserve(self, task: str, node: str, sign: int) -> None:
        for d, v in self._request(task).items():
            self.used[node][d] += sign * v

    def _env(self, task: str, sb: Sandbox | None, facts: dict, label_facts: dict | None = None) -> PropertyEnvironment:
        node_facts = {}
        for n in self.alive:
            nf = {("alive", None): self.alive[n]}
            if self.monitor is not None:
                nf[("heartbeat_age_seconds", None)] = self.monitor.age(n, self.now())
            else:
                nf[("heartbeat_age_seconds", None)] = Decimal(0)
            node_facts[n] = nf

        def probe(t, direction, label, name, arg):
            return self.workspace.probe(sb, direction, label, name, arg)

        return PropertyEnvironment(
            cluster=self.cluster, daw=self.daw, params=self.params, licenses=self.backend.licenses(),
            node_facts=node_facts, task_facts={task: facts}, label_facts=label_facts or {},
            input_paths=self.input_paths, label_probe=probe if sb is not None else None,
            assume_installed=self.backend.assume_installed)

    def command_env(self, task: str, node: str, tries: int) -> dict[str, str]:
        env = {"INPUTS": "inputs", "OUTPUTS": "outputs", "TASK": task, "ATTEMPT": str(tries), "NODE": node}
        merged = dict(self.params)
        merged.update(self.daw.task_def(task).params)
        for k, v in merged.items():
            env[str(k)] = str(jsonable(v))
        return env

    def _checks(self, task: str, node: str, sb: Sandbox, when: CheckTime, facts: dict,
                label_facts: dict | None = None, log: list | None = None) -> list[Check]:
        vcs = [v for v in self.task_vcs.get(task, []) if v.checked_at(when)]
        if not vcs:
            return []
        scope = scope_for_tasks(self.daw, [task], self.step_index, {task: node})
        env = self._env(task, sb, facts, label_facts)
        workdir: Path | None = None
        out = []

        def atom_check(v: ValidityConstraint) -> bool:
            return all(i.holds for i in dynamic_instances(v, scope, env))

        try:
            for vc in vcs:
                detail, extra = "", {}
                if vc.clause is not None:
                    if workdir is None and needs_files(vc.clause):
                        workdir = self.workspace.materialize(sb)
                    ctx = ClauseContext(workdir or Path("."), task, atom_check,
                                        self.command_env(task, node, sb.attempt))
                    try:
                        res = evaluate_clause(vc.clause, ctx)
                    except Unevaluable as exc:
                        out.append(Check(vc, [], exc))
                        continue
                    facts[("clause_holds", vc.id)] = res.holds
                    if log is not None:
                        log.append({"constraint": vc.id, "when": when.value, "probes": res.transcript})
                    if res.failing:
                        extra["file"] = res.failing[0]
                        detail = "fails for " + ", ".join(res.failing)
                        for rec in res.transcript:
                            if res.failing[0] in rec.get("bindings", {}).values():
                                shown = (rec["stdout"] or rec["stderr"]).strip().splitlines()[:3]
                                if shown:
                                    detail += "; probe output: " + " | ".join(shown)
                                break
                try:
                    out.append(Check(vc, dynamic_instances(vc, scope, env), None, detail, extra))
                except Unevaluable as exc:
                    out.append(Check(vc, [], exc, detail, extra))
        finally:
            if workdir is not None:
                self.workspace.release(workdir)
        return out

    # ---- violations and recovery ------------------------------------------

    def _report(self, check: Check, when: str, attempt: int | None, component: Component | None = None,
                node: str | None = None) -> ViolationReport:
        extra = dict(check.extra)
        if node:
            extra.setdefault("node", node)
        return report_for(check.vc, self.step_index, check.instances, unevaluable=check.error,
                          component=component, time=float(self.now()), check_time=when, attempt=attempt,
                          detail=check.detail, extra_subject=extra)

    def _transient(self, vc: ValidityConstraint, when: str) -> bool:
        return not (when == "before" and vc.lhs.kind is TargetKind.NODE and vc.lhs.name in _CAPACITY)

    def _violation(self, task: str, report: ViolationReport, vc: ValidityConstraint, when: str) -> None:
        """Record a violation and run the recovery ladder for ``task``."""
        self.violations.append(report)
        self.emit(report.component.value, "violation", constraint=report.constraint_id, task=task,
                  verdict=report.verdict.value, check_time=when, subject=report.subject,
                  observed=report.observed, bound=report.bound)
        if report.verdict is Verdict.WARNED:
            report.recovery.append(RecoveryStep("warn_only", "run continued", float(self.now())))
            return
        p = self.pending[task]
        for prev in p.reports:
            if prev.recovery and prev.recovery[-1].outcome == "scheduled":
                prev.recovery[-1].outcome = "failed again"
        meta = vc.metadata if not report.unevaluable else vc.metadata.with_severity(Severity.HARD)
        alt = alternative(self._request(task), self.cluster, p.tried | {p.node}, self.alive)
        state = LadderState(p.retries, p.reschedules, alt is not None, self._transient(vc, when))
        action = decide(meta, state, self.config.retry)
        step = RecoveryStep(action.value, "scheduled", float(self.now()))
        report.recovery.append(step)
        p.reports.append(report)
        if action is RecoveryAction.RETRY_SAME_NODE:
            p.retries += 1
            delay = self.config.retry.backoff(p.retries)
            p.not_before = self.now() + delay
            self.emit("EE", "retry", task=task, node=p.node, retry=p.retries, delay=delay)
            self.clock.schedule(p.not_before, Redispatch(task))
        elif action is RecoveryAction.RESCHEDULE_OTHER_NODE:
            p.tried.add(p.node)
            self.emit("S", "reschedule", task=task, old=p.node, new=alt)
            p.node = alt
            p.reschedules += 1
            p.not_before = self.now()
            self.clock.schedule(self.now(), Redispatch(task))
        else:
            step.outcome = "workflow aborted"
            self.abort(RunStatus.FAILED, f"{report.constraint_id} violated by task {task}")

    def abort(self, status: RunStatus, reason: str) -> None:
        if self.status is not None:
            return
        self.status = status
        self.failure = reason
        for key in sorted(self.running):
            run = self.running.pop(key)
            self._stop(run, "killed")
        for p in self.pending.values():
            for r in p.reports:
                if r.recovery and r.recovery[-1].outcome == "scheduled":
                    r.recovery[-1].outcome = "workflow aborted"
        self.emit("EE", "abort", status=status.value, reason=reason)

    def _stop(self, run: Running, outcome: str) -> None:
        self.backend.kill(run)
        self.clock.cancel(run.deadline)
        self.clock.cancel(run.poll)
        self._reserve(run.task, run.node, -1)
        a = run.attempt
        a.end = self.now()
        a.runtime_s = a.end - a.start
        a.outcome = outcome
        self._write_log(run)
        self.emit("EE", "kill", task=run.task, node=run.node, attempt=a.number)

    def _write_log(self, run: Running) -> None:
        self.workspace.write_json(run.sandbox, "checks.json", {
            "task": run.task, "attempt": run.attempt.number, "node": run.node,
            "checks": [c.to_json() for c in run.attempt.checks], "probes": run.log})

    # ---- dispatch ---------------------------------------------------------

    def _ready(self) -> list[str]:
        busy = {k[0] for k in self.running} | set(self.done_now)
        return sorted((t for t in self.state.ready if t in self.pending and t not in busy),
                      key=lambda t: self.order[t])

    def dispatch(self) -> None:
        if self.status is not None:
            return
        limit = self.config.max_parallel_tasks
        for task in self._ready():
            if limit is not None and len(self.running) >= limit:
                return
            p = self.pending[task]
            if p.not_before > self.now() or p.lost_on is not None:
                continue
            if task == END:
                del self.pending[task]
                self.done_now.append(task)
                self.node_of_done[task] = p.node
                self.clock.schedule(self.now(), Redispatch(task))  # forces a batch of its own
                continue
            if not self.alive.get(p.node, True):
                alt = alternative(self._request(task), self.cluster, {p.node}, self.alive)
                if alt is None:
                    continue
                self.emit("S", "replan", task=task, old=p.node, new=alt, reason="node dead")
                p.node = alt
            if not self._admissible(task, p.node):
                if not p.waiting:
                    p.waiting = True
                    self.emit("RM", "admission_wait", task=task, node=p.node)
                continue
            p.waiting = False
            self._start(task)

    def _start(self, task: str) -> None:
        p = self.pending[task]
        p.tries += 1
        rec = self.records[task]
        tdef = self.daw.task_def(task)
        sb = self.workspace.prepare(task, p.tries)
        for label in tdef.inputs:
            self.workspace.stage(sb, label)
        facts: dict = {}
        log: list[dict] = []
        checks = self._checks(task, p.node, sb, CheckTime.BEFORE, facts, log=log)
        outcomes = [c.outcome("before", self.now()) for c in checks]
        self.emit("EE", "before_checks", task=task, node=p.node, checked=len(checks),
                  failed=[c.vc.id for c in checks if not c.holds])
        blocking = None
        for c in checks:
            if c.holds:
                continue
            report = self._report(c, "before", None, node=p.node)
            if report.verdict is Verdict.WARNED:
                self._violation(task, report, c.vc, "before")
            elif blocking is None:
                blocking = (c, report)
            else:
                self.violations.append(report)
        if blocking is not None:
            for o in outcomes:
                o.sandbox = sb.rel
            rec.prechecks.extend(outcomes)
            self.workspace.write_json(sb, "checks.json", {"task": task, "launched": False, "node": p.node,
                                                           "checks": [o.to_json() for o in outcomes],
                                                           "probes": log})
            self._violation(task, blocking[1], blocking[0].vc, "before")
            return
        attempt = Attempt(len(rec.attempts) + 1, p.node, self.now(), sandbox=sb.rel)
        attempt.checks.extend(outcomes)
        if any(v.lhs.name == "unchanged" for v in self.task_vcs[task]):
            for label in tdef.inputs:
                d = self.workspace.digest(sb, Direction.IN, label)
                if d is not None:
                    attempt.input_digests[label] = d
        run = Running(task, p.node, attempt, sb, p.tries, log=log)
        rec.attempts.append(attempt)
        self.running[run.key] = run
        self._reserve(task, p.node, +1)
        p.tried.add(p.node)
        self.emit("EE", "launch", task=task, node=p.node, attempt=attempt.number, sandbox=sb.rel)
        try:
            self.backend.launch(run, tdef, self.command_env(task, p.node, p.tries))
        except OSError as exc:
            self.running.pop(run.key)
            self._reserve(task, p.node, -1)
            attempt.outcome = "failed"
            attempt.end = self.now()
            attempt.runtime_s = Decimal(0)
            vc = instantiate_catalog("task/executable-must-exist", {"executable": tdef.command or "", "task": task},
                                     id=f"{task}:spawn", origin="engine")
            inst = [Instance({"task": task, "node": p.node}, False, False)]
            check = Check(vc, inst, None, f"could not start the command: {exc}")
            self._violation(task, self._report(check, "before", attempt.number, node=p.node), vc, "before")
            return
        during = [v for v in self.task_vcs[task] if v.checked_at(CheckTime.DURING)]
        limit = runtime_limit(during)
        if limit is not None:
            run.deadline = self.clock.schedule(attempt.start + limit, Deadline(run.key))
        if any(v.lhs.name != "runtime_seconds" for v in during):
            run.poll = self.clock.schedule(self.now() + self.config.poll_interval, Poll(run.key))

    # ---- event handlers ---------------------------------------------------

    def handle(self, item) -> None:
        if isinstance(item, Completion):
            self._on_completion(item)
        elif isinstance(item, Deadline):
            self._on_deadline(item)
        elif isinstance(item, Poll):
            self._on_poll(item)
        elif isinstance(item, Tick):
            self._on_tick()
        elif isinstance(item, Callback):
            item.fn()
        elif isinstance(item, Redispatch):
            pass  # dispatch runs after every batch
        else:
            raise TypeError(f"unknown clock item {item!r}")

    def _during_facts(self, run: Running) -> dict:
        facts = run.facts
        sample = self.backend.sample(run) or {}
        for k, v in sample.items():
            if v is not None:
                prev = facts.get((k, None))
                facts[(k, None)] = v if prev is None else max(prev, v)
        facts[("runtime_seconds", None)] = self.now() - run.attempt.start
        return facts

    def _reported(self, run: Running) -> set[str]:
        """Constraints already reported (as warnings) for this attempt."""
        return {r.constraint_id for r in self.violations
                if r.attempt == run.attempt.number and r.subject.get("task") == run.task}

    def _during_failure(self, run: Running, checks: list[Check]) -> bool:
        for c in checks:
            run.attempt.checks.append(c.outcome("during", self.now()))
        bad = [c for c in checks if not c.holds]
        hard = None
        for c in bad:
            report = self._report(c, "during", run.attempt.number, node=run.node)
            if report.verdict is Verdict.WARNED:
                self._violation(run.task, report, c.vc, "during")
            elif hard is None:
                hard = (c, report)
            else:
                self.violations.append(report)
        if hard is None:
            return False
        self.running.pop(run.key)
        self._stop(run, "violated")
        self._violation(run.task, hard[1], hard[0].vc, "during")
        return True

    def _on_poll(self, item: Poll) -> None:
        run = self.running.get(item.key)
        if run is None:
            return
        run.poll = None
        facts = self._during_facts(run)
        checks = [c for c in self._checks(run.task, run.node, run.sandbox, CheckTime.DURING, facts, log=run.log)
                  if c.vc.lhs.name != "runtime_seconds"]
        checks = [c for c in checks if c.vc.id not in self._reported(run)]
        if not self._during_failure(run, checks):
            run.poll = self.clock.schedule(self.now() + self.config.poll_interval, Poll(run.key))

    def _on_deadline(self, item: Deadline) -> None:
        run = self.running.get(item.key)
        if run is None:
            return
        run.deadline = None
        elapsed = self.now() - run.attempt.start
        during = [v for v in self.task_vcs[run.task] if v.checked_at(CheckTime.DURING)
                  and v.lhs.name == "runtime_seconds"]
        vc = min(during, key=lambda v: Decimal(v.rhs))
        inst = [Instance({"task": run.task}, elapsed, False)]
        self.emit("M", "timeout", task=run.task, node=run.node, attempt=run.attempt.number, limit=vc.rhs)
        check = Check(vc, inst, None, f"still running when the limit of {vc.rhs}s was reached; stopped")
        self._during_failure(run, [check])

    def _on_completion(self, item: Completion) -> None:
        run = self.running.pop(item.key, None)
        if run is None:
            return  # stopped earlier; this is the late exit of a killed attempt
        self.clock.cancel(run.deadline)
        self.clock.cancel(run.poll)
        self._reserve(run.task, run.node, -1)
        a = run.attempt
        task = run.task
        a.end = self.now()
        a.runtime_s = a.end - a.start
        a.exit_code = item.exit_code
        tdef = self.daw.task_def(task)
        p = self.pending[task]
        if item.lost:
            a.outcome = "lost"
            a.exit_code = None
            p.lost_on = run.node
            self.emit("M", "attempt_lost", task=task, node=run.node, attempt=a.number)
            self._write_log(run)
            if not self.alive.get(run.node, True):
                self._node_dead_violation(task, run.node)
            return
        self.backend.finalize(run, item)
        rel = run.sandbox.rel
        a.stdout_path = f"{rel}/.contract/stdout"
        a.stderr_path = f"{rel}/.contract/stderr"
        a.stderr_tail = item.stderr[-2000:]
        facts = self._during_facts(run)
        if item.peak_memory_bytes is not None:
            prev = facts.get(("peak_memory_bytes", None))
            facts[("peak_memory_bytes", None)] = item.peak_memory_bytes if prev is None else max(prev, item.peak_memory_bytes)
        a.peak_memory_bytes = facts.get(("peak_memory_bytes", None))
        facts[("runtime_seconds", None)] = a.runtime_s
        facts[("exit_code", None)] = item.exit_code
        facts[("stderr_empty", None)] = not item.stderr.strip()
        facts[("logged_no_error", None)] = item.exit_code == 0 and not item.stderr.strip()
        label_facts = {}
        for label, before in a.input_digests.items():
            after = self.workspace.digest(run.sandbox, Direction.IN, label)
            label_facts[(task, "in", label)] = {("unchanged", None): after == before}
        for v in self.task_vcs[task]:
            if v.lhs.name == "metamorphic" and ("metamorphic", v.lhs.arg) not in facts:
                facts[("metamorphic", v.lhs.arg)] = self._metamorphic(run, v.lhs.arg)
        for label in tdef.outputs:
            d = self.workspace.digest(run.sandbox, Direction.OUT, label)
            if d is not None:
                a.output_digests[label] = d
                a.output_sizes[label] = self.workspace.size(run.sandbox, Direction.OUT, label)
        self.emit("EE", "exit", task=task, node=run.node, attempt=a.number, exit_code=item.exit_code,
                  runtime=a.runtime_s)
        checks = self._checks(task, run.node, run.sandbox, CheckTime.DURING, facts, label_facts, run.log)
        checks = [c for c in checks if c.vc.id not in self._reported(run)]
        after = self._checks(task, run.node, run.sandbox, CheckTime.AFTER, facts, label_facts, run.log)
        a.checks.extend(c.outcome("during", self.now()) for c in checks)
        a.checks.extend(c.outcome("after", self.now()) for c in after)
        self._write_log(run)
        hard = None
        for c, when in [(c, "during") for c in checks] + [(c, "after") for c in after]:
            if c.holds:
                continue
            report = self._report(c, when, a.number, node=run.node)
            if report.verdict is Verdict.WARNED:
                self._violation(task, report, c.vc, when)
            elif hard is None:
                hard = (c, report, when)
            else:
                self.violations.append(report)
        if hard is not None:
            a.outcome = "violated"
            self._violation(task, hard[1], hard[0].vc, hard[2])
            return
        if item.exit_code != 0:
            a.outcome = "failed"
            tail = item.stderr.strip().splitlines()[-1:] or [""]
            self.emit("EE", "task_failed", task=task, exit_code=item.exit_code, stderr=tail[0])
            self.abort(RunStatus.TASK_FAILED, f"task {task} exited with status {item.exit_code}")
            return
        a.outcome = "ok"
        for label in tdef.outputs:
            self.workspace.collect(run.sandbox, label)
        for r in p.reports:
            if r.verdict is Verdict.VIOLATED:
                r.verdict = Verdict.RECOVERED
            if r.recovery and r.recovery[-1].outcome in ("scheduled", "failed again"):
                r.recovery[-1].outcome = "succeeded" if r is p.reports[-1] else r.recovery[-1].outcome
        del self.pending[task]
        self.done_now.append(task)
        self.node_of_done[task] = run.node

    def _metamorphic(self, run: Running, name: str):
        fn = get_predicate(name)
        if fn is None:
            return None  # left unobserved: the check reports it as unevaluable
        workdir = self.workspace.materialize(run.sandbox)
        try:
            return bool(fn(workdir / "inputs", workdir / "outputs"))
        finally:
            self.workspace.release(workdir)

    # ---- liveness ---------------------------------------------------------

    def _on_tick(self) -> None:
        if self.monitor is None or self.status is not None:
            return
        now = self.now()
        up = [n for n in self.alive if self.backend.node_up(n)]
        for ev in self.monitor.tick(now, up):
            self.alive[ev.node] = ev.alive
            self.emit("M", "node_alive" if ev.alive else "node_dead", node=ev.node)
            if not ev.alive:
                for task in sorted(self.pending, key=lambda t: self.order[t]):
                    if self.pending[task].lost_on == ev.node:
                        self._node_dead_violation(task, ev.node)
        for task in sorted(self.pending, key=lambda t: self.order[t]):
            p = self.pending[task]
            if p.lost_on is not None and self.alive.get(p.lost_on) and p.lost_on in up:
                self.emit("EE", "retry", task=task, node=p.lost_on, reason="node reachable again")
                p.lost_on = None
                p.not_before = now
        if self.status is None and END not in self.state.finished:
            self.clock.schedule(self.monitor.next_tick(now), Tick())

    def _node_dead_violation(self, task: str, node: str) -> None:
        p = self.pending[task]
        p.lost_on = None
        a = self.records[task].last()
        inst = [Instance({"node": node, "task": task}, False, False)]
        check = Check(self.alive_vc, inst, None,
                      f"node missed {self.config.heartbeat_threshold} consecutive heartbeats while running {task}")
        report = self._report(check, "during", a.number if a else None, Component.M, node)
        report.subject["task"] = task
        # a retry on the same node waits in dispatch until the node answers again
        self._violation(task, report, self.alive_vc, "during")

    # ---- main loop --------------------------------------------------------

    def _commit(self) -> None:
        if not self.done_now:
            return
        finished = self.state.finished | set(self.done_now)
        new = state_from_finished(self.daw, finished)
        if self.config.debug:
            assert is_valid_state(self.daw, new), new
            assert new.finished > self.state.finished
        index = len(self.states)
        self.states.append(new)
        nodes = {t: self.node_of_done[t] for t in self.done_now}
        self.steps.append(StepRecord(frozenset(self.done_now), float(self.now()), nodes))
        for t in self.done_now:
            if t in self.records:
                self.records[t].finished_step = index
        self.emit("EE", "step", index=index, finished=sorted(self.done_now))
        self.done_now = []

    def _only_ticks_left(self) -> bool:
        return all(isinstance(item, Tick) for item in self.clock.items())

    def setup(self) -> bool:
        """Static checks and planning; False when the run ends before any task starts."""
        env = PropertyEnvironment(cluster=self.cluster, daw=self.daw, params=self.params,
                                  licenses=self.backend.licenses(), input_paths=self.input_paths,
                                  assume_installed=self.backend.assume_installed)
        if self.config.static_checks and self.static_vcs:
            verdict = check_setup(self.daw, self.cluster, self.static_vcs, env)
            for r in verdict.violations:
                r.time = float(self.now())
                if r.verdict is Verdict.WARNED:
                    r.recovery.append(RecoveryStep("warn_only", "run continued", float(self.now())))
                self.violations.append(r)
                self.emit("EE", "violation", constraint=r.constraint_id, verdict=r.verdict.value,
                          check_time="setup", subject=r.subject, observed=r.observed, bound=r.bound)
            if not verdict.correct:
                self.status = RunStatus.ABORTED_STATIC
                self.failure = "setup violates " + ", ".join(r.constraint_id for r in verdict.violations if r.hard)
                self.emit("EE", "abort", status=self.status.value, reason=self.failure)
                return False
        if self.schedule is None:
            try:
                self.schedule = plan(self.daw, self.cluster, self.config.scheduler,
                                     allow_infeasible=not self.config.static_checks)
            except PlanningError as exc:
                vc = instantiate_catalog("setup/resource-availability",
                                         {"property": dict(_DIM_TO_NODE)[exc.dimension], "op": ">=",
                                          "value": exc.needed, "quantifier": "at_least_one_node"},
                                         id=f"{exc.task}:plan", origin="engine")
                inst = [Instance({"node": n.id}, getattr(n, dict(_DIM_TO_NODE)[exc.dimension]), False)
                        for n in self.cluster.nodes]
                r = report_for(vc, PRE_EXECUTION, inst, component=Component.S, time=float(self.now()),
                               check_time="setup", detail=str(exc), extra_subject={"task": exc.task})
                self.violations.append(r)
                self.status = RunStatus.ABORTED_STATIC
                self.failure = str(exc)
                self.emit("S", "plan_failed", task=exc.task, dimension=exc.dimension, needed=exc.needed,
                          best=exc.best)
                return False
        self.emit("S", "plan", schedule=dict(sorted(self.schedule.assignment.items())))
        return True

    def run(self) -> RunResult:
        self.emit("EE", "run_start", workflow=self.workflow, mode=self.backend.mode, seed=self.config.seed)
        if self.setup():
            for t in self.daw.user_tasks() + [END]:
                self.pending[t] = Pending(t, self.schedule[t])
            if self.backend.watches_nodes():
                self.monitor = HeartbeatMonitor(self.alive, self.config.heartbeat_interval,
                                                self.config.heartbeat_threshold)
                self.clock.schedule(self.monitor.next_tick(self.now()), Tick())
            self.backend.start(self)
            self._loop()
        self.backend.finish()
        return self._result()

    def _loop(self) -> None:
        self.dispatch()
        while self.status is None and END not in self.state.finished:
            if not self.running and self._only_ticks_left() and not self._dispatchable():
                self._stall()
                return
            batch = self.clock.pop_batch(block=bool(self.running))
            if batch is None:
                self._stall()
                return
            _, items = batch
            for item in items:
                if self.status is not None:
                    break
                self.handle(item)
            self._commit()
            self.dispatch()

    def _dispatchable(self) -> bool:
        for t in self._ready():
            p = self.pending[t]
            if p.lost_on is None and (self.alive.get(p.node, True) or
                                      alternative(self._request(t), self.cluster, {p.node}, self.alive)):
                return True
        return bool(self.done_now)

    def _stall(self) -> None:
        waiting = sorted(self.pending, key=lambda t: self.order[t])
        reason = "no further progress possible; waiting: " + ", ".join(waiting)
        status = RunStatus.FAILED if any(r.hard and r.verdict is Verdict.VIOLATED for r in self.violations) \
            else RunStatus.TASK_FAILED
        self.abort(status, reason)

    def _result(self) -> RunResult:
        if self.status is None:
            self.status = RunStatus.CORRECT
        self.emit("EE", "run_end", status=self.status.value, steps=len(self.states) - 1)
        results = {}
        for (a, b), label in sorted(self.daw.labels.items()):
            if b == self.daw.end and not is_synthetic_label(label):
                path = self.workspace.result_path(label)
                if path is not None:
                    results[label] = path
        trace = ExecutionTrace(tuple(self.states), tuple(self.steps))
        root = getattr(self.workspace, "root", None)
        return RunResult(self.workflow, self.backend.mode, self.status, trace, self.records, self.violations,
                         self.schedule, self.log, self.config.seed, self.now(),
                         str(root) if root is not None else None, results, None, self.failure,
                         self.config.static_checks)


_DIM_TO_NODE = (("memory_bytes", "memory_bytes"), ("cpu_cores", "cpu_cores"),
                ("gpu_count", "gpu_count"), ("disk_bytes", "disk_free_bytes"))
