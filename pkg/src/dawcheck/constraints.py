"""Validity constraints: representation, scope computation and evaluation.

A constraint compares one property against a constant.  Static
constraints look at the workflow and cluster alone; dynamic ones are
evaluated over the scope of an execution step: the tasks that finished
in it, their incoming and outgoing dependencies, and the nodes they ran
on.  A property that cannot be resolved makes the constraint
*unevaluable*, which is reported as a hard configuration error and never
silently treated as false.
"""

from __future__ import annotations

import enum
import os
import re
import shutil
from dataclasses import dataclass, field, replace
from decimal import Decimal
from typing import Callable, Iterable, Mapping, Sequence

from . import catalog as cat
from .catalog import CheckTime, Component, Severity, VcMetadata, VcType
from .model import (
    ClusterSpec,
    ExecutionTrace,
    LogicalDaw,
    START,
    NodeDescriptor,
    Schedule,
)
from .probes import ProbeFailed, probe_file
from .properties import (
    ComparisonOp,
    Direction,
    PropertySpec,
    TargetKind,
    ValueType,
    check_operator,
    coerce_constant,
    format_bytes,
    format_decimal,
    lookup,
)


class VcKind(str, enum.Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"


class Quantifier(str, enum.Enum):
    AT_LEAST_ONE = "at_least_one_node"
    ALL = "all_nodes"


def is_synthetic_label(label: str) -> bool:
    return "->" in label


@dataclass(frozen=True)
class PropertyRef:
    kind: TargetKind
    name: str
    arg: str | None = None
    task: str | None = None  # static task target
    label: str | None = None  # None: every (non-synthetic) label in that direction
    direction: Direction | None = None
    node: str | None = None  # None: quantified (static) or the task's node (dynamic)

    @property
    def spec(self) -> PropertySpec:
        return lookup(self.kind, self.name)

    def render(self, static: bool, quantifier: Quantifier | None = None) -> str:
        tail = self.name + (f"({_render_arg(self.arg)})" if self.arg is not None else "")
        if self.kind is TargetKind.NODE:
            if self.node is not None:
                head = f"node({_render_arg(self.node)})"
            elif static:
                head = (quantifier or Quantifier.ALL).value
            else:
                head = "node"
            return f"{head}.{tail}"
        if self.kind is TargetKind.LABEL:
            if static:
                return f"input({render_label(self.label)}).{tail}"
            d = (self.direction or Direction.IN).value
            return (f"{d}({render_label(self.label)})." if self.label else f"{d}.") + tail
        if static:
            return ("workflow" if self.task == START else f"task({self.task})") + f".{tail}"
        return tail


_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t") + '"'


def _render_arg(arg: str) -> str:
    return arg if _IDENT.fullmatch(arg) else _quote(arg)


def render_label(label: str) -> str:
    return label if _IDENT.fullmatch(label) else _quote(label)


def render_constant(value, spec: PropertySpec | None = None) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return _quote(value)
    if spec is not None and spec.unit == "bytes" and isinstance(value, int):
        return format_bytes(value)
    if spec is not None and spec.unit == "seconds":
        return format_decimal(Decimal(value)) + "s"
    if isinstance(value, Decimal):
        return format_decimal(value)
    return str(value)


@dataclass(frozen=True)
class ValidityConstraint:
    id: str
    kind: VcKind
    lhs: PropertyRef
    op: ComparisonOp
    rhs: object
    metadata: VcMetadata
    origin: str = "user"
    entry: str | None = None
    quantifier: Quantifier | None = None
    task: str | None = None  # dynamic constraints owned by one task; None applies to every task
    clause: object = field(default=None, compare=False)  # compound contract clause behind clause_holds

    def __post_init__(self):
        spec = self.lhs.spec
        check_operator(spec, self.op)
        object.__setattr__(self, "rhs", coerce_constant(spec, self.rhs))
        if self.metadata.severity is Severity.BOTH:
            raise ValueError(f"{self.id}: an instantiated constraint must be hard or soft")
        if self.kind is VcKind.STATIC:
            if self.lhs.kind is TargetKind.NODE and self.lhs.node is None and self.quantifier is None:
                object.__setattr__(self, "quantifier", Quantifier.ALL)
            if self.lhs.kind is TargetKind.TASK and self.lhs.task is None:
                raise ValueError(f"{self.id}: a static task constraint must name its task")
            if self.lhs.kind is TargetKind.LABEL and self.lhs.label is None:
                raise ValueError(f"{self.id}: a static file constraint must name its label")
        elif self.quantifier is not None:
            raise ValueError(f"{self.id}: node quantifiers only apply to static constraints")

    @property
    def severity(self) -> Severity:
        return self.metadata.severity

    @property
    def hard(self) -> bool:
        return self.metadata.severity is Severity.HARD

    def formula(self) -> str:
        text = (f"{self.lhs.render(self.kind is VcKind.STATIC, self.quantifier)} "
                f"{self.op.value} {render_constant(self.rhs, self.lhs.spec)}")
        if self.clause is not None:
            text = str(self.clause)
        return f"[{self.task}] {text}" if self.task else text

    def checked_at(self, when: CheckTime) -> bool:
        return when in self.metadata.time_of_check

    def with_severity(self, severity: Severity) -> "ValidityConstraint":
        return replace(self, metadata=self.metadata.with_severity(severity))

    def negated(self) -> "ValidityConstraint":
        """The complementary constraint: booleans flip the constant, orders flip the operator."""
        if self.lhs.spec.value_type is ValueType.BOOL:
            return replace(self, id=self.id + "~", rhs=not self.rhs)
        return replace(self, id=self.id + "~", op=self.op.complement())


class Unevaluable(Exception):
    def __init__(self, message: str, subject: Mapping[str, str] | None = None):
        super().__init__(message)
        self.subject = dict(subject or {})


@dataclass(frozen=True)
class Scope:
    step_index: int
    executed: frozenset[str]
    incoming: frozenset[tuple[str, str]]
    outgoing: frozenset[tuple[str, str]]
    node_of: Mapping[str, str]
    labels: Mapping[tuple[str, str], str] = field(default_factory=dict)

    def label(self, dep: tuple[str, str]) -> str:
        return self.labels.get(dep, f"{dep[0]}->{dep[1]}")


def scope_for_tasks(daw: LogicalDaw, tasks: Iterable[str], step_index: int,
                    node_of: Mapping[str, str]) -> Scope:
    executed = frozenset(tasks)
    inc = frozenset(d for t in executed for d in daw.incoming(t))
    out = frozenset(d for t in executed for d in daw.outgoing(t))
    labels = {d: daw.labels[d] for d in inc | out if d in daw.labels}
    return Scope(step_index, executed, inc, out, {t: node_of[t] for t in executed if t in node_of}, labels)


def compute_scope(trace: ExecutionTrace, step: int, daw: LogicalDaw, schedule: Schedule) -> Scope:
    if not 0 <= step < len(trace.states):
        raise IndexError(f"step {step} is outside the trace (0..{len(trace.states) - 1})")
    executed = trace.executed(step)
    missing = [t for t in executed if t not in schedule.assignment]
    if missing:
        raise ValueError(f"schedule has no node for executed task(s) {missing}")
    return scope_for_tasks(daw, executed, step, schedule.assignment)


FactKey = tuple[str, "str | None"]


@dataclass
class PropertyEnvironment:
    """Frozen view of everything property lookups may consult.

    ``*_facts`` hold observed values keyed by ``(property, arg)``; anything
    not observed falls back to the workflow and cluster descriptions, or to
    ``label_probe`` / ``file_root`` for file properties.
    """

    cluster: ClusterSpec | None = None
    daw: LogicalDaw | None = None
    params: Mapping[str, object] = field(default_factory=dict)
    licenses: frozenset[str] | None = None
    node_facts: Mapping[str, Mapping[FactKey, object]] = field(default_factory=dict)
    task_facts: Mapping[str, Mapping[FactKey, object]] = field(default_factory=dict)
    label_facts: Mapping[tuple[str, str, str], Mapping[FactKey, object]] = field(default_factory=dict)
    input_paths: Mapping[str, str] = field(default_factory=dict)
    label_probe: Callable[[str, Direction, str, str, "str | None"], object] | None = None
    file_root: str | None = None
    assume_installed: bool = False  # nodes without an executable list have everything (simulation)

    def available_licenses(self) -> frozenset[str]:
        if self.licenses is not None:
            return self.licenses
        return self.cluster.licenses if self.cluster else frozenset()

    def node(self, node_id: str) -> NodeDescriptor:
        if self.cluster is None:
            raise Unevaluable("no cluster description available", {"node": node_id})
        try:
            return self.cluster.node(node_id)
        except KeyError:
            raise Unevaluable(f"unknown node {node_id!r}", {"node": node_id}) from None

    def node_value(self, node_id: str, name: str, arg: str | None):
        facts = self.node_facts.get(node_id, {})
        if (name, arg) in facts:
            return facts[(name, arg)]
        node = self.node(node_id)
        subject = {"node": node_id}
        if name in ("memory_bytes", "cpu_cores", "gpu_count", "disk_free_bytes"):
            return getattr(node, name)
        if name == "alive":
            return node.alive
        if name == "executable_present":
            if node.installed_executables is None:
                return self.assume_installed or shutil.which(arg) is not None
            return arg in node.installed_executables
        if name in ("file_exists", "folder_exists"):
            if arg in node.present_files:
                return True
            root = node.root or self.file_root
            if root is None:
                return False
            path = arg if os.path.isabs(arg) else os.path.join(root, arg)
            return probe_file(path, name)
        raise Unevaluable(f"node property {name} was not observed", subject)

    def task_value(self, task: str, name: str, arg: str | None):
        facts = self.task_facts.get(task, {})
        if (name, arg) in facts:
            return facts[(name, arg)]
        subject = {"task": task}
        if name == "license_available":
            return arg in self.available_licenses()
        tdef = self.daw.task_def(task) if self.daw is not None else None
        if name == "requested_memory_bytes" and tdef is not None:
            return tdef.resource_request.memory_bytes
        if name == "config_param":
            if tdef is not None and arg in tdef.params:
                return tdef.params[arg]
            if arg in self.params:
                return self.params[arg]
            raise Unevaluable(f"parameter {arg!r} is not defined", subject)
        raise Unevaluable(f"task property {name} of {task} was not observed", subject)

    def label_value(self, task: str | None, direction: Direction, label: str, name: str, arg: str | None):
        subject = {"label": label, "direction": direction.value}
        if task:
            subject["task"] = task
        facts = self.label_facts.get((task or "", direction.value, label), {})
        if (name, arg) in facts:
            return facts[(name, arg)]
        if task is None:
            path = self.input_paths.get(label)
            if path is None:
                raise Unevaluable(f"{label} is not a workflow input", subject)
            try:
                return probe_file(path, name, arg)
            except ProbeFailed as exc:
                raise Unevaluable(str(exc), subject) from None
        if self.label_probe is not None:
            try:
                return self.label_probe(task, direction, label, name, arg)
            except ProbeFailed as exc:
                raise Unevaluable(str(exc), subject) from None
        raise Unevaluable(f"{name} of {direction.value} {label} was not observed", subject)


@dataclass(frozen=True)
class Instance:
    """One concrete comparison a constraint expands to."""

    subject: Mapping[str, str]
    observed: object
    holds: bool


def _compare(vc: ValidityConstraint, value) -> bool:
    if vc.lhs.spec.value_type is ValueType.SCALAR:
        try:
            return vc.op(value, vc.rhs)
        except TypeError:
            raise Unevaluable(f"cannot compare {value!r} with {vc.rhs!r}") from None
    if isinstance(vc.rhs, Decimal) and isinstance(value, float):
        value = Decimal(str(value))
    return vc.op(value, vc.rhs)


def static_instances(vc: ValidityConstraint, daw: LogicalDaw | None, cluster: ClusterSpec | None,
                     env: PropertyEnvironment) -> list[Instance]:
    if vc.kind is not VcKind.STATIC:
        raise ValueError(f"{vc.id} is not a static constraint")
    ref = vc.lhs
    out = []
    if ref.kind is TargetKind.NODE:
        if ref.node is not None:
            nodes = [ref.node]
        elif cluster is not None:
            nodes = cluster.node_ids()
        else:
            raise Unevaluable("no cluster to quantify over")
        for n in nodes:
            value = env.node_value(n, ref.name, ref.arg)
            out.append(Instance({"node": n}, value, _compare(vc, value)))
    elif ref.kind is TargetKind.TASK:
        value = env.task_value(ref.task, ref.name, ref.arg)
        out.append(Instance({"task": ref.task}, value, _compare(vc, value)))
    else:
        value = env.label_value(None, Direction.IN, ref.label, ref.name, ref.arg)
        out.append(Instance({"label": ref.label}, value, _compare(vc, value)))
    return out


def _fold(vc: ValidityConstraint, instances: Sequence[Instance]) -> bool:
    if vc.quantifier is Quantifier.AT_LEAST_ONE:
        return any(i.holds for i in instances)
    return all(i.holds for i in instances)


def evaluate_static(vc: ValidityConstraint, daw: LogicalDaw | None, cluster: ClusterSpec | None,
                    env: PropertyEnvironment | None = None) -> bool:
    """Truth value of a static constraint; raises :class:`Unevaluable` when a property is unknown."""
    env = env or PropertyEnvironment(cluster=cluster, daw=daw)
    return _fold(vc, static_instances(vc, daw, cluster, env))


def dynamic_instances(vc: ValidityConstraint, scope: Scope, env: PropertyEnvironment) -> list[Instance]:
    if vc.kind is not VcKind.DYNAMIC:
        raise ValueError(f"{vc.id} is not a dynamic constraint")
    ref = vc.lhs
    tasks = sorted(t for t in scope.executed if vc.task is None or t == vc.task)
    out = []
    for t in tasks:
        if ref.kind is TargetKind.TASK:
            if ref.name == "clause_holds" and vc.clause is None and (ref.name, ref.arg) not in env.task_facts.get(t, {}):
                raise Unevaluable(f"contract clause {ref.arg} has no recorded outcome", {"task": t})
            value = env.task_value(t, ref.name, ref.arg)
            out.append(Instance({"task": t}, value, _compare(vc, value)))
        elif ref.kind is TargetKind.NODE:
            node = ref.node or scope.node_of.get(t)
            if node is None:
                raise Unevaluable(f"task {t} has no node in this step", {"task": t})
            value = env.node_value(node, ref.name, ref.arg)
            out.append(Instance({"task": t, "node": node}, value, _compare(vc, value)))
        else:
            deps = scope.incoming if ref.direction is Direction.IN else scope.outgoing
            end = 1 if ref.direction is Direction.IN else 0
            labels = sorted({scope.label(d) for d in deps if d[end] == t})
            for label in labels:
                if ref.label is not None and label != ref.label:
                    continue
                if ref.label is None and is_synthetic_label(label):
                    continue
                value = env.label_value(t, ref.direction or Direction.IN, label, ref.name, ref.arg)
                out.append(Instance({"task": t, "label": label, "direction": (ref.direction or Direction.IN).value},
                                    value, _compare(vc, value)))
    return out


def evaluate_dynamic(vc: ValidityConstraint, scope: Scope, env: PropertyEnvironment) -> bool:
    """Truth value over a step's scope; an empty scope holds vacuously."""
    return all(i.holds for i in dynamic_instances(vc, scope, env))


# ---- reports and verdicts ------------------------------------------------

class Verdict(str, enum.Enum):
    VIOLATED = "violated"
    WARNED = "warned"
    RECOVERED = "recovered"


PRE_EXECUTION = "pre-execution"


@dataclass
class RecoveryStep:
    action: str
    outcome: str
    time: float | None = None

    def to_json(self):
        return {"action": self.action, "outcome": self.outcome, "time": self.time}


def _jsonable(value):
    if isinstance(value, Decimal):
        return float(value)
    if isinstance(value, (bool, int, float, str)) or value is None:
        return value
    return str(value)


@dataclass
class ViolationReport:
    constraint_id: str
    formula: str
    metadata: VcMetadata
    verdict: Verdict
    step: int | str
    subject: dict[str, str]
    observed: object = None
    bound: str = ""
    component: Component = Component.EE
    time: float | None = None
    check_time: str = "before"
    entry: str | None = None
    origin: str = "user"
    unevaluable: bool = False
    attempt: int | None = None
    detail: str = ""
    recovery: list[RecoveryStep] = field(default_factory=list)

    def __post_init__(self):
        if not self.subject:
            raise ValueError("a violation report must implicate at least one object")

    @property
    def hard(self) -> bool:
        return self.metadata.severity is Severity.HARD or self.unevaluable

    def to_json(self) -> dict:
        return {
            "constraint": self.constraint_id,
            "formula": self.formula,
            "entry": self.entry,
            "origin": self.origin,
            "metadata": self.metadata.to_json(),
            "verdict": self.verdict.value,
            "unevaluable": self.unevaluable,
            "step": self.step,
            "subject": dict(sorted(self.subject.items())),
            "observed": _jsonable(self.observed),
            "bound": self.bound,
            "component": self.component.value,
            "time": self.time,
            "check_time": self.check_time,
            "attempt": self.attempt,
            "detail": self.detail,
            "recovery": [r.to_json() for r in self.recovery],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "ViolationReport":
        return cls(
            constraint_id=data["constraint"],
            formula=data["formula"],
            metadata=VcMetadata.from_json(data["metadata"]),
            verdict=Verdict(data["verdict"]),
            step=data["step"],
            subject=dict(data["subject"]),
            observed=data.get("observed"),
            bound=data.get("bound", ""),
            component=Component(data.get("component", "EE")),
            time=data.get("time"),
            check_time=data.get("check_time", "before"),
            entry=data.get("entry"),
            origin=data.get("origin", "user"),
            unevaluable=data.get("unevaluable", False),
            attempt=data.get("attempt"),
            detail=data.get("detail", ""),
            recovery=[RecoveryStep(r["action"], r["outcome"], r.get("time")) for r in data.get("recovery", [])],
        )


def bound_text(vc: ValidityConstraint) -> str:
    return f"{vc.op.value} {render_constant(vc.rhs, vc.lhs.spec)}"


def report_for(vc: ValidityConstraint, step, instances: Sequence[Instance] = (), *,
               unevaluable: Unevaluable | None = None, component: Component | None = None,
               time: float | None = None, check_time: str = "before", attempt: int | None = None,
               detail: str = "", extra_subject: Mapping[str, str] | None = None) -> ViolationReport:
    failing = [i for i in instances if not i.holds]
    subject: dict[str, str] = {}
    observed = None
    if unevaluable is not None:
        subject.update(unevaluable.subject)
        detail = detail or str(unevaluable)
    elif failing:
        subject.update(failing[0].subject)
        observed = failing[0].observed
        if len(failing) > 1:
            others = "; ".join(", ".join(f"{k}={v}" for k, v in sorted(i.subject.items())) + f" observed {i.observed!r}"
                               for i in failing[1:])
            detail = (detail + "\n" if detail else "") + f"also failing: {others}"
    if vc.quantifier is Quantifier.AT_LEAST_ONE and instances:
        best = max((i.observed for i in instances), default=None, key=lambda v: (v is not None, v))
        subject = {"nodes": ",".join(sorted(i.subject["node"] for i in instances))}
        observed = best
    if extra_subject:
        for k, v in extra_subject.items():
            subject.setdefault(k, v)
    if vc.task and "task" not in subject:
        subject["task"] = vc.task
    if vc.kind is VcKind.STATIC and vc.lhs.task and "task" not in subject:
        subject["task"] = vc.lhs.task
    if vc.kind is VcKind.STATIC and vc.origin.startswith("derived:"):
        owner = vc.origin.split(":", 1)[1]
        if vc.id.startswith(owner + ":"):
            subject.setdefault("task", owner)  # a check derived from this task's request
    if not subject:
        subject = {"workflow": "*"}
    verdict = Verdict.VIOLATED if (vc.hard or unevaluable is not None) else Verdict.WARNED
    return ViolationReport(
        constraint_id=vc.id,
        formula=vc.formula(),
        metadata=vc.metadata,
        verdict=verdict,
        step=step,
        subject=subject,
        observed=observed,
        bound=bound_text(vc),
        component=component or vc.metadata.components()[0],
        time=time,
        check_time=check_time,
        entry=vc.entry,
        origin=vc.origin,
        unevaluable=unevaluable is not None,
        attempt=attempt,
        detail=detail,
    )


@dataclass
class SetupVerdict:
    violations: list[ViolationReport]

    @property
    def correct(self) -> bool:
        return not any(v.hard for v in self.violations)

    @property
    def warnings(self) -> list[ViolationReport]:
        return [v for v in self.violations if not v.hard]


def check_setup(daw: LogicalDaw, cluster: ClusterSpec, static_vcs: Iterable[ValidityConstraint],
                env: PropertyEnvironment | None = None) -> SetupVerdict:
    """Evaluate every static constraint and collect all violations, not just the first."""
    env = env or PropertyEnvironment(cluster=cluster, daw=daw)
    reports = []
    for vc in static_vcs:
        try:
            instances = static_instances(vc, daw, cluster, env)
        except Unevaluable as exc:
            reports.append(report_for(vc, PRE_EXECUTION, unevaluable=exc, check_time="setup"))
            continue
        if not _fold(vc, instances):
            reports.append(report_for(vc, PRE_EXECUTION, instances, check_time="setup"))
    return SetupVerdict(reports)


@dataclass
class ExecutionVerdict:
    setup: SetupVerdict
    step_correct: list[bool]
    violations: list[ViolationReport]

    @property
    def first_erroneous_step(self) -> int | None:
        for i, ok in enumerate(self.step_correct):
            if not ok:
                return i
        return None

    @property
    def correct(self) -> bool:
        return self.setup.correct and all(self.step_correct)

    def at_step(self, step: int) -> list[ViolationReport]:
        return [v for v in self.violations if v.step == step]


def check_execution(daw: LogicalDaw, trace: ExecutionTrace, schedule: Schedule, cluster: ClusterSpec,
                    static_vcs: Iterable[ValidityConstraint], dynamic_vcs: Iterable[ValidityConstraint],
                    env: PropertyEnvironment | None = None) -> ExecutionVerdict:
    """Correctness of an execution: setup correct and every dynamic constraint true at every step.

    A step counts as erroneous when a constraint of either severity fails
    there; soft failures are reported as warnings but still mark the step.
    """
    env = env or PropertyEnvironment(cluster=cluster, daw=daw)
    setup = check_setup(daw, cluster, static_vcs, env)
    dynamic_vcs = list(dynamic_vcs)
    step_ok = []
    reports = []
    for s in range(len(trace.states)):
        scope = compute_scope(trace, s, daw, schedule)
        ok = True
        for vc in dynamic_vcs:
            try:
                instances = dynamic_instances(vc, scope, env)
            except Unevaluable as exc:
                ok = False
                reports.append(report_for(vc, s, unevaluable=exc))
                continue
            if not all(i.holds for i in instances):
                ok = False
                reports.append(report_for(vc, s, instances))
        step_ok.append(ok)
    return ExecutionVerdict(setup, step_ok, reports)


# ---- catalog instantiation -----------------------------------------------

class SchemaMismatch(ValueError):
    pass


def _need(params: Mapping, *keys):
    missing = [k for k in keys if k not in params]
    if missing:
        raise SchemaMismatch(f"missing parameter(s): {', '.join(missing)}")


def instantiate_catalog(entry_name: str, params: Mapping[str, object], *, id: str | None = None,
                        severity: Severity | str | None = None, origin: str | None = None,
                        time_of_check: Iterable[CheckTime] | None = None) -> ValidityConstraint:
    """A concrete constraint for a catalog entry, with the entry's metadata as defaults."""
    e = cat.entry(entry_name)
    meta = e.metadata
    sev = Severity(severity) if severity is not None else (
        Severity.HARD if meta.severity is Severity.BOTH else meta.severity)
    meta = meta.with_severity(sev)
    if time_of_check is not None:
        meta = replace(meta, time_of_check=frozenset(time_of_check))
    p = dict(params)
    task = p.get("task")
    kind = VcKind.DYNAMIC
    quantifier = None
    op = ComparisonOp.EQ
    rhs: object = True

    def op_of(key="op", default=">="):
        return ComparisonOp.parse(str(p.get(key, default)))

    name = entry_name
    if name == "setup/resource-availability":
        _need(p, "property", "value")
        kind = VcKind.STATIC
        lhs = PropertyRef(TargetKind.NODE, str(p["property"]), node=p.get("node"))
        op, rhs = op_of(), p["value"]
        quantifier = None if p.get("node") else Quantifier(p.get("quantifier", Quantifier.ALL.value))
    elif name == "setup/file-must-exist":
        _need(p, "path")
        kind = VcKind.STATIC
        lhs = PropertyRef(TargetKind.NODE, "file_exists", arg=str(p["path"]), node=p.get("node"))
        quantifier = None if p.get("node") else Quantifier(p.get("quantifier", Quantifier.ALL.value))
    elif name == "setup/infrastructure-health":
        lhs = PropertyRef(TargetKind.NODE, "alive", node=p.get("node"))
    elif name == "task/executable-must-exist":
        _need(p, "executable")
        if p.get("static"):
            kind = VcKind.STATIC
            quantifier = Quantifier.ALL
            task = None
        lhs = PropertyRef(TargetKind.NODE, "executable_present", arg=str(p["executable"]))
    elif name == "task/resource-availability":
        _need(p, "property", "value")
        lhs = PropertyRef(TargetKind.NODE, str(p["property"]))
        op, rhs = op_of(), p["value"]
    elif name == "task/configuration-parameters":
        _need(p, "key", "value")
        lhs = PropertyRef(TargetKind.TASK, "config_param", arg=str(p["key"]))
        op, rhs = op_of(default="="), p["value"]
    elif name == "task/licence-valid":
        _need(p, "license")
        lhs = PropertyRef(TargetKind.TASK, "license_available", arg=str(p["license"]))
    elif name == "task/metamorphic-relation":
        _need(p, "predicate")
        lhs = PropertyRef(TargetKind.TASK, "metamorphic", arg=str(p["predicate"]))
    elif name == "task/ends-within-limits":
        _need(p, "max_runtime")
        lhs = PropertyRef(TargetKind.TASK, "runtime_seconds")
        op, rhs = ComparisonOp.LE, p["max_runtime"]
    elif name == "task/ends-correctly":
        prop = str(p.get("property", "exit_code"))
        lhs = PropertyRef(TargetKind.TASK, prop)
        op = op_of(default="=")
        rhs = p.get("value", 0 if prop == "exit_code" else True)
    elif name == "file/file-properties":
        _need(p, "property", "value")
        lhs = PropertyRef(TargetKind.LABEL, str(p["property"]), arg=p.get("arg"), label=p.get("label"),
                          direction=Direction(p.get("direction", "out")))
        op, rhs = op_of(default="="), p["value"]
    elif name == "file/file-must-exist":
        lhs = PropertyRef(TargetKind.LABEL, "file_exists", label=p.get("label"),
                          direction=Direction(p.get("direction", "in")))
    elif name == "file/folder-exists":
        lhs = PropertyRef(TargetKind.LABEL, "folder_exists", label=p.get("label"),
                          direction=Direction(p.get("direction", "out")))
    else:  # pragma: no cover - the catalog lookup above already rejected it
        raise cat.UnknownEntry(name)

    if kind is VcKind.STATIC:
        meta = replace(meta, vc_type=VcType.STATIC) if meta.vc_type is VcType.DYNAMIC else meta
    try:
        lhs.spec
    except KeyError as exc:
        raise SchemaMismatch(str(exc)) from None
    vc_id = id or (f"{task}:{name}" if task else name)
    try:
        return ValidityConstraint(vc_id, kind, lhs, op, rhs, meta, origin=origin or f"catalog:{name}",
                                  entry=name, quantifier=quantifier, task=task if kind is VcKind.DYNAMIC else None)
    except TypeError as exc:
        raise SchemaMismatch(str(exc)) from None
