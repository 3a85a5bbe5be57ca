"""Lower a parsed document to a DAW plus its static and dynamic constraints.

Besides the clauses the author wrote, every task gets a handful of
derived checks: its resource request must fit some node (static) and
its own node (dynamic), its program must be installed, its licences
present, its inputs present before it starts and its outputs present
after it ends, and it must finish within ``max_runtime``.
"""

from __future__ import annotations

import os
import shlex
from dataclasses import dataclass, field, replace
from typing import Mapping

from ..catalog import CheckTime, Severity, VcType, classify
from ..constraints import (
    PropertyRef,
    Quantifier,
    ValidityConstraint,
    VcKind,
    instantiate_catalog,
)
from ..model import END, START, LogicalDaw, OutputSpec, ResourceVector, SimProfile, TaskDef
from ..properties import ComparisonOp, Direction, TargetKind
from .parser import ParseError
from .syntax import Atom, Builtin, ForAll, IfThen, Pos, WorkflowDocument


class DesugarError(ParseError):
    def __init__(self, message: str, pos: Pos | None, filename: str = "<input>"):
        pos = pos or Pos()
        super().__init__(message, pos.line, pos.col, filename)


_NODE_RESOURCE = {"memory_bytes": "memory_bytes", "cpu_cores": "cpu_cores",
                  "gpu_count": "gpu_count", "disk_bytes": "disk_free_bytes"}
_DURING = ("runtime_seconds", "peak_memory_bytes", "alive", "heartbeat_age_seconds")


def entry_for(ref: PropertyRef, static: bool = False) -> str:
    """Catalog entry a property comparison belongs to."""
    if ref.kind is TargetKind.NODE:
        if ref.name in ("alive", "heartbeat_age_seconds"):
            return "setup/infrastructure-health"
        if ref.name == "executable_present":
            return "task/executable-must-exist"
        if ref.name in ("file_exists", "folder_exists"):
            return "setup/file-must-exist"
        return "setup/resource-availability" if static else "task/resource-availability"
    if ref.kind is TargetKind.TASK:
        return {
            "exit_code": "task/ends-correctly",
            "logged_no_error": "task/ends-correctly",
            "stderr_empty": "task/ends-correctly",
            "runtime_seconds": "task/ends-within-limits",
            "peak_memory_bytes": "task/resource-availability",
            "requested_memory_bytes": "task/resource-availability",
            "config_param": "task/configuration-parameters",
            "license_available": "task/licence-valid",
            "metamorphic": "task/metamorphic-relation",
            "clause_holds": "file/file-properties",
        }[ref.name]
    if ref.name == "file_exists":
        return "file/file-must-exist"
    if ref.name == "folder_exists":
        return "file/folder-exists"
    return "file/file-properties"


def _metadata(entry: str, severity: Severity, times, static: bool):
    meta = classify(entry).with_severity(severity)
    meta = replace(meta, time_of_check=frozenset(times))
    if static:
        meta = replace(meta, vc_type=VcType.STATIC)
    return meta


@dataclass
class CompiledWorkflow:
    name: str
    daw: LogicalDaw
    static_vcs: list[ValidityConstraint]
    dynamic_vcs: list[ValidityConstraint]
    inputs: dict[str, str]
    params: dict[str, object]
    document: WorkflowDocument
    clauses: dict[str, object] = field(default_factory=dict)
    filename: str = "<input>"

    def constraints(self) -> list[ValidityConstraint]:
        return self.static_vcs + self.dynamic_vcs

    def constraint(self, vc_id: str) -> ValidityConstraint:
        for vc in self.constraints():
            if vc.id == vc_id:
                return vc
        raise KeyError(vc_id)

    def for_task(self, task: str) -> list[ValidityConstraint]:
        return [vc for vc in self.dynamic_vcs if vc.task in (None, task)]

    def resolved_inputs(self) -> dict[str, str]:
        """Workflow input paths, relative ones taken from the workflow file's directory."""
        base = os.path.dirname(os.path.abspath(self.filename)) if self.filename != "<input>" else os.getcwd()
        return {k: v if os.path.isabs(v) else os.path.normpath(os.path.join(base, v))
                for k, v in self.inputs.items()}

    def with_inputs(self, overrides: Mapping[str, str]) -> "CompiledWorkflow":
        unknown = sorted(set(overrides) - set(self.inputs))
        if unknown:
            raise KeyError(f"not a workflow input: {', '.join(unknown)}")
        inputs = dict(self.inputs)
        inputs.update({k: os.path.abspath(v) for k, v in overrides.items()})
        return replace(self, inputs=inputs)

    def without_static(self) -> "CompiledWorkflow":
        return replace(self, static_vcs=[])


def _atom_constraint(vc_id: str, atom: Atom, *, task: str | None, times, origin: str) -> ValidityConstraint:
    static = atom.static
    entry = entry_for(atom.ref, static)
    severity = atom.severity or Severity.HARD
    meta = _metadata(entry, severity, times, static)
    return ValidityConstraint(vc_id, VcKind.STATIC if static else VcKind.DYNAMIC, atom.ref, atom.op, atom.value,
                              meta, origin=origin, entry=entry, quantifier=atom.quantifier if static else None,
                              task=None if static else task)


def _clause_entry(clause, role: str) -> str:
    if isinstance(clause, ForAll) or role == "require":
        return "file/file-properties"
    return "task/metamorphic-relation"


def _lower_clause(task: str, role: str, index: int, clause, clauses: dict) -> ValidityConstraint:
    times = {CheckTime.BEFORE} if role == "require" else {CheckTime.AFTER}
    origin = f"contract:{task}:{role}"
    vc_id = f"{task}:{role}{index}"
    if isinstance(clause, Atom):
        if clause.ref.name in _DURING and role == "promise":
            times = {CheckTime.DURING}
        return _atom_constraint(vc_id, clause, task=task, times=times, origin=origin)
    if isinstance(clause, Builtin):
        severity = clause.severity or Severity.HARD
        if clause.name == "COMMAND_LOGGED_NO_ERROR":
            ref = PropertyRef(TargetKind.TASK, "logged_no_error")
        else:
            ref = PropertyRef(TargetKind.LABEL, "unchanged", direction=Direction.IN)
        entry = entry_for(ref)
        return ValidityConstraint(vc_id, VcKind.DYNAMIC, ref, ComparisonOp.EQ, True,
                                  _metadata(entry, severity, {CheckTime.AFTER}, False),
                                  origin=origin, entry=entry, task=task)
    # compound clause: evaluated as a whole by the engine
    severity = clause.severity
    if severity is None:
        severity = Severity.SOFT if isinstance(clause, IfThen) and clause.action == "warn" else Severity.HARD
    entry = _clause_entry(clause, role)
    clauses[vc_id] = clause
    ref = PropertyRef(TargetKind.TASK, "clause_holds", arg=vc_id)
    return ValidityConstraint(vc_id, VcKind.DYNAMIC, ref, ComparisonOp.EQ, True,
                              _metadata(entry, severity, times, False),
                              origin=origin, entry=entry, task=task, clause=clause)


_SHELL_BUILTINS = frozenset(
    "! . : [ alias bg break cd command continue echo eval exec exit export false fg getopts hash if for while "
    "until case read readonly return set shift test times trap true type ulimit umask unalias unset wait "
    "printf pwd kill {".split())


def _executable(command: str) -> str | None:
    """The program a command line starts, or None when the shell itself handles it."""
    try:
        words = shlex.split(command)
    except ValueError:
        return None
    for w in words:
        if "=" in w.split("/")[0] and not w.startswith(("/", ".")):
            continue  # leading VAR=value assignment
        return None if w in _SHELL_BUILTINS else w
    return None


def _derived(task: TaskDef) -> tuple[list[ValidityConstraint], list[ValidityConstraint]]:
    static, dynamic = [], []
    t = task.id
    origin = f"derived:{t}"
    for dim, amount in task.resource_request.items():
        if not amount:
            continue
        prop = _NODE_RESOURCE[dim]
        static.append(instantiate_catalog(
            "setup/resource-availability",
            {"property": prop, "op": ">=", "value": amount, "quantifier": Quantifier.AT_LEAST_ONE.value},
            id=f"{t}:fits-{prop}", origin=origin, time_of_check=[CheckTime.BEFORE]))
        dynamic.append(instantiate_catalog(
            "task/resource-availability", {"property": prop, "op": ">=", "value": amount, "task": t},
            id=f"{t}:node-{prop}", origin=origin, time_of_check=[CheckTime.BEFORE]))
    if task.resource_request.memory_bytes:
        meta = _metadata("task/resource-availability", Severity.HARD, {CheckTime.DURING}, False)
        dynamic.append(ValidityConstraint(
            f"{t}:memory-limit", VcKind.DYNAMIC, PropertyRef(TargetKind.TASK, "peak_memory_bytes"),
            ComparisonOp.LE, task.resource_request.memory_bytes, meta, origin=origin,
            entry="task/resource-availability", task=t))
    if task.max_runtime is not None:
        dynamic.append(instantiate_catalog("task/ends-within-limits", {"max_runtime": task.max_runtime, "task": t},
                                           id=f"{t}:max-runtime", origin=origin))
    if task.command:
        exe = _executable(task.command)
        if exe:
            dynamic.append(instantiate_catalog("task/executable-must-exist", {"executable": exe, "task": t},
                                               id=f"{t}:executable", origin=origin))
    for lic in task.licenses:
        dynamic.append(instantiate_catalog("task/licence-valid", {"license": lic, "task": t},
                                           id=f"{t}:licence-{lic}", origin=origin))
    if task.inputs:
        dynamic.append(instantiate_catalog("file/file-must-exist", {"direction": "in", "task": t},
                                           id=f"{t}:inputs-exist", origin=origin,
                                           time_of_check=[CheckTime.BEFORE]))
    if task.outputs:
        dynamic.append(instantiate_catalog("file/file-must-exist", {"direction": "out", "task": t},
                                           id=f"{t}:outputs-exist", origin=origin,
                                           time_of_check=[CheckTime.AFTER]))
    return static, dynamic


def _sim_profile(block) -> SimProfile | None:
    if block is None:
        return None
    outs = tuple(OutputSpec(o.label, o.size_bytes, o.content, o.corrupt, o.empty) for o in block.outputs)
    return SimProfile(block.runtime_s, block.memory_bytes, outs, block.exit_code, block.stderr, block.jitter)


def desugar(doc: WorkflowDocument, filename: str = "<input>",
            param_overrides: Mapping[str, object] | None = None) -> CompiledWorkflow:
    def fail(message, pos=None):
        raise DesugarError(message, pos, filename)

    task_ids = {t.id for t in doc.tasks}

    # which task produces / consumes each label
    producers: dict[str, tuple[str, Pos]] = {}
    edges: dict[tuple[str, str], str] = {}
    consumed_by: dict[str, set[str]] = {}
    for d in doc.deps:
        for t in (d.producer, d.consumer):
            if t not in task_ids:
                fail(f"dependency {d.label} names unknown task {t!r}", d.pos)
        if d.producer == d.consumer:
            fail(f"task {d.producer} depends on itself", d.pos)
        if (d.producer, d.consumer) in edges:
            fail(f"{d.producer} -> {d.consumer} already carries {edges[(d.producer, d.consumer)]!r}; "
                 "one label per dependency", d.pos)
        prev = producers.get(d.label)
        if prev is not None and prev[0] != d.producer:
            fail(f"label {d.label!r} is produced by both {prev[0]} and {d.producer}", d.pos)
        producers[d.label] = (d.producer, d.pos)
        edges[(d.producer, d.consumer)] = d.label
        consumed_by.setdefault(d.label, set()).add(d.consumer)

    workflow_inputs = {}
    for i in doc.inputs:
        if i.label in workflow_inputs:
            fail(f"workflow input {i.label!r} declared twice", i.pos)
        if i.label in producers:
            fail(f"{i.label!r} is a workflow input and also produced by {producers[i.label][0]}", i.pos)
        workflow_inputs[i.label] = i.path

    params: dict[str, object] = {p.name: p.default for p in doc.params}
    for k, v in (param_overrides or {}).items():
        if k not in params:
            fail(f"unknown parameter {k!r}")
        params[k] = v

    task_defs: dict[str, TaskDef] = {}
    for tb in doc.tasks:
        in_deps = sorted(lbl for (a, b), lbl in edges.items() if b == tb.id)
        out_deps = sorted({lbl for (a, b), lbl in edges.items() if a == tb.id})
        inputs = tb.inputs if tb.inputs is not None else tuple(in_deps)
        outputs = tb.outputs if tb.outputs is not None else tuple(out_deps)
        for lbl in in_deps:
            if lbl not in inputs:
                fail(f"task {tb.id} receives {lbl!r} but does not list it in inputs", tb.pos)
        for lbl in out_deps:
            if lbl not in outputs:
                fail(f"task {tb.id} sends {lbl!r} but does not list it in outputs", tb.pos)
        if len(set(inputs)) != len(inputs) or len(set(outputs)) != len(outputs):
            fail(f"task {tb.id} lists a label twice", tb.pos)
        unsourced = [lbl for lbl in inputs if lbl not in in_deps]
        for lbl in unsourced:
            if lbl not in workflow_inputs:
                fail(f"input {lbl!r} of task {tb.id} is neither a workflow input nor produced by a dep", tb.pos)
        if len(unsourced) > 1:
            fail(f"task {tb.id} reads several workflow inputs ({', '.join(unsourced)}); "
                 "each dependency carries one label, so group them in a folder", tb.pos)
        results = [lbl for lbl in outputs if lbl not in out_deps]
        if len(results) > 1:
            fail(f"task {tb.id} has several unconsumed outputs ({', '.join(results)}); "
                 "only one can be a workflow result", tb.pos)
        if unsourced:
            edges[(START, tb.id)] = unsourced[0]
        if results:
            edges[(tb.id, END)] = results[0]
        sim = _sim_profile(tb.sim)
        if sim is not None:
            for out in sim.outputs:
                if out.label not in outputs:
                    fail(f"sim output {out.label!r} is not an output of task {tb.id}", tb.pos)
        task_defs[tb.id] = TaskDef(
            id=tb.id, command=tb.run, inputs=tuple(inputs), outputs=tuple(outputs),
            resource_request=ResourceVector(**dict(tb.resources)), max_runtime=tb.max_runtime,
            contracts=tb.contracts, sim_profile=sim, params=dict(tb.params), licenses=tuple(tb.licenses))

    for t in sorted(task_ids):
        if not any(b == t for (_, b) in edges):
            edges[(START, t)] = f"{START}->{t}"
        if not any(a == t for (a, _) in edges):
            edges[(t, END)] = f"{t}->{END}"

    if not task_ids:
        edges[(START, END)] = f"{START}->{END}"
    daw = LogicalDaw.from_edges(edges.keys(), labels=edges, task_defs=task_defs, name=doc.name)

    static_vcs: list[ValidityConstraint] = []
    dynamic_vcs: list[ValidityConstraint] = []
    clauses: dict[str, object] = {}

    for n, atom in enumerate(doc.requires, 1):
        ref = atom.ref
        if ref.kind is TargetKind.TASK and ref.task not in task_ids | {START}:
            fail(f"requirement names unknown task {ref.task!r}", atom.pos)
        if ref.kind is TargetKind.LABEL and ref.label not in workflow_inputs:
            fail(f"input({ref.label}) does not name a workflow input", atom.pos)
        static_vcs.append(_atom_constraint(f"workflow:require{n}", atom, task=None,
                                           times={CheckTime.BEFORE}, origin="contract:workflow"))

    for p in doc.params:
        if p.low is None:
            continue
        ref = PropertyRef(TargetKind.TASK, "config_param", arg=p.name, task=START)
        meta = _metadata("task/configuration-parameters", Severity.HARD, {CheckTime.BEFORE}, True)
        for suffix, op, bound in (("min", ComparisonOp.GE, p.low), ("max", ComparisonOp.LE, p.high)):
            static_vcs.append(ValidityConstraint(f"param:{p.name}:{suffix}", VcKind.STATIC, ref, op, bound, meta,
                                                 origin="derived:params", entry="task/configuration-parameters"))

    for tb in doc.tasks:
        s, d = _derived(task_defs[tb.id])
        static_vcs.extend(s)
        dynamic_vcs.extend(d)
        if tb.contracts is None:
            continue
        for role, items in (("require", tb.contracts.requires), ("promise", tb.contracts.promises)):
            for n, clause in enumerate(items, 1):
                if role == "require" and isinstance(clause, Builtin):
                    fail(f"{clause.name}() describes a finished task and belongs in promise", clause.pos)
                if isinstance(clause, Atom) and clause.ref.kind is TargetKind.LABEL and clause.ref.label:
                    ref = clause.ref
                    pool = task_defs[tb.id].inputs if ref.direction is Direction.IN else task_defs[tb.id].outputs
                    if ref.label not in pool:
                        fail(f"task {tb.id} has no {ref.direction.value}put labelled {ref.label!r}", clause.pos)
                dynamic_vcs.append(_lower_clause(tb.id, role, n, clause, clauses))

    return CompiledWorkflow(doc.name, daw, static_vcs, dynamic_vcs, workflow_inputs, params, doc, clauses, filename)


def compile_text(text: str, filename: str = "<input>", param_overrides=None) -> CompiledWorkflow:
    from .parser import parse
    return desugar(parse(text, filename), filename, param_overrides)


def compile_file(path, param_overrides=None) -> CompiledWorkflow:
    with open(path, encoding="utf-8") as fh:
        return compile_text(fh.read(), str(path), param_overrides)

