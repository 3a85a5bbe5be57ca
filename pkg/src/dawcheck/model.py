"""Logical and physical workflow DAGs and their step semantics.

A workflow state assigns every task one of three values: finished (F),
ready (R) or open (O).  A state is valid when the finished set contains
the start task and is closed under predecessors, the ready set is exactly
the unfinished tasks whose predecessors are all finished, and everything
else is open.  Because R and O are determined by F, a valid state is
identified by its finished set; :func:`state_from_finished` builds it.

Execution proceeds in steps.  Each step finishes a nonempty subset of the
ready tasks; :func:`enumerate_executions` lists every maximal sequence of
such steps and serves as the oracle for engine and simulator traces.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from decimal import Decimal
from itertools import combinations
from typing import TYPE_CHECKING, Iterable, Iterator, Mapping

if TYPE_CHECKING:
    from .lang.syntax import ContractSet

START = "__start__"
END = "__end__"


class TaskState(str, enum.Enum):
    FINISHED = "F"
    READY = "R"
    OPEN = "O"


F = TaskState.FINISHED
R = TaskState.READY
O = TaskState.OPEN


@dataclass(frozen=True)
class ResourceVector:
    memory_bytes: int = 0
    cpu_cores: int = 0
    gpu_count: int = 0
    disk_bytes: int = 0

    DIMENSIONS = ("memory_bytes", "cpu_cores", "gpu_count", "disk_bytes")

    def __post_init__(self):
        for dim in self.DIMENSIONS:
            if getattr(self, dim) < 0:
                raise ValueError(f"resource {dim} must be >= 0")

    def items(self) -> Iterator[tuple[str, int]]:
        for dim in self.DIMENSIONS:
            yield dim, getattr(self, dim)

    def is_zero(self) -> bool:
        return all(v == 0 for _, v in self.items())


@dataclass(frozen=True)
class OutputSpec:
    """A file a simulated task writes for one of its output labels."""

    label: str
    size_bytes: int = 0
    content: str | None = None
    corrupt: bool = False
    empty: bool = False

    def effective_size(self) -> int:
        return 0 if self.empty else self.size_bytes


@dataclass(frozen=True)
class SimProfile:
    runtime_s: Decimal = Decimal(0)
    memory_bytes: int = 0
    outputs: tuple[OutputSpec, ...] = ()
    exit_code: int = 0
    stderr: str = ""
    jitter: Decimal = Decimal(0)  # max relative runtime perturbation, drawn from the run seed

    def __post_init__(self):
        if self.runtime_s < 0:
            raise ValueError("runtime must be >= 0")
        if self.memory_bytes < 0:
            raise ValueError("memory use must be >= 0")
        for out in self.outputs:
            if out.size_bytes < 0:
                raise ValueError("output sizes must be >= 0")

    def output(self, label: str) -> OutputSpec | None:
        for out in self.outputs:
            if out.label == label:
                return out
        return None


@dataclass(frozen=True)
class TaskDef:
    id: str
    command: str | None = None
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    resource_request: ResourceVector = ResourceVector()
    max_runtime: Decimal | None = None
    contracts: ContractSet | None = None
    sim_profile: SimProfile | None = None
    params: Mapping[str, object] = field(default_factory=dict)
    licenses: tuple[str, ...] = ()

    def __post_init__(self):
        if self.max_runtime is not None and not self.max_runtime > 0:
            raise ValueError(f"task {self.id}: max_runtime must be > 0")

    @property
    def synthetic(self) -> bool:
        return self.id in (START, END)


@dataclass(frozen=True)
class StructuralError:
    rule: str
    subject: tuple[str, ...]
    message: str

    def __str__(self):
        return self.message


class StructureInvalid(ValueError):
    def __init__(self, errors: list[StructuralError]):
        self.errors = errors
        super().__init__("; ".join(str(e) for e in errors))


class BoundExceeded(RuntimeError):
    """Raised when enumeration would produce more traces than allowed."""


@dataclass(frozen=True)
class LogicalDaw:
    tasks: frozenset[str]
    deps: frozenset[tuple[str, str]]
    labels: Mapping[tuple[str, str], str]
    start: str = START
    end: str = END
    task_defs: Mapping[str, TaskDef] = field(default_factory=dict)
    name: str = "workflow"

    def __post_init__(self):
        preds: dict[str, list[str]] = {t: [] for t in self.tasks}
        succs: dict[str, list[str]] = {t: [] for t in self.tasks}
        for a, b in sorted(self.deps):
            if a in succs:
                succs[a].append(b)
            if b in preds:
                preds[b].append(a)
        object.__setattr__(self, "_preds", {t: tuple(v) for t, v in preds.items()})
        object.__setattr__(self, "_succs", {t: tuple(v) for t, v in succs.items()})

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[str, str]], labels=None, task_defs=None,
                   start: str = START, end: str = END, name: str = "workflow"):
        edges = list(edges)
        tasks = {start, end}
        for a, b in edges:
            tasks.update((a, b))
        labels = dict(labels or {})
        for e in edges:
            labels.setdefault(e, f"{e[0]}->{e[1]}")
        return cls(frozenset(tasks), frozenset(edges), labels, start, end,
                   dict(task_defs or {}), name)

    def preds(self, task: str) -> tuple[str, ...]:
        return self._preds[task]

    def succs(self, task: str) -> tuple[str, ...]:
        return self._succs[task]

    def incoming(self, task: str) -> list[tuple[str, str]]:
        return [(p, task) for p in self.preds(task)]

    def outgoing(self, task: str) -> list[tuple[str, str]]:
        return [(task, s) for s in self.succs(task)]

    def task_def(self, task: str) -> TaskDef:
        return self.task_defs.get(task) or TaskDef(id=task)

    def user_tasks(self) -> list[str]:
        return sorted(t for t in self.tasks if t not in (self.start, self.end))

    def topological_order(self) -> list[str]:
        indeg = {t: len(self.preds(t)) for t in self.tasks}
        frontier = sorted(t for t, d in indeg.items() if d == 0)
        order = []
        while frontier:
            t = frontier.pop(0)
            order.append(t)
            for s in self.succs(t):
                indeg[s] -= 1
                if indeg[s] == 0:
                    frontier.append(s)
            frontier.sort()
        return order


def _find_cycle(daw: LogicalDaw) -> list[str] | None:
    color = {t: 0 for t in daw.tasks}
    stack: list[str] = []

    def visit(t):
        color[t] = 1
        stack.append(t)
        for s in daw.succs(t):
            if color[s] == 1:
                return stack[stack.index(s):]
            if color[s] == 0:
                found = visit(s)
                if found:
                    return found
        stack.pop()
        color[t] = 2
        return None

    for t in sorted(daw.tasks):
        if color[t] == 0:
            found = visit(t)
            if found:
                return found
    return None


def _reach(start: str, step) -> set[str]:
    seen = {start}
    todo = [start]
    while todo:
        for n in step(todo.pop()):
            if n not in seen:
                seen.add(n)
                todo.append(n)
    return seen


def validate_structure(daw: LogicalDaw) -> list[StructuralError]:
    """Check the DAG invariants; an empty list means the workflow is well formed."""
    errors: list[StructuralError] = []
    for t in (daw.start, daw.end):
        if t not in daw.tasks:
            errors.append(StructuralError("missing-terminal", (t,), f"task {t!r} is not in the task set"))
    for a, b in sorted(daw.deps):
        for t in (a, b):
            if t not in daw.tasks:
                errors.append(StructuralError("unknown-task", (a, b), f"dependency {a}->{b} names unknown task {t!r}"))
        if a == b:
            errors.append(StructuralError("cycle", (a,), f"self-loop on task {a!r}"))
    if errors:
        return errors

    for p in daw.preds(daw.start):
        errors.append(StructuralError(
            "start-has-incoming", (p, daw.start),
            f"start task has incoming dependency {p}->{daw.start}"))
    for s in daw.succs(daw.end):
        errors.append(StructuralError(
            "end-has-outgoing", (daw.end, s),
            f"end task has outgoing dependency {daw.end}->{s}"))

    cycle = _find_cycle(daw)
    if cycle and len(cycle) > 1:
        errors.append(StructuralError("cycle", tuple(cycle), "cycle {" + ",".join(sorted(cycle)) + "}"))

    sources = set()
    for t in sorted(daw.tasks - {daw.start}):
        if not daw.preds(t):
            sources.add(t)
            errors.append(StructuralError(
                "multiple-sources", (t,), f"task {t!r} has no incoming dependency; only the start task may"))
    forward = _reach(daw.start, daw.succs)
    backward = _reach(daw.end, daw.preds)
    for t in sorted(daw.tasks):
        if t in sources:
            continue
        if t not in forward:
            errors.append(StructuralError("unreachable", (t,), f"task {t!r} is not reachable from start"))
        elif t not in backward:
            errors.append(StructuralError("dead-end", (t,), f"task {t!r} does not reach the end task"))

    for e in sorted(daw.deps):
        if e not in daw.labels:
            errors.append(StructuralError("unlabeled-dep", e, f"dependency {e[0]}->{e[1]} has no label"))
    for e in sorted(set(daw.labels) - daw.deps):
        errors.append(StructuralError("stray-label", e, f"label on non-existent dependency {e[0]}->{e[1]}"))
    return errors


def require_valid_structure(daw: LogicalDaw) -> None:
    errors = validate_structure(daw)
    if errors:
        raise StructureInvalid(errors)


@dataclass(frozen=True)
class DawState:
    assignment: Mapping[str, TaskState]

    def __getitem__(self, task: str) -> TaskState:
        return self.assignment[task]

    def tasks_in(self, value: TaskState) -> frozenset[str]:
        return frozenset(t for t, v in self.assignment.items() if v == value)

    @property
    def finished(self) -> frozenset[str]:
        return self.tasks_in(F)

    @property
    def ready(self) -> frozenset[str]:
        return self.tasks_in(R)

    def key(self) -> tuple[tuple[str, str], ...]:
        return tuple(sorted((t, v.value) for t, v in self.assignment.items()))

    def __hash__(self):
        return hash(self.key())

    def __eq__(self, other):
        return isinstance(other, DawState) and self.key() == other.key()

    def __repr__(self):
        return "DawState(" + ", ".join(f"{t}:{v}" for t, v in self.key()) + ")"

    def to_json(self) -> dict[str, str]:
        return dict(self.key())


def state_from_finished(daw: LogicalDaw, finished: Iterable[str]) -> DawState:
    done = frozenset(finished)
    assignment = {}
    for t in daw.tasks:
        if t in done:
            assignment[t] = F
        elif all(p in done for p in daw.preds(t)):
            assignment[t] = R
        else:
            assignment[t] = O
    return DawState(assignment)


def initial_state(daw: LogicalDaw) -> DawState:
    require_valid_structure(daw)
    return state_from_finished(daw, {daw.start})


def is_valid_state(daw: LogicalDaw, state: DawState) -> bool:
    if set(state.assignment) != set(daw.tasks):
        return False
    done = state.finished
    if daw.start not in done:
        return False
    for t in done:
        if any(p not in done for p in daw.preds(t)):
            return False
    return state == state_from_finished(daw, done)


def next_states(daw: LogicalDaw, state: DawState) -> set[DawState]:
    if not is_valid_state(daw, state):
        raise ValueError(f"not a valid state: {state!r}")
    ready = sorted(state.ready)
    out = set()
    for k in range(1, len(ready) + 1):
        for subset in combinations(ready, k):
            out.add(state_from_finished(daw, state.finished | set(subset)))
    return out


def is_final(daw: LogicalDaw, state: DawState) -> bool:
    return state.finished == daw.tasks


@dataclass(frozen=True)
class StepRecord:
    finished: frozenset[str]
    time: float = 0.0
    nodes: Mapping[str, str] = field(default_factory=dict)

    def to_json(self):
        return {
            "finished": sorted(self.finished),
            "time": self.time,
            "nodes": dict(sorted(self.nodes.items())),
        }


@dataclass(frozen=True)
class ExecutionTrace:
    """States S_0..S_n; step s is the transition that produced S_s."""

    states: tuple[DawState, ...]
    steps: tuple[StepRecord, ...] = ()

    def __post_init__(self):
        if self.steps and len(self.steps) != len(self.states) - 1:
            raise ValueError("need exactly one step record per transition")

    def executed(self, step: int) -> frozenset[str]:
        if step == 0:
            return frozenset()
        return self.states[step].finished - self.states[step - 1].finished

    def finished_sets(self) -> tuple[frozenset[str], ...]:
        return tuple(s.finished for s in self.states)

    def complete(self, daw: LogicalDaw) -> bool:
        return bool(self.states) and self.states[-1][daw.end] == F

    def __len__(self):
        return len(self.states)

    def to_json(self):
        return {
            "states": [s.to_json() for s in self.states],
            "steps": [r.to_json() for r in self.steps],
        }


def trace_violations(daw: LogicalDaw, trace: ExecutionTrace) -> list[str]:
    """Every way the trace breaks the execution rules (empty if it is a valid execution)."""
    problems = []
    if not trace.states:
        return ["empty trace"]
    if trace.states[0] != state_from_finished(daw, {daw.start}):
        problems.append("first state is not the initial state")
    for i, s in enumerate(trace.states):
        if not is_valid_state(daw, s):
            problems.append(f"state {i} is not valid")
    for i in range(1, len(trace.states)):
        before, after = trace.states[i - 1], trace.states[i]
        if before == after:
            problems.append(f"step {i} changes no task")
        for t in daw.tasks:
            a, b = before.assignment.get(t), after.assignment.get(t)
            if a == F and b != F:
                problems.append(f"step {i}: finished task {t} changed")
            elif a == R and b not in (F, R):
                problems.append(f"step {i}: ready task {t} became {b}")
            elif a == O and b not in (O, R):
                problems.append(f"step {i}: open task {t} became {b}")
    return problems


def enumerate_executions(daw: LogicalDaw, max_count: int = 100_000) -> set[tuple[frozenset[str], ...]]:
    """All complete executions, each as its sequence of finished sets.

    Traces are returned in the compact finished-set form; turn one into an
    :class:`ExecutionTrace` with :func:`trace_from_finished_sets`.
    """
    start = initial_state(daw)
    results: set[tuple[frozenset[str], ...]] = set()
    memo: dict[frozenset[str], int] = {}

    # count first so the bound fails fast instead of after materialising
    def count(done: frozenset[str]) -> int:
        if done in memo:
            return memo[done]
        if done == daw.tasks:
            return 1
        state = state_from_finished(daw, done)
        total = sum(count(n.finished) for n in next_states(daw, state))
        memo[done] = total
        return total

    n = count(start.finished)
    if n > max_count:
        raise BoundExceeded(f"{n} executions exceed the bound of {max_count}")

    def walk(prefix: list[frozenset[str]]):
        done = prefix[-1]
        if done == daw.tasks:
            results.add(tuple(prefix))
            return
        for nxt in next_states(daw, state_from_finished(daw, done)):
            prefix.append(nxt.finished)
            walk(prefix)
            prefix.pop()

    walk([start.finished])
    return results


def count_executions(daw: LogicalDaw) -> int:
    return len(enumerate_executions(daw))


def trace_from_finished_sets(daw: LogicalDaw, sets: Iterable[Iterable[str]]) -> ExecutionTrace:
    states = tuple(state_from_finished(daw, s) for s in sets)
    steps = tuple(StepRecord(states[i].finished - states[i - 1].finished) for i in range(1, len(states)))
    return ExecutionTrace(states, steps)


@dataclass(frozen=True)
class NodeDescriptor:
    id: str
    memory_bytes: int = 0
    cpu_cores: int = 0
    gpu_count: int = 0
    disk_free_bytes: int = 0
    installed_executables: frozenset[str] | None = None  # None: use the host PATH
    present_files: frozenset[str] = frozenset()
    root: str | None = None
    alive: bool = True
    licenses: frozenset[str] = frozenset()

    def __post_init__(self):
        for name in ("memory_bytes", "cpu_cores", "gpu_count", "disk_free_bytes"):
            if getattr(self, name) < 0:
                raise ValueError(f"node {self.id}: {name} must be >= 0")

    def capacity(self) -> ResourceVector:
        return ResourceVector(self.memory_bytes, self.cpu_cores, self.gpu_count, self.disk_free_bytes)


@dataclass(frozen=True)
class ClusterSpec:
    nodes: tuple[NodeDescriptor, ...]
    latency_s: Mapping[tuple[str, str], float] = field(default_factory=dict)
    licenses: frozenset[str] = frozenset()

    def __post_init__(self):
        if not self.nodes:
            raise ValueError("a cluster needs at least one node")
        ids = [n.id for n in self.nodes]
        if len(ids) != len(set(ids)):
            raise ValueError(f"duplicate node ids in {ids}")

    def node(self, node_id: str) -> NodeDescriptor:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]


@dataclass(frozen=True)
class Schedule:
    assignment: Mapping[str, str]

    def __getitem__(self, task: str) -> str:
        return self.assignment[task]

    def to_json(self):
        return dict(sorted(self.assignment.items()))


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class PhysicalDaw:
    daw: LogicalDaw
    cluster: ClusterSpec
    schedule: Schedule

    def node_of(self, task: str) -> NodeDescriptor:
        return self.cluster.node(self.schedule[task])


def apply_schedule(daw: LogicalDaw, cluster: ClusterSpec, schedule: Schedule) -> PhysicalDaw:
    missing = sorted(daw.tasks - set(schedule.assignment))
    if missing:
        raise ScheduleError(f"schedule has no node for task(s) {', '.join(missing)}")
    known = set(cluster.node_ids())
    for task, node in sorted(schedule.assignment.items()):
        if node not in known:
            raise ScheduleError(f"task {task} is scheduled on unknown node {node!r}")
    return PhysicalDaw(daw, cluster, schedule)
