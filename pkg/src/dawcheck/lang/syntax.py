"""Syntax tree of workflow documents (``.vcw`` files).

Nodes compare structurally; source positions are carried along but are
excluded from equality so that ``parse(serialize(doc)) == doc``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from typing import Union

from ..catalog import Severity
from ..constraints import PropertyRef, Quantifier, render_constant
from ..properties import ComparisonOp


@dataclass(frozen=True)
class Pos:
    line: int = 0
    col: int = 0

    def __str__(self):
        return f"{self.line}:{self.col}"


NOPOS = Pos()


def _pos():
    return field(default=NOPOS, compare=False, repr=False)


@dataclass(frozen=True)
class Atom:
    ref: PropertyRef
    op: ComparisonOp
    value: object
    severity: Severity | None = None
    quantifier: Quantifier | None = None  # workflow-level node constraints only
    static: bool = False
    pos: Pos = _pos()

    def __str__(self):
        return (f"{self.ref.render(self.static, self.quantifier)} {self.op.value} "
                f"{render_constant(self.value, self.ref.spec)}")


@dataclass(frozen=True)
class ShellProbe:
    command: str
    severity: Severity | None = None
    pos: Pos = _pos()

    def __str__(self):
        return f"COND({render_constant(self.command)})"


@dataclass(frozen=True)
class IfThen:
    condition: "Clause"
    action: str  # "fail" | "warn"
    severity: Severity | None = None
    pos: Pos = _pos()

    def __str__(self):
        return f"IF_THEN({self.condition}, {self.action})"


@dataclass(frozen=True)
class ForAll:
    var: str
    pattern: str
    body: "Clause"
    severity: Severity | None = None
    pos: Pos = _pos()

    def __str__(self):
        return f"FOR_ALL({self.var}, ITER({render_constant(self.pattern)}), {self.body})"


BUILTINS = ("COMMAND_LOGGED_NO_ERROR", "INPUTS_NOT_CHANGED")


@dataclass(frozen=True)
class Builtin:
    name: str
    severity: Severity | None = None
    pos: Pos = _pos()

    def __str__(self):
        return f"{self.name}()"


Clause = Union[Atom, ShellProbe, IfThen, ForAll, Builtin]


@dataclass(frozen=True)
class ContractSet:
    requires: tuple[Clause, ...] = ()
    promises: tuple[Clause, ...] = ()

    def __bool__(self):
        return bool(self.requires or self.promises)


@dataclass(frozen=True)
class SimOutput:
    label: str
    size_bytes: int = 0
    empty: bool = False
    corrupt: bool = False
    content: str | None = None


@dataclass(frozen=True)
class SimBlock:
    runtime_s: Decimal = Decimal(0)
    memory_bytes: int = 0
    outputs: tuple[SimOutput, ...] = ()
    exit_code: int = 0
    stderr: str = ""
    jitter: Decimal = Decimal(0)


@dataclass(frozen=True)
class TaskBlock:
    id: str
    run: str | None = None
    inputs: tuple[str, ...] | None = None
    outputs: tuple[str, ...] | None = None
    resources: tuple[tuple[str, int], ...] = ()
    max_runtime: Decimal | None = None
    params: tuple[tuple[str, object], ...] = ()
    licenses: tuple[str, ...] = ()
    sim: SimBlock | None = None
    contracts: ContractSet | None = None
    pos: Pos = _pos()


@dataclass(frozen=True)
class DepDecl:
    label: str
    producer: str
    consumer: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class InputDecl:
    label: str
    path: str
    pos: Pos = _pos()


PARAM_TYPES = ("int", "decimal", "bool", "str", "bytes", "duration")


@dataclass(frozen=True)
class ParamDecl:
    name: str
    type: str
    default: object
    low: object = None
    high: object = None
    pos: Pos = _pos()


@dataclass(frozen=True)
class WorkflowDocument:
    name: str
    inputs: tuple[InputDecl, ...] = ()
    params: tuple[ParamDecl, ...] = ()
    requires: tuple[Atom, ...] = ()
    tasks: tuple[TaskBlock, ...] = ()
    deps: tuple[DepDecl, ...] = ()
    pos: Pos = _pos()

    def task(self, task_id: str) -> TaskBlock:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise KeyError(task_id)
