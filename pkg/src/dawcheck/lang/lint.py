"""Static advice about contracts that parse but are probably not meant."""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal

from ..properties import ComparisonOp, Direction, TargetKind, ValueType
from .syntax import Atom, Builtin, ForAll, IfThen, Pos, WorkflowDocument

_AFTER_ONLY = {"exit_code", "runtime_seconds", "peak_memory_bytes", "stderr_empty", "logged_no_error"}


@dataclass(frozen=True)
class LintFinding:
    code: str
    message: str
    pos: Pos
    level: str = "warning"

    def render(self, filename: str) -> str:
        return f"{filename}:{self.pos.line}:{self.pos.col}: {self.level}: {self.message} [{self.code}]"


def _trivial(atom: Atom) -> str | None:
    """'always' / 'never' for comparisons decided by the property's range alone."""
    spec = atom.ref.spec
    if not spec.nonnegative or spec.value_type not in (ValueType.INT, ValueType.DECIMAL):
        return None
    v = Decimal(atom.value)
    op = atom.op
    if (op is ComparisonOp.GE and v <= 0) or (op is ComparisonOp.GT and v < 0):
        return "always"
    if (op is ComparisonOp.LT and v <= 0) or (op in (ComparisonOp.LE, ComparisonOp.EQ) and v < 0):
        return "never"
    return None


def _interval(atoms: list[Atom]) -> bool:
    """True if the numeric comparisons in ``atoms`` can all hold together."""
    lo, lo_open, hi, hi_open = None, False, None, False
    for a in atoms:
        v = Decimal(a.value)
        if a.op in (ComparisonOp.GE, ComparisonOp.GT, ComparisonOp.EQ):
            strict = a.op is ComparisonOp.GT
            if lo is None or v > lo or (v == lo and strict):
                lo, lo_open = v, strict
        if a.op in (ComparisonOp.LE, ComparisonOp.LT, ComparisonOp.EQ):
            strict = a.op is ComparisonOp.LT
            if hi is None or v < hi or (v == hi and strict):
                hi, hi_open = v, strict
    if lo is None or hi is None:
        return True
    return lo < hi or (lo == hi and not lo_open and not hi_open)


def _atoms(clause):
    if isinstance(clause, Atom):
        yield clause
    elif isinstance(clause, IfThen):
        yield from _atoms(clause.condition)
    elif isinstance(clause, ForAll):
        yield from _atoms(clause.body)


def lint(doc: WorkflowDocument) -> list[LintFinding]:
    found: list[LintFinding] = []
    consumed = {lbl for t in doc.tasks for lbl in (t.inputs or ())}
    for i in doc.inputs:
        if i.label not in consumed:
            found.append(LintFinding("unused-input", f"workflow input {i.label!r} is not read by any task", i.pos))

    mentioned = set()
    for t in doc.tasks:
        mentioned.update(k for k, _ in t.params)
        for c in (t.contracts.requires + t.contracts.promises) if t.contracts else ():
            for a in _atoms(c):
                if a.ref.name == "config_param":
                    mentioned.add(a.ref.arg)
        if t.run:
            mentioned.update(p.name for p in doc.params if "$" + p.name in t.run or "${" + p.name + "}" in t.run)
    for a in doc.requires:
        if a.ref.name == "config_param":
            mentioned.add(a.ref.arg)
    for p in doc.params:
        if p.name not in mentioned and p.low is None:
            found.append(LintFinding("unused-param", f"parameter {p.name} is never referenced", p.pos))

    groups: dict[tuple, list[Atom]] = {}
    for a in doc.requires:
        _check_atom(a, "requires", found)
        if a.ref.spec.value_type in (ValueType.INT, ValueType.DECIMAL):
            groups.setdefault(("workflow", a.ref, a.quantifier), []).append(a)

    for t in doc.tasks:
        if t.sim is None and t.run is None:
            found.append(LintFinding("no-behaviour", f"task {t.id} has neither a command nor a sim block",
                                     t.pos, "info"))
        if t.contracts is None:
            continue
        for role, clauses in (("require", t.contracts.requires), ("promise", t.contracts.promises)):
            for c in clauses:
                if isinstance(c, Builtin) and role == "require":
                    found.append(LintFinding("builtin-in-require", f"{c.name}() only makes sense in promise", c.pos,
                                             "error"))
                for a in _atoms(c):
                    _check_atom(a, role, found, t.id)
                    if a.ref.spec.value_type in (ValueType.INT, ValueType.DECIMAL) and a is c:
                        groups.setdefault((t.id, role, a.ref), []).append(a)
                if isinstance(c, IfThen) and isinstance(c.condition, Atom):
                    found.append(LintFinding("if-then-atom",
                                             "IF_THEN around a plain comparison; write the negated comparison instead",
                                             c.pos, "info"))

    for key, atoms in groups.items():
        if len(atoms) > 1 and not _interval(atoms):
            found.append(LintFinding("contradiction",
                                     "comparisons on " + atoms[0].ref.render(atoms[0].static, atoms[0].quantifier)
                                     + " cannot all hold", atoms[-1].pos, "error"))
    return sorted(found, key=lambda f: (f.pos.line, f.pos.col, f.code))


def _check_atom(a: Atom, role: str, found: list[LintFinding], task: str | None = None) -> None:
    where = f" in task {task}" if task else ""
    trivial = _trivial(a)
    if trivial == "always":
        found.append(LintFinding("tautology", f"{a} always holds{where}", a.pos))
    elif trivial == "never":
        found.append(LintFinding("unsatisfiable", f"{a} can never hold{where}", a.pos, "error"))
    if role == "require":
        if a.ref.kind is TargetKind.LABEL and a.ref.direction is Direction.OUT:
            found.append(LintFinding("require-on-output",
                                     f"{a} is checked before the task runs, when its outputs do not exist yet",
                                     a.pos, "error"))
        if a.ref.kind is TargetKind.TASK and a.ref.name in _AFTER_ONLY:
            found.append(LintFinding("require-on-result",
                                     f"{a.ref.name} is only known once the task has run; move it to promise",
                                     a.pos, "error"))
        if a.ref.kind is TargetKind.LABEL and a.ref.name == "unchanged":
            found.append(LintFinding("require-on-result", "unchanged compares before and after; move it to promise",
                                     a.pos, "error"))
