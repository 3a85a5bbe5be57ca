"""Evaluation of compound contract clauses inside a task's sandbox."""

from __future__ import annotations

import glob
import os
import re
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from ..catalog import Severity, classify
from ..constraints import PropertyRef, Unevaluable, ValidityConstraint, VcKind
from ..lang.syntax import Atom, Builtin, ForAll, IfThen, ShellProbe
from ..properties import ComparisonOp, Direction, TargetKind

PROBE_TIMEOUT_S = 60
_TRANSCRIPT_LIMIT = 2000
_VAR = re.compile(r"\$(?:\{([A-Za-z_][A-Za-z0-9_]*)\}|([A-Za-z_][A-Za-z0-9_]*))")


@dataclass
class ClauseResult:
    holds: bool
    failing: list[str] = field(default_factory=list)  # bound files the clause failed for
    transcript: list[dict] = field(default_factory=list)


@dataclass
class ClauseContext:
    workdir: Path
    task: str
    atom_check: Callable[[ValidityConstraint], bool]  # evaluates a plain comparison for this task
    env: dict[str, str] = field(default_factory=dict)


def interpolate(command: str, bindings: dict[str, str]) -> str:
    """Replace ``$var`` and ``${var}`` of bound variables by the shell-quoted value."""
    def sub(m):
        name = m.group(1) or m.group(2)
        return shlex.quote(bindings[name]) if name in bindings else m.group(0)
    return _VAR.sub(sub, command)


def run_probe(command: str, ctx: ClauseContext, bindings: dict[str, str]) -> tuple[bool, dict]:
    env = dict(os.environ)
    env.update(ctx.env)
    command = interpolate(command, bindings)
    try:
        proc = subprocess.run(["/bin/sh", "-c", command], cwd=ctx.workdir, env=env, capture_output=True,
                              timeout=PROBE_TIMEOUT_S)
    except subprocess.TimeoutExpired:
        raise Unevaluable(f"probe timed out after {PROBE_TIMEOUT_S}s: {command}", {"task": ctx.task}) from None
    except OSError as exc:
        raise Unevaluable(f"probe could not start: {exc}", {"task": ctx.task}) from None
    record = {
        "command": command,
        "bindings": dict(sorted(bindings.items())),
        "exit_status": proc.returncode,
        "stdout": proc.stdout.decode("utf-8", "replace")[:_TRANSCRIPT_LIMIT],
        "stderr": proc.stderr.decode("utf-8", "replace")[:_TRANSCRIPT_LIMIT],
    }
    return proc.returncode == 0, record


def _atom_vc(atom: Atom, task: str) -> ValidityConstraint:
    meta = classify("file/file-properties").with_severity(Severity.HARD)
    return ValidityConstraint(f"{task}:inline", VcKind.DYNAMIC, atom.ref, atom.op, atom.value, meta, task=task)


def _builtin_vc(b: Builtin, task: str) -> ValidityConstraint:
    if b.name == "COMMAND_LOGGED_NO_ERROR":
        ref = PropertyRef(TargetKind.TASK, "logged_no_error")
    else:
        ref = PropertyRef(TargetKind.LABEL, "unchanged", direction=Direction.IN)
    meta = classify("task/ends-correctly").with_severity(Severity.HARD)
    return ValidityConstraint(f"{task}:{b.name.lower()}", VcKind.DYNAMIC, ref, ComparisonOp.EQ, True, meta,
                              task=task)


def evaluate_clause(clause, ctx: ClauseContext, bindings: dict[str, str] | None = None) -> ClauseResult:
    """Truth of a clause. ``IF_THEN(c, action)`` holds when ``c`` is false.

    Raises :class:`Unevaluable` when a probe cannot run or a property is unknown.
    """
    bindings = dict(bindings or {})
    if isinstance(clause, ShellProbe):
        ok, rec = run_probe(clause.command, ctx, bindings)
        return ClauseResult(ok, [], [rec])
    if isinstance(clause, IfThen):
        inner = evaluate_clause(clause.condition, ctx, bindings)
        failing = [bindings[k] for k in sorted(bindings)] if inner.holds else []
        return ClauseResult(not inner.holds, failing, inner.transcript)
    if isinstance(clause, ForAll):
        matches = sorted(glob.glob(clause.pattern, root_dir=str(ctx.workdir), recursive=True))
        result = ClauseResult(True)
        for m in matches:
            sub = evaluate_clause(clause.body, ctx, {**bindings, clause.var: m})
            result.transcript += sub.transcript
            if not sub.holds:
                result.holds = False
                result.failing += sub.failing or [m]
        if not matches:
            result.transcript.append({"pattern": clause.pattern, "matches": []})
        return result
    if isinstance(clause, Atom):
        return ClauseResult(ctx.atom_check(_atom_vc(clause, ctx.task)))
    if isinstance(clause, Builtin):
        return ClauseResult(ctx.atom_check(_builtin_vc(clause, ctx.task)))
    raise TypeError(f"not a clause: {clause!r}")


def needs_files(clause) -> bool:
    if isinstance(clause, (ShellProbe, ForAll)):
        return True
    if isinstance(clause, IfThen):
        return needs_files(clause.condition)
    return False

