"""Plain-language diagnosis of violation reports."""

from __future__ import annotations

import re
import textwrap
from decimal import Decimal
from typing import Iterable, Mapping

from ..catalog import UnknownEntry, entry
from ..constraints import PRE_EXECUTION, Verdict, ViolationReport
from ..properties import format_bytes, format_decimal

NO_VIOLATIONS = "no violations"
_BYTES = re.compile(r"\d(?:[KMGTP]i?|B)\b")
_SECONDS = re.compile(r"\d(?:\.\d+)?[smh]\b")
_WIDTH = 88


def format_observed(observed, bound: str) -> str:
    """An observed value in the units its bound is written in."""
    if isinstance(observed, bool) or observed is None:
        return {True: "true", False: "false", None: "nothing"}[observed]
    if isinstance(observed, (int, float, Decimal)):
        if _BYTES.search(bound) and float(observed) == int(observed):
            return format_bytes(int(observed))
        if _SECONDS.search(bound):
            return format_decimal(Decimal(str(observed))) + "s"
    return str(observed)


def _objects(subject: Mapping[str, str]) -> str:
    order = ["task", "node", "nodes", "label", "direction", "file", "sandbox", "workflow"]
    keys = [k for k in order if k in subject] + sorted(k for k in subject if k not in order)
    return ", ".join(f"{k} {subject[k]}" for k in keys)


def _where(r: ViolationReport) -> str:
    if r.step == PRE_EXECUTION:
        return "before execution"
    if r.step == "posthoc":
        return "on post-hoc recheck"
    return f"at step {r.step}, {r.check_time}-check"


def _lead(r: ViolationReport, attempts: Mapping[str, int]) -> str:
    s = r.subject
    task = s.get("task")
    seen = format_observed(r.observed, r.bound)
    name = r.entry or ""
    if r.unevaluable:
        return (f"Constraint {r.constraint_id} could not be evaluated"
                + (f" for task {task}" if task else "") + ". Unevaluable constraints count as hard errors.")
    if name.endswith("resource-availability") and "nodes" in s:
        return (f"Task {task or '?'} needs {r.formula.split('.', 1)[-1].split(' ')[0]} {r.bound}, "
                f"but the best available node offers {seen} (nodes: {s['nodes']}).")
    if name.endswith("resource-availability") and task:
        return f"Task {task} asked for {r.bound} on node {s.get('node', '?')}, which has {seen}."
    if name == "task/ends-within-limits":
        n = attempts.get(task or "", r.attempt)
        tries = f" Attempt {r.attempt}" + (f" of {n}" if n else "") + "." if r.attempt else ""
        return (f"Task {task} did not finish within its limit (runtime {r.bound}); it had run {seen}"
                f"{' on node ' + s['node'] if 'node' in s else ''} when it was stopped. "
                f"It is a likely straggler.{tries}")
    if name == "setup/infrastructure-health":
        return (f"Node {s.get('node', '?')} stopped answering heartbeats"
                + (f" while task {task} ran on it" if task else "") + ".")
    if r.constraint_id.endswith(":spawn"):
        return f"The command of task {task} could not be started on node {s.get('node', '?')}."
    if "file" in s:
        return f"Contract {r.constraint_id} fails for file {s['file']}" + (f" of task {task}." if task else ".")
    return (f"Constraint {r.constraint_id} does not hold for {_objects(s)}: observed {seen}, "
            f"expected {r.bound}.")


def _consequence(r: ViolationReport) -> str:
    if r.verdict is Verdict.WARNED:
        return "This is a soft constraint, so it is only a warning: the run continued."
    if r.verdict is Verdict.RECOVERED:
        return "The engine recovered from it and the task later succeeded."
    if r.step == PRE_EXECUTION:
        return "This is a hard violation of the setup, so no task was started."
    if r.step == "posthoc":
        return "The preserved evidence no longer supports the live verdict."
    return "This is a hard violation."


def _classification(r: ViolationReport) -> str:
    m = r.metadata
    return (f"Classification: severity {m.severity.value}; affects {m.affected_object.value}; "
            f"type {m.vc_type.value}; checked {', '.join(t.value for t in m.times())}; "
            f"component {', '.join(c.value for c in m.components())}; recoverable {m.recoverable.value}.")


def _recovery(r: ViolationReport) -> str:
    if not r.recovery:
        return ""
    steps = ", then ".join(f"{s.action.replace('_', ' ')} ({s.outcome})" for s in r.recovery)
    return f"Recovery: {steps}."


def _remedy(r: ViolationReport) -> str:
    try:
        text = entry(r.entry).remedy if r.entry else ""
    except UnknownEntry:
        text = ""
    if r.entry == "file/file-properties" and r.check_time == "before":
        text = "fix or replace the input files named above; the task refuses to start on them"
    if r.unevaluable:
        text = "check that every property the constraint uses can be observed; " + (text or "fix the contract")
    return f"Suggested fix: {text}." if text else ""


def explain_one(r: ViolationReport, attempts: Mapping[str, int] | None = None) -> str:
    verdict = r.verdict.value.upper()
    head = f"{verdict} {r.constraint_id} ({r.entry or 'user contract'}) {_where(r)}, reported by {r.component.value}."
    parts = [head, _lead(r, attempts or {}), _consequence(r), f"Constraint: {r.formula}",
             f"Implicated: {_objects(r.subject)}.", _classification(r)]
    if r.detail:
        parts.append(f"Detail: {r.detail}")
    parts += [_recovery(r), _remedy(r)]
    return "\n".join(textwrap.fill(p, _WIDTH, subsequent_indent="  ") for p in parts if p)


def explain(reports: Iterable[ViolationReport], attempts: Mapping[str, int] | None = None) -> str:
    """One paragraph per report; ``attempts`` maps tasks to their attempt counts."""
    reports = list(reports)
    if not reports:
        return NO_VIOLATIONS + "\n"
    return "\n\n".join(explain_one(r, attempts) for r in reports) + "\n"


def explain_report(report: Mapping | list) -> str:
    """Diagnosis of a stored run report, or of a bare list of violation reports."""
    if isinstance(report, list):
        return explain([ViolationReport.from_json(v) for v in report])
    violations = [ViolationReport.from_json(v) for v in report.get("violations", [])]
    posthoc = [ViolationReport.from_json(v) for v in report.get("posthoc", []) or []]
    attempts = {t: len(r.get("attempts", [])) for t, r in (report.get("records") or {}).items()}
    lines = []
    if "status" in report:
        lines.append(f"Workflow {report.get('workflow', '?')}: {report['status']}")
        step = report.get("first_erroneous_step")
        if step is not None:
            lines.append(f"First erroneous step: {step}")
        if report.get("failure"):
            lines.append(f"Reason: {report['failure']}")
        lines.append("")
    body = explain(violations + posthoc, attempts)
    return "\n".join(lines) + body
