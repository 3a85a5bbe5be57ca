"""Re-checking a finished run from the evidence it left behind.

Constraints whose catalog type is d/p can be evaluated again after the
run: file existence from the preserved sandboxes, runtimes from the
attempt records, metamorphic relations by rerunning the registered
predicate.  Every recorded live outcome is recomputed and compared.
Outputs are also compared against the digests taken when the attempt
finished, which is how a file changed after the fact shows up.

The evidence is the sandbox root of a run made with ``keep_sandbox``:
attempt directories for real runs, ``manifest.json`` for simulated ones.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Mapping

from ..catalog import Component, classify
from ..constraints import (
    PRE_EXECUTION,
    Instance,
    PropertyEnvironment,
    Quantifier,
    Unevaluable,
    ValidityConstraint,
    ViolationReport,
    VcKind,
    dynamic_instances,
    instantiate_catalog,
    report_for,
    scope_for_tasks,
    static_instances,
)
from ..model import ClusterSpec, LogicalDaw
from ..probes import ProbeFailed
from ..properties import ComparisonOp, Direction, TargetKind
from .predicates import get_predicate
from .workspace import MANIFEST, DiskWorkspace, Sandbox, VirtualWorkspace

POSTHOC = "posthoc"


def is_posthoc(vc: ValidityConstraint) -> bool:
    """True for constraints of a d/p catalog entry (static instances keep their entry)."""
    if vc.metadata.posthoc:
        return True
    return vc.entry is not None and classify(vc.entry).posthoc


@dataclass
class PosthocCheck:
    constraint: str
    task: str | None
    sandbox: str | None
    when: str
    live: bool | None
    posthoc: bool | None
    observed: object = None
    detail: str = ""
    subject: Mapping[str, str] | None = None
    attempt: int | None = None

    @property
    def agrees(self) -> bool:
        return self.live == self.posthoc


def open_evidence(root) -> DiskWorkspace | VirtualWorkspace | None:
    if root is None or not os.path.isdir(root):
        return None
    if (Path(root) / MANIFEST).exists():
        return VirtualWorkspace.load(root)
    return DiskWorkspace(root)


def _as_report(run) -> dict:
    return run.to_json() if hasattr(run, "to_json") else dict(run)


def _sandbox(ws, rel: str) -> Sandbox:
    task, _, n = rel.rpartition("/attempt-")
    return ws.sandbox(task, int(n))


def _unpack(workflow, vcs):
    if isinstance(workflow, LogicalDaw):
        return workflow, list(vcs or []), {}
    return workflow.daw, list(vcs) if vcs is not None else workflow.constraints(), workflow.resolved_inputs()


class _Rechecker:
    def __init__(self, report: dict, daw: LogicalDaw, ws, cluster, input_paths):
        self.report = report
        self.daw = daw
        self.ws = ws
        self.cluster = cluster
        self.input_paths = input_paths

    def _env(self, task: str, sb: Sandbox | None, facts: dict, live: bool | None) -> PropertyEnvironment:
        ws = self.ws

        def probe(t, direction, label, name, arg):
            value = ws.probe(sb, direction, label, name, arg)
            if name == "file_exists" and value is False and live:
                raise ProbeFailed(f"{direction.value}put {label} was present during the run "
                                  f"but is missing from {sb.rel}")
            return value

        return PropertyEnvironment(cluster=self.cluster, daw=self.daw, task_facts={task: facts},
                                   input_paths=self.input_paths, label_probe=probe if sb is not None else None)

    def dynamic(self, vc: ValidityConstraint, task: str, node: str, rel: str, attempt: dict | None,
                live: bool | None) -> tuple[bool | None, object, str, dict]:
        """(holds, observed, detail, subject) of one live check, recomputed."""
        subject = {"task": task, "sandbox": rel}
        ref = vc.lhs
        facts: dict = {}
        if ref.kind is TargetKind.TASK and ref.name == "runtime_seconds":
            if attempt is None or attempt.get("runtime_s") is None:
                return None, None, "no runtime was recorded for this attempt", subject
            rt = Decimal(str(attempt["runtime_s"]))
            bound = Decimal(vc.rhs)
            ended = attempt.get("exit_code") is not None
            if not ended and vc.op in (ComparisonOp.LE, ComparisonOp.LT):
                # stopped while still running: the real runtime exceeds what was recorded
                return rt < bound, rt, "" if rt < bound else "stopped at the limit without finishing", subject
            return vc.op(rt, bound), rt, "", subject
        sb = None
        if self.ws is not None:
            sb = _sandbox(self.ws, rel)
            if not self.ws.has(sb):
                sb = None
        if ref.kind is TargetKind.TASK and ref.name == "metamorphic":
            fn = get_predicate(ref.arg)
            if fn is None:
                return None, None, f"predicate {ref.arg!r} is not registered in this process", subject
            if sb is None:
                return None, None, f"sandbox {rel} was not preserved", subject
            workdir = self.ws.materialize(sb)
            try:
                facts[("metamorphic", ref.arg)] = bool(fn(workdir / "inputs", workdir / "outputs"))
            finally:
                self.ws.release(workdir)
        elif ref.kind is TargetKind.LABEL and sb is None:
            return None, None, f"sandbox {rel} was not preserved", subject
        scope = scope_for_tasks(self.daw, [task], 0, {task: node})
        try:
            inst = dynamic_instances(vc, scope, self._env(task, sb, facts, live))
        except Unevaluable as exc:
            subject.update(exc.subject)
            return None, None, str(exc), subject
        failing = [i for i in inst if not i.holds]
        if failing:
            subject.update(failing[0].subject)
            return False, failing[0].observed, "", subject
        return True, inst[0].observed if inst else None, "", subject

    def static(self, vc: ValidityConstraint) -> tuple[bool | None, object, str]:
        env = PropertyEnvironment(cluster=self.cluster, daw=self.daw, input_paths=self.input_paths)
        try:
            inst = static_instances(vc, self.daw, self.cluster, env)
        except Unevaluable as exc:
            return None, None, str(exc)
        holds = any(i.holds for i in inst) if vc.quantifier is Quantifier.AT_LEAST_ONE else all(i.holds for i in inst)
        bad = [i for i in inst if not i.holds]
        return holds, (bad or inst or [Instance({}, None, True)])[0].observed, ""


def posthoc_checks(run, workflow, root=None, *, vcs: Iterable[ValidityConstraint] | None = None,
                   cluster: ClusterSpec | None = None) -> list[PosthocCheck]:
    """Recompute every recorded outcome of a d/p constraint.

    ``run`` is a :class:`RunResult` or its JSON report; ``workflow`` a
    compiled workflow, or a DAW together with ``vcs``.  ``root`` defaults
    to the sandbox root named in the report.
    """
    report = _as_report(run)
    daw, vcs, input_paths = _unpack(workflow, vcs)
    by_id = {vc.id: vc for vc in vcs if is_posthoc(vc)}
    ws = open_evidence(root or report.get("sandbox_root"))
    rc = _Rechecker(report, daw, ws, cluster, input_paths)
    schedule = report.get("schedule") or {}
    out: list[PosthocCheck] = []
    for task, rec in sorted(report.get("records", {}).items()):
        groups = []
        for a in rec.get("attempts", []):
            groups.append((a["sandbox"], a["node"], a, a.get("checks", [])))
        pre: dict[str, list] = {}
        for c in rec.get("prechecks", []):
            pre.setdefault(c.get("sandbox"), []).append(c)
        for rel, checks in pre.items():
            if rel is not None:
                groups.append((rel, schedule.get(task, ""), None, checks))
        for rel, node, attempt, checks in groups:
            for c in checks:
                vc = by_id.get(c["constraint"])
                if vc is None or vc.kind is not VcKind.DYNAMIC:
                    continue
                holds, observed, detail, subject = rc.dynamic(vc, task, node, rel, attempt, c["holds"])
                out.append(PosthocCheck(vc.id, task, rel, c["when"], c["holds"], holds, observed, detail,
                                        subject, attempt["number"] if attempt else None))
    if report.get("static_checks", True):
        setup_failed = {v["constraint"] for v in report.get("violations", []) if v["step"] == PRE_EXECUTION}
        for vc in by_id.values():
            if vc.kind is VcKind.STATIC:
                holds, observed, detail = rc.static(vc)
                out.append(PosthocCheck(vc.id, vc.lhs.task, None, "setup", vc.id not in setup_failed, holds,
                                        observed, detail, {"workflow": report.get("workflow", "*")}))
    return out


def digest_checks(run, root=None) -> list[tuple[str, str, str, str, str | None]]:
    """Outputs whose preserved copy no longer matches the digest taken at the end of the attempt.

    Yields ``(task, sandbox or 'store', label, recorded, current)``; files that are gone are left to
    the existence rechecks.
    """
    report = _as_report(run)
    ws = open_evidence(root or report.get("sandbox_root"))
    if ws is None:
        return []
    out = []
    for task, rec in sorted(report.get("records", {}).items()):
        for a in rec.get("attempts", []):
            sb = _sandbox(ws, a["sandbox"])
            if not ws.has(sb):
                continue
            for label, recorded in sorted(a.get("output_digests", {}).items()):
                current = ws.digest(sb, Direction.OUT, label)
                if current is not None and current != recorded:
                    out.append((task, a["sandbox"], label, recorded, current))
            if a.get("outcome") == "ok":
                for label, recorded in sorted(a.get("output_digests", {}).items()):
                    current = ws.store_digest(label)
                    if current is not None and current != recorded:
                        out.append((task, "store", label, recorded, current))
    return out


def recheck_posthoc(run, workflow, root=None, *, vcs: Iterable[ValidityConstraint] | None = None,
                    cluster: ClusterSpec | None = None) -> list[ViolationReport]:
    """Reports for everything the evidence no longer supports.

    A recheck that fails gives a violation, one that cannot be evaluated
    an unevaluable report.  Each report's detail says whether the live
    run saw the same.  A changed output is a checksum violation.
    """
    report = _as_report(run)
    daw, vcs, _ = _unpack(workflow, vcs)
    by_id = {vc.id: vc for vc in vcs}
    out = []
    for c in posthoc_checks(report, workflow, root, vcs=vcs, cluster=cluster):
        if c.posthoc:
            continue
        vc = by_id[c.constraint]
        live = {True: "held", False: "failed", None: "was unevaluable"}[c.live]
        detail = (c.detail + "; " if c.detail else "") + f"live {c.when}-check {live}"
        err = Unevaluable(c.detail, c.subject) if c.posthoc is None else None
        inst = [Instance(dict(c.subject or {}), c.observed, False)] if err is None else []
        r = report_for(vc, POSTHOC, inst, unevaluable=err, check_time=POSTHOC, detail=detail, attempt=c.attempt,
                       extra_subject=dict(c.subject or {}))
        out.append(r)
    for task, where, label, recorded, current in digest_checks(report, root):
        vc = instantiate_catalog("file/file-properties",
                                 {"label": label, "direction": "out", "property": "checksum", "op": "=",
                                  "value": recorded, "task": task},
                                 id=f"{task}:posthoc-digest-{label}", origin="engine")
        inst = [Instance({"task": task, "label": label, "file": f"{where}/outputs/{label}"
                          if where != "store" else f"store/{label}"}, current, False)]
        out.append(report_for(vc, POSTHOC, inst, component=Component.EE, check_time=POSTHOC,
                              detail="the preserved output differs from the one checked during the run"))
    return out


def agreement(checks: Iterable[PosthocCheck]) -> tuple[int, list[PosthocCheck]]:
    """(number of checks, those whose posthoc verdict differs from the live one)."""
    checks = list(checks)
    return len(checks), [c for c in checks if not c.agrees]


__all__ = ["PosthocCheck", "agreement", "digest_checks", "is_posthoc", "open_evidence", "posthoc_checks",
           "recheck_posthoc"]
