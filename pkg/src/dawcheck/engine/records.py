"""What a run leaves behind: attempts, check outcomes, the trace and the verdict."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from decimal import Decimal

from ..constraints import Verdict, ViolationReport
from ..model import ExecutionTrace, Schedule
from .events import EventLog, jsonable

REPORT_VERSION = 1


class RunStatus(str, enum.Enum):
    CORRECT = "correct"
    FAILED = "failed"  # hard dynamic violation
    TASK_FAILED = "task-failed"  # a task failed and no constraint explains it
    ABORTED_STATIC = "aborted-static"


EXIT_CODES = {
    RunStatus.CORRECT: 0,
    RunStatus.TASK_FAILED: 1,
    RunStatus.ABORTED_STATIC: 2,
    RunStatus.FAILED: 3,
}
EXIT_USAGE = 4


@dataclass
class CheckOutcome:
    constraint: str
    when: str  # before | during | after | posthoc
    holds: bool | None  # None: unevaluable
    t: Decimal
    observed: object = None
    sandbox: str | None = None  # set on before-checks of tries that never launched

    def to_json(self):
        out = {"constraint": self.constraint, "when": self.when, "holds": self.holds,
               "t": jsonable(self.t), "observed": jsonable(_plain(self.observed))}
        if self.sandbox is not None:
            out["sandbox"] = self.sandbox
        return out


def _plain(v):
    if isinstance(v, (bool, int, float, str, Decimal)) or v is None:
        return v
    return str(v)


@dataclass
class Attempt:
    number: int
    node: str
    start: Decimal
    end: Decimal | None = None
    exit_code: int | None = None
    outcome: str = "running"  # ok | failed | killed | lost | violated
    stdout_path: str | None = None
    stderr_path: str | None = None
    sandbox: str | None = None
    peak_memory_bytes: int | None = None
    runtime_s: Decimal | None = None
    stderr_tail: str = ""
    output_digests: dict[str, str] = field(default_factory=dict)
    output_sizes: dict[str, int] = field(default_factory=dict)
    input_digests: dict[str, str] = field(default_factory=dict)
    checks: list[CheckOutcome] = field(default_factory=list)

    def to_json(self):
        return {
            "number": self.number, "node": self.node, "start": jsonable(self.start), "end": jsonable(self.end),
            "exit_code": self.exit_code, "outcome": self.outcome, "stdout": self.stdout_path,
            "stderr": self.stderr_path, "sandbox": self.sandbox, "peak_memory_bytes": self.peak_memory_bytes,
            "runtime_s": jsonable(self.runtime_s), "stderr_tail": self.stderr_tail,
            "output_digests": dict(sorted(self.output_digests.items())),
            "output_sizes": dict(sorted(self.output_sizes.items())),
            "input_digests": dict(sorted(self.input_digests.items())),
            "checks": [c.to_json() for c in self.checks],
        }


@dataclass
class TaskRecord:
    task: str
    attempts: list[Attempt] = field(default_factory=list)
    prechecks: list[CheckOutcome] = field(default_factory=list)  # before-checks of tries never launched
    finished_step: int | None = None

    @property
    def launched(self) -> bool:
        return bool(self.attempts)

    def last(self) -> Attempt | None:
        return self.attempts[-1] if self.attempts else None

    def successful(self) -> Attempt | None:
        for a in reversed(self.attempts):
            if a.outcome == "ok":
                return a
        return None

    def to_json(self):
        return {"task": self.task, "finished_step": self.finished_step,
                "attempts": [a.to_json() for a in self.attempts],
                "prechecks": [c.to_json() for c in self.prechecks]}


@dataclass
class SavingsReport:
    spend_s: Decimal
    waste_s: Decimal
    savings_s: Decimal
    counterfactual_spend_s: Decimal | None = None

    def __post_init__(self):
        if self.savings_s < 0:
            raise ValueError("savings are never negative")

    def to_json(self):
        return {"spend_s": jsonable(self.spend_s), "waste_s": jsonable(self.waste_s),
                "savings_s": jsonable(self.savings_s),
                "counterfactual_spend_s": jsonable(self.counterfactual_spend_s)}


@dataclass
class RunResult:
    workflow: str
    mode: str
    status: RunStatus
    trace: ExecutionTrace
    records: dict[str, TaskRecord]
    violations: list[ViolationReport]
    schedule: Schedule | None
    events: EventLog
    seed: int = 0
    end_time: Decimal = Decimal(0)
    sandbox_root: str | None = None
    results: dict[str, str] = field(default_factory=dict)
    savings: SavingsReport | None = None
    failure: str = ""
    static_checks: bool = True
    workspace: object = field(default=None, repr=False, compare=False)  # evidence for posthoc rechecks

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.status]

    @property
    def first_erroneous_step(self) -> int | str | None:
        steps = [v.step for v in self.violations if v.hard and v.verdict is Verdict.VIOLATED]
        if not steps:
            return None
        if any(isinstance(s, str) for s in steps):
            return next(s for s in steps if isinstance(s, str))
        return min(steps)

    @property
    def warnings(self) -> list[ViolationReport]:
        return [v for v in self.violations if v.verdict is Verdict.WARNED]

    def attempts(self, task: str) -> list[Attempt]:
        rec = self.records.get(task)
        return rec.attempts if rec else []

    def spend(self) -> Decimal:
        return sum((a.runtime_s or Decimal(0) for r in self.records.values() for a in r.attempts), Decimal(0))

    def to_json(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "workflow": self.workflow,
            "mode": self.mode,
            "seed": self.seed,
            "status": self.status.value,
            "exit_code": self.exit_code,
            "first_erroneous_step": self.first_erroneous_step,
            "end_time": jsonable(self.end_time),
            "failure": self.failure,
            "static_checks": self.static_checks,
            "schedule": dict(sorted(self.schedule.assignment.items())) if self.schedule else None,
            "trace": {"finished": [sorted(s) for s in self.trace.finished_sets()],
                      "steps": [r.to_json() for r in self.trace.steps]},
            "violations": [v.to_json() for v in self.violations],
            "records": {t: self.records[t].to_json() for t in sorted(self.records)},
            "results": dict(sorted(self.results.items())),
            "sandbox_root": self.sandbox_root,
            "savings": self.savings.to_json() if self.savings else None,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n"

    def trace_dumps(self) -> str:
        return json.dumps(self.trace.to_json(), sort_keys=True) + "\n"
