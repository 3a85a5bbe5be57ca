from __future__ import annotations

import shutil
from decimal import Decimal
from pathlib import Path

import pytest

from dawcheck.catalog import Recoverable, Severity, classify
from dawcheck.constraints import PRE_EXECUTION, Verdict
from dawcheck.engine import (
    EngineConfig, Mode, PlanningError, RecoveryAction, RetryPolicy, RunStatus, decide, enforce_timeouts,
    monitor_heartbeats, plan, real_defaults, register_predicate, run,
)
from dawcheck.engine.heartbeat import HeartbeatMonitor
from dawcheck.engine.predicates import unregister_predicate
from dawcheck.engine.recovery import LadderState
from dawcheck.lang import compile_file, compile_text
from dawcheck.model import END, START, LogicalDaw, ResourceVector, TaskDef, trace_violations

from conftest import DEMOS, cluster, diamond, independent

GIB = 2**30


def _copy_fasta(tmp_path: Path) -> Path:
    dst = tmp_path / "fasta"
    shutil.copytree(DEMOS / "fasta", dst)
    return dst


# ---- planning -------------------------------------------------------------------

def _with_memory(daw: LogicalDaw, gib: dict[str, int]) -> LogicalDaw:
    defs = {t: TaskDef(t, resource_request=ResourceVector(memory_bytes=g * GIB)) for t, g in gib.items()}
    return LogicalDaw(daw.tasks, daw.deps, daw.labels, daw.start, daw.end, defs, daw.name)


def test_plan_places_tasks_that_fit():
    daw = _with_memory(independent(2), {"t0": 4, "t1": 4})
    sched = plan(daw, cluster(8))
    assert set(sched.assignment.values()) == {"n1"} and set(sched.assignment) == daw.tasks


def test_plan_names_the_task_that_fits_nowhere():
    daw = _with_memory(independent(1), {"t0": 16})
    with pytest.raises(PlanningError, match="t0"):
        plan(daw, cluster(8, 8))


def test_plan_of_empty_workflow():
    daw = LogicalDaw.from_edges([(START, END)])
    assert set(plan(daw, cluster(8)).assignment) == {START, END}


# ---- recovery ladder -------------------------------------------------------------

def test_recovery_decisions():
    policy = RetryPolicy(retry_limit=1, reschedule_limit=1)
    maybe = classify("task/ends-within-limits")
    assert decide(maybe, LadderState(), policy) is RecoveryAction.RETRY_SAME_NODE
    assert decide(maybe, LadderState(retries=1, alternative_available=True), policy) \
        is RecoveryAction.RESCHEDULE_OTHER_NODE
    assert decide(maybe, LadderState(retries=1), policy) is RecoveryAction.ABORT_WORKFLOW
    never = classify("task/executable-must-exist")
    assert decide(never, LadderState(), policy) is RecoveryAction.ABORT_WORKFLOW
    soft = classify("file/file-properties").with_severity(Severity.SOFT)
    assert decide(soft, LadderState(), policy) is RecoveryAction.WARN_ONLY
    yes = classify("task/resource-availability")
    assert yes.recoverable is Recoverable.YES
    assert decide(yes, LadderState(alternative_available=True), policy) is RecoveryAction.RESCHEDULE_OTHER_NODE
    assert decide(yes, LadderState(), policy) is RecoveryAction.RETRY_SAME_NODE


# ---- monitoring ------------------------------------------------------------------

def test_heartbeats_all_on_time():
    assert monitor_heartbeats(["n1", "n2"], 10, 3, {}, 200) == []


def test_heartbeat_death_and_return():
    events = monitor_heartbeats(["n1"], 10, 3, {"n1": [(Decimal(15), Decimal(100))]}, 200)
    assert [(e.t, e.alive) for e in events] == [(Decimal(40), False), (Decimal(100), True)]


def test_heartbeat_monitor_validates_arguments():
    with pytest.raises(ValueError):
        HeartbeatMonitor(["n1"], Decimal(0), 3)


def test_timeouts():
    running = {"a": (Decimal(0), Decimal(60)), "b": (Decimal(0), None), "c": (Decimal(30), Decimal(60))}
    assert enforce_timeouts(running, 10) == []
    hits = enforce_timeouts(running, 60)
    assert [(h.task, h.at) for h in hits] == [("a", Decimal(60))]


# ---- real runs -------------------------------------------------------------------

def test_real_diamond_run_is_a_valid_execution(tmp_path):
    text = """
    workflow d {
      task a { run: "echo a > outputs/x" outputs: [x] }
      task b { run: "echo b > outputs/y" outputs: [y] }
      task c { run: "cat inputs/x inputs/y > outputs/z" inputs: [x, y] outputs: [z]
               promise { out(z).line_count = 2  exit_code = 0 } }
      dep x: a -> c
      dep y: b -> c
    }"""
    result = run(compile_text(text), config=real_defaults(sandbox_root=str(tmp_path / "sb")))
    assert result.status is RunStatus.CORRECT, result.failure
    assert trace_violations(compile_text(text).daw, result.trace) == []
    assert Path(result.results["z"]).read_text() == "a\nb\n"


def test_fasta_good_input(tmp_path):
    wf = compile_file(_copy_fasta(tmp_path) / "fasta.vcw")
    result = run(wf, config=real_defaults(sandbox_root=str(tmp_path / "sb")))
    assert result.status is RunStatus.CORRECT and result.exit_code == 0
    assert Path(result.results["summary"]).read_text().split() == [
        "inputs/reads/sample1.fa:2", "inputs/reads/sample2.fa:1"]


def test_fasta_bad_input_never_launches(tmp_path):
    root = _copy_fasta(tmp_path)
    marker = tmp_path / "launched"
    text = (root / "fasta.vcw").read_text().replace(
        'run: "grep', f'run: "touch {marker}; grep')
    wf = compile_text(text, str(root / "fasta.vcw")).with_inputs({"reads": str(root / "data" / "bad")})
    result = run(wf, config=real_defaults(sandbox_root=str(tmp_path / "sb")))
    assert result.status is RunStatus.FAILED and result.exit_code == 3
    assert not marker.exists()
    assert result.records["count"].attempts == []
    assert "launch" not in result.events.kinds()
    # the before-check is retried once on the same node, then the run aborts
    reports = [v for v in result.violations if v.verdict is Verdict.VIOLATED]
    assert [r.recovery[-1].action for r in reports] == ["retry_same_node", "abort_workflow"]
    for v in reports:
        assert v.subject["task"] == "count"
        assert v.constraint_id == "count:require1"
        assert v.subject["file"].endswith("sample1.fa")
        assert v.check_time == "before"


def test_empty_output_fails_after_check(tmp_path):
    text = """
    workflow e {
      task convert { run: "true > outputs/image" outputs: [image]
                     promise { out(image).file_size_bytes > 0 } }
      task publish { run: "cat inputs/image" inputs: [image] }
      dep image: convert -> publish
    }"""
    result = run(compile_text(text), config=real_defaults(sandbox_root=str(tmp_path / "sb")))
    assert result.status is RunStatus.FAILED
    v = result.violations[-1]
    assert v.check_time == "after" and v.subject["task"] == "convert" and v.observed == 0
    assert result.first_erroneous_step == v.step
    assert "publish" not in {a for a, r in result.records.items() if r.launched}


def test_soft_violation_only_warns(tmp_path):
    text = """
    workflow s {
      task a { run: "echo hi > outputs/o" outputs: [o]
               promise { out(o).file_size_bytes > 1Ki [soft] } }
    }"""
    result = run(compile_text(text), config=real_defaults(sandbox_root=str(tmp_path / "sb")))
    assert result.status is RunStatus.CORRECT and result.exit_code == 0
    assert [v.verdict for v in result.violations] == [Verdict.WARNED]


def test_task_failure_without_constraint_is_exit_1(tmp_path):
    text = 'workflow f { task a { run: "exit 7" } }'
    result = run(compile_text(text), config=real_defaults(sandbox_root=str(tmp_path / "sb"),
                                                           retry=RetryPolicy(0, 0)))
    assert result.status is RunStatus.TASK_FAILED and result.exit_code == 1


def test_real_timeout_kills_task(tmp_path):
    text = 'workflow t { task slow { run: "sleep 5" max_runtime: 0.3s } }'
    result = run(compile_text(text), config=real_defaults(sandbox_root=str(tmp_path / "sb"),
                                                           retry=RetryPolicy(0, 0)))
    assert result.status is RunStatus.FAILED
    (att,) = result.attempts("slow")
    assert att.outcome in ("killed", "violated") and att.exit_code is None
    assert Decimal("0.3") <= att.runtime_s < Decimal(3)
    assert result.violations[0].entry == "task/ends-within-limits"


def test_metamorphic_relation(tmp_path):
    @register_predicate("copy-preserves")
    def same(inputs: Path, outputs: Path) -> bool:
        return (inputs / "x").read_bytes() == (outputs / "y").read_bytes()

    try:
        good = """
        workflow m {
          task a { run: "echo data > outputs/x" outputs: [x] }
          task b { run: "CMD" inputs: [x] outputs: [y] promise { metamorphic("copy-preserves") = true } }
          dep x: a -> b
        }"""
        ok = run(compile_text(good.replace("CMD", "cp inputs/x outputs/y")),
                 config=real_defaults(sandbox_root=str(tmp_path / "ok")))
        assert ok.status is RunStatus.CORRECT
        bad = run(compile_text(good.replace("CMD", "echo other > outputs/y")),
                  config=real_defaults(sandbox_root=str(tmp_path / "bad"), retry=RetryPolicy(0, 0)))
        assert bad.status is RunStatus.FAILED
        assert bad.violations[0].entry == "task/metamorphic-relation"
    finally:
        unregister_predicate("copy-preserves")


def test_static_memory_abort_in_real_mode(tmp_path):
    text = 'workflow big { task a { run: "true" resources { memory: 1Ti } } }'
    result = run(compile_text(text), config=real_defaults(sandbox_root=str(tmp_path / "sb")))
    assert result.status is RunStatus.ABORTED_STATIC and result.exit_code == 2
    assert result.first_erroneous_step == PRE_EXECUTION
    assert result.violations[0].subject.get("task") == "a"
    assert not any(r.launched for r in result.records.values())


def test_config_validation():
    with pytest.raises(ValueError):
        EngineConfig(poll_interval=Decimal(0))
    with pytest.raises(ValueError):
        RetryPolicy(retry_limit=-1)
    assert real_defaults().mode is Mode.REAL
