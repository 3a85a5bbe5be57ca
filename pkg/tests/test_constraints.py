from __future__ import annotations

from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dawcheck.catalog import Severity, classify
from dawcheck.constraints import (
    PRE_EXECUTION, PropertyEnvironment, PropertyRef, Quantifier, Unevaluable, ValidityConstraint, Verdict,
    VcKind, ViolationReport, check_execution, check_setup, compute_scope, evaluate_dynamic, evaluate_static,
    instantiate_catalog, scope_for_tasks,
)
from dawcheck.model import END, START, Schedule, trace_from_finished_sets
from dawcheck.properties import ComparisonOp, Direction, TargetKind

from conftest import GIB, chain, cluster, diamond


def mem_vc(q: Quantifier, gib: int = 8) -> ValidityConstraint:
    return instantiate_catalog("setup/resource-availability",
                               {"property": "memory_bytes", "value": gib * GIB, "quantifier": q.value})


def test_static_boundary_and_quantifiers(tmp_path):
    assert evaluate_static(mem_vc(Quantifier.ALL), None, cluster(8))
    mixed = cluster(8, 4)
    assert not evaluate_static(mem_vc(Quantifier.ALL), None, mixed)
    assert evaluate_static(mem_vc(Quantifier.AT_LEAST_ONE), None, mixed)


def test_static_file_must_exist(tmp_path):
    vc = instantiate_catalog("setup/file-must-exist", {"path": "reference.fa"})
    env = PropertyEnvironment(cluster=cluster(8), file_root=str(tmp_path))
    assert not evaluate_static(vc, None, cluster(8), env)
    (tmp_path / "reference.fa").write_text(">x\nACGT\n")
    assert evaluate_static(vc, None, cluster(8), env)


def test_scopes():
    d = diamond()
    sched = Schedule({t: "n1" for t in d.tasks})
    trace = trace_from_finished_sets(d, [{START}, {START, "a", "b"}, {START, "a", "b", "c"},
                                         {START, "a", "b", "c", END}])
    s1 = compute_scope(trace, 1, d, sched)
    assert s1.executed == {"a", "b"}
    assert s1.incoming == {(START, "a"), (START, "b")}
    assert s1.outgoing == {("a", "c"), ("b", "c")}
    c = chain("a")
    t = trace_from_finished_sets(c, [{START}, {START, "a"}, {START, "a", END}])
    s = compute_scope(t, 1, c, Schedule({x: "n1" for x in c.tasks}))
    assert (s.executed, s.incoming, s.outgoing) == ({"a"}, {(START, "a")}, {("a", END)})
    assert compute_scope(t, 0, c, Schedule({x: "n1" for x in c.tasks})).executed == frozenset()


def test_empty_scope_holds_vacuously():
    vc = instantiate_catalog("task/ends-correctly", {})
    scope = scope_for_tasks(chain("a"), [], 0, {})
    assert evaluate_dynamic(vc, scope, PropertyEnvironment())


def test_dynamic_examples():
    d = chain("a")
    scope = scope_for_tasks(d, ["a"], 1, {"a": "n1"})
    runtime = instantiate_catalog("task/ends-within-limits", {"max_runtime": 3600})
    env = PropertyEnvironment(task_facts={"a": {("runtime_seconds", None): Decimal(3601)}})
    assert not evaluate_dynamic(runtime, scope, env)

    ok = instantiate_catalog("task/ends-correctly", {})
    env = PropertyEnvironment(task_facts={"a": {("exit_code", None): 0}})
    assert evaluate_dynamic(ok, scope, env)

    size = instantiate_catalog("file/file-properties", {"property": "file_size_bytes", "op": ">", "value": 0})
    env = PropertyEnvironment(label_facts={("a", "out", "a->__end__"): {("file_size_bytes", None): 0}})
    # synthetic labels are skipped unless named
    assert evaluate_dynamic(size, scope, env)
    named = instantiate_catalog("file/file-properties",
                                {"property": "file_size_bytes", "op": ">", "value": 0, "label": "a->__end__"})
    assert not evaluate_dynamic(named, scope, env)


def test_unobserved_property_is_unevaluable():
    vc = instantiate_catalog("task/ends-correctly", {})
    with pytest.raises(Unevaluable):
        evaluate_dynamic(vc, scope_for_tasks(chain("a"), ["a"], 1, {"a": "n1"}), PropertyEnvironment())


def test_check_setup_collects_every_violation():
    assert check_setup(chain("a"), cluster(8), []).correct
    verdict = check_setup(chain("a"), cluster(4), [mem_vc(Quantifier.ALL), mem_vc(Quantifier.ALL, 2)])
    assert not verdict.correct
    assert [v.constraint_id for v in verdict.violations] == ["setup/resource-availability"]
    assert verdict.violations[0].step == PRE_EXECUTION


def test_soft_static_violation_only_warns():
    vc = mem_vc(Quantifier.ALL).with_severity(Severity.SOFT)
    verdict = check_setup(chain("a"), cluster(4), [vc])
    assert verdict.correct
    assert verdict.warnings[0].verdict is Verdict.WARNED


def _four_step_chain():
    d = chain("a", "b", "c")
    sets = [{START}, {START, "a"}, {START, "a", "b"}, {START, "a", "b", "c"}, {START, "a", "b", "c", END}]
    return d, trace_from_finished_sets(d, sets), Schedule({t: "n1" for t in d.tasks})


def test_first_erroneous_step():
    d, trace, sched = _four_step_chain()
    vc = instantiate_catalog("task/ends-correctly", {})
    facts = {t: {("exit_code", None): 0} for t in ("a", "b", END)}
    facts["c"] = {("exit_code", None): 1}
    env = PropertyEnvironment(cluster=cluster(8), daw=d, task_facts=facts)
    verdict = check_execution(d, trace, sched, cluster(8), [], [vc], env)
    assert verdict.first_erroneous_step == 3
    assert verdict.step_correct[:3] == [True, True, True]
    assert [v.step for v in verdict.violations] == [3]
    assert verdict.at_step(3)[0].subject == {"task": "c"}


def test_empty_constraint_sets_are_correct():
    d, trace, sched = _four_step_chain()
    assert check_execution(d, trace, sched, cluster(8), [], []).correct


def test_setup_gate():
    d, trace, sched = _four_step_chain()
    verdict = check_execution(d, trace, sched, cluster(4), [mem_vc(Quantifier.ALL)], [])
    assert all(verdict.step_correct) and not verdict.correct


def test_operator_and_constant_are_checked():
    with pytest.raises(TypeError):
        ValidityConstraint("x", VcKind.DYNAMIC, PropertyRef(TargetKind.TASK, "stderr_empty"), ComparisonOp.GT,
                           True, classify("task/ends-correctly").with_severity(Severity.HARD))
    with pytest.raises(ValueError):
        ValidityConstraint("x", VcKind.DYNAMIC, PropertyRef(TargetKind.TASK, "exit_code"), ComparisonOp.EQ, 0,
                           classify("task/ends-correctly"))


def test_report_json_round_trip():
    verdict = check_setup(chain("a"), cluster(4), [mem_vc(Quantifier.AT_LEAST_ONE)])
    r = verdict.violations[0]
    assert r.subject == {"nodes": "n1"}
    assert ViolationReport.from_json(r.to_json()).to_json() == r.to_json()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=3), min_size=4, max_size=4),
       st.lists(st.sampled_from(["exit", "size", "runtime"]), min_size=1, max_size=3))
def test_evaluation_is_pure_and_monotone(codes, kinds):
    d, trace, sched = _four_step_chain()
    facts = {t: {("exit_code", None): c, ("runtime_seconds", None): Decimal(10 * c)}
             for t, c in zip(["a", "b", "c", END], codes)}
    env = PropertyEnvironment(cluster=cluster(8), daw=d, task_facts=facts)
    pool = {
        "exit": instantiate_catalog("task/ends-correctly", {}),
        "size": instantiate_catalog("task/ends-correctly", {"property": "exit_code", "op": "<=", "value": 1}),
        "runtime": instantiate_catalog("task/ends-within-limits", {"max_runtime": 15}),
    }
    vcs = [pool[k] for k in kinds]
    first = check_execution(d, trace, sched, cluster(8), [], vcs, env)
    again = check_execution(d, trace, sched, cluster(8), [], vcs, env)
    assert first.step_correct == again.step_correct
    bigger = check_execution(d, trace, sched, cluster(8), [], list(pool.values()), env)
    if not first.correct:
        assert not bigger.correct
    for a, b in zip(first.step_correct, bigger.step_correct):
        assert a or not b
