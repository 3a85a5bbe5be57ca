from __future__ import annotations

import itertools
import math
from functools import lru_cache

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dawcheck.model import (
    END, START, F, O, R, DawState, LogicalDaw, Schedule, ScheduleError, StructureInvalid, apply_schedule,
    count_executions, enumerate_executions, initial_state, is_final, is_valid_state, next_states,
    state_from_finished, trace_from_finished_sets, trace_violations, validate_structure,
)

from conftest import chain, cluster, diamond, independent


@lru_cache(maxsize=None)
def fubini(n: int) -> int:
    # ordered set partitions, by the choice of the first block
    if n == 0:
        return 1
    return sum(math.comb(n, k) * fubini(n - k) for k in range(1, n + 1))


def ordered_partitions(items):
    """Every ordered set partition of ``items``, built directly."""
    items = list(items)
    if not items:
        yield ()
        return
    for k in range(1, len(items) + 1):
        for first in itertools.combinations(items, k):
            rest = [x for x in items if x not in first]
            for tail in ordered_partitions(rest):
                yield (frozenset(first),) + tail


def test_fubini_reference_values():
    assert [fubini(k) for k in range(5)] == [1, 1, 3, 13, 75]
    assert [sum(1 for _ in ordered_partitions(range(k))) for k in range(5)] == [1, 1, 3, 13, 75]


# ---- structure --------------------------------------------------------------

def test_chain_is_well_formed():
    assert validate_structure(chain("a")) == []


def test_end_with_outgoing_edge_is_rejected():
    daw = LogicalDaw.from_edges([(START, "a"), ("a", END), (END, "a")])
    rules = " ".join(e.message for e in validate_structure(daw))
    assert "end" in rules.lower()


def test_cycle_is_rejected():
    daw = LogicalDaw.from_edges([(START, "a"), ("a", "b"), ("b", "a"), ("b", END)])
    errors = validate_structure(daw)
    assert any("cycle" in e.message.lower() for e in errors)
    with pytest.raises(StructureInvalid):
        initial_state(daw)


def test_unreachable_task_is_rejected():
    daw = LogicalDaw.from_edges([(START, END), ("x", "y")])
    assert validate_structure(daw)


# ---- states -------------------------------------------------------------------

def test_initial_states():
    assert initial_state(chain("a")).assignment == {START: F, "a": R, END: O}
    assert initial_state(diamond()).assignment == {START: F, "a": R, "b": R, "c": O, END: O}
    single = LogicalDaw.from_edges([(START, END)])
    assert initial_state(single).assignment == {START: F, END: R}


def test_validity_of_hand_built_states():
    d = diamond()
    assert is_valid_state(d, initial_state(d))
    assert not is_valid_state(d, DawState({START: F, "a": O, "b": O, "c": R, END: O}))
    assert not is_valid_state(d, DawState({START: F, "a": F, "b": F, "c": O, END: O}))
    assert not is_valid_state(d, DawState({START: O, "a": O, "b": O, "c": O, END: O}))
    assert not is_valid_state(d, DawState({START: F, "a": R, "b": R, "c": O}))


def test_successors():
    d = diamond()
    succ = next_states(d, initial_state(d))
    assert {s.finished - {START} for s in succ} == {frozenset("a"), frozenset("b"), frozenset("ab")}
    assert len(next_states(chain("a"), initial_state(chain("a")))) == 1
    done = state_from_finished(d, d.tasks)
    assert next_states(d, done) == set() and is_final(d, done)


def test_next_states_rejects_invalid_state():
    d = diamond()
    with pytest.raises(ValueError):
        next_states(d, DawState({START: F, "a": F, "b": F, "c": O, END: O}))


# ---- enumeration oracles ------------------------------------------------------

def test_chain_has_one_execution():
    assert count_executions(chain("a")) == 1
    assert count_executions(chain("a", "b", "c")) == 1


def test_diamond_has_three_executions():
    traces = enumerate_executions(diamond())
    assert len(traces) == 3
    second = {t[1] - {START} for t in traces}
    assert second == {frozenset("a"), frozenset("b"), frozenset("ab")}


@pytest.mark.parametrize("k", [0, 1, 2, 3, 4])
def test_independent_tasks_give_ordered_bell_numbers(k):
    daw = independent(k)
    traces = enumerate_executions(daw)
    assert len(traces) == fubini(k)
    # the middle steps of each trace are exactly one ordered partition of the tasks
    expected = set()
    names = [f"t{i}" for i in range(k)]
    for part in ordered_partitions(names):
        sets, done = [frozenset({START})], {START}
        for block in part:
            done |= block
            sets.append(frozenset(done))
        sets.append(frozenset(done | {END}))
        expected.add(tuple(sets))
    assert traces == expected


def test_every_enumerated_trace_is_valid():
    for daw in (chain("a", "b"), diamond(), independent(3)):
        for sets in enumerate_executions(daw):
            assert trace_violations(daw, trace_from_finished_sets(daw, sets)) == []


def test_trace_violations_catch_bad_steps():
    d = diamond()
    start = frozenset({START})
    stutter = trace_from_finished_sets(d, [start, start])
    assert any("changes no task" in p for p in trace_violations(d, stutter))
    skip = trace_from_finished_sets(d, [start, start | {"a", "c"}])
    assert trace_violations(d, skip)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=1, max_value=6), st.data())
def test_enumeration_count_matches_recursive_count(n, data):
    # random layered DAWs; count by recursion over ready subsets, independently of the enumerator
    edges = set()
    names = [f"t{i}" for i in range(n)]
    for j in range(n):
        for i in range(j):
            if data.draw(st.booleans()):
                edges.add((names[i], names[j]))
    for t in names:
        if not any(b == t for _, b in edges):
            edges.add((START, t))
        if not any(a == t for a, _ in edges):
            edges.add((t, END))
    daw = LogicalDaw.from_edges(edges)
    preds = {t: {a for a, b in daw.deps if b == t} for t in daw.tasks}

    @lru_cache(maxsize=None)
    def count(done: frozenset) -> int:
        if done == daw.tasks:
            return 1
        ready = [t for t in daw.tasks if t not in done and preds[t] <= done]
        return sum(count(done | set(c)) for k in range(1, len(ready) + 1)
                   for c in itertools.combinations(ready, k))

    assert count_executions(daw) == count(frozenset({START}))


# ---- schedules ----------------------------------------------------------------

def test_apply_schedule():
    daw = chain("a")
    c = cluster(8)
    phys = apply_schedule(daw, c, Schedule({t: "n1" for t in daw.tasks}))
    assert all(phys.node_of(t).id == "n1" for t in daw.tasks)
    with pytest.raises(ScheduleError, match="a"):
        apply_schedule(daw, c, Schedule({START: "n1", END: "n1"}))
    with pytest.raises(ScheduleError, match="n9"):
        apply_schedule(daw, c, Schedule({t: "n9" for t in daw.tasks}))
