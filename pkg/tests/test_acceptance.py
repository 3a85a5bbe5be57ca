"""Acceptance criteria 1 to 9.

Each test records PASS or FAIL for its criterion; the lines are printed in
the terminal summary (see ``pytest_terminal_summary`` in conftest.py).
"""

from __future__ import annotations

import contextlib
import gc
import json
import os
import random
import shutil
import statistics
import subprocess
import sys
import time
from decimal import Decimal
from pathlib import Path

from dawcheck import catalog
from dawcheck.constraints import PRE_EXECUTION, Verdict
from dawcheck.engine import EngineConfig, RunStatus, real_defaults, run
from dawcheck.engine.explain import explain
from dawcheck.engine.posthoc import agreement, digest_checks, is_posthoc, posthoc_checks, recheck_posthoc
from dawcheck.lang import compile_file, compile_text
from dawcheck.model import (
    DawState, TaskState, count_executions, enumerate_executions, is_valid_state, trace_violations,
)
from dawcheck.sim import load_faults, simulate
from dawcheck.cluster import load_cluster

from conftest import DEMOS, ROOT, chain, cluster, diamond, independent, random_daw, with_profiles

SIM = DEMOS / "sim"
RESULTS: dict[int, tuple[bool, str]] = {}


@contextlib.contextmanager
def criterion(n: int, text: str):
    try:
        yield
    except BaseException:
        RESULTS[n] = (False, text)
        print(f"FAIL criterion {n}: {text}")
        raise
    RESULTS[n] = (True, text)
    print(f"PASS criterion {n}: {text}")


def _fasta(tmp_path: Path, bad: bool, keep: bool = False):
    root = tmp_path / "fasta"
    shutil.copytree(DEMOS / "fasta", root)
    wf = compile_file(root / "fasta.vcw")
    if bad:
        wf = wf.with_inputs({"reads": str(root / "data" / "bad")})
    cfg = real_defaults(sandbox_root=str(tmp_path / "sb"), keep_sandbox=keep)
    return wf, run(wf, config=cfg)


def _straggler(tmp_path: Path | None = None):
    wf = compile_file(SIM / "straggler.vcw")
    cfg = EngineConfig(keep_sandbox=tmp_path is not None, sandbox_root=str(tmp_path) if tmp_path else None)
    return wf, simulate(wf, load_cluster(SIM / "cluster-8g.json"), cfg, load_faults(SIM / "straggle.faults.json"))


# ---- 1 ---------------------------------------------------------------------------

def _as_document(daw) -> str:
    """A runnable document with the same user tasks and edges as ``daw``."""
    edges = [(a, b) for a, b in sorted(daw.deps) if a in daw.user_tasks() and b in daw.user_tasks()]
    outs = {t: [f"e{i}" for i, (a, _) in enumerate(edges) if a == t] for t in daw.user_tasks()}
    ins = {t: [f"e{i}" for i, (_, b) in enumerate(edges) if b == t] for t in daw.user_tasks()}
    lines = ["workflow w {"]
    for t in sorted(daw.user_tasks()):
        cmd = "touch " + " ".join(f"outputs/{o}" for o in outs[t]) if outs[t] else "true"
        lines.append(f'  task {t} {{ run: "{cmd}" outputs: [{", ".join(outs[t])}] inputs: [{", ".join(ins[t])}] }}')
    lines += [f"  dep e{i}: {a} -> {b}" for i, (a, b) in enumerate(edges)]
    return "\n".join(lines + ["}"])


def test_criterion_1_execution_enumeration(tmp_path):
    with criterion(1, "enumeration counts 1/3/13 and observed traces are enumerated executions"):
        t0 = time.perf_counter()
        assert count_executions(chain("a", "b", "c")) == 1
        assert count_executions(diamond()) == 3
        assert count_executions(independent(3)) == 13
        for daw in (chain("a", "b", "c"), diamond(), independent(3)):
            legal = enumerate_executions(daw)
            sim = simulate(with_profiles(daw), cluster(8))
            assert sim.trace.finished_sets() in legal
            text = _as_document(daw)
            wf = compile_text(text)
            real = run(wf, config=real_defaults(sandbox_root=str(tmp_path / daw.name)))
            assert real.status is RunStatus.CORRECT
            assert real.trace.finished_sets() in enumerate_executions(wf.daw)
        assert time.perf_counter() - t0 < 5


# ---- 2 ---------------------------------------------------------------------------

def _valid_by_clauses(daw, assignment) -> bool:
    # independent restatement of the state rules, clause by clause
    if set(assignment) != set(daw.tasks):
        return False
    if assignment[daw.start] is not TaskState.FINISHED:
        return False
    preds = {t: {a for a, b in daw.deps if b == t} for t in daw.tasks}
    for t, v in assignment.items():
        all_done = all(assignment[p] is TaskState.FINISHED for p in preds[t])
        if v is TaskState.FINISHED and not all_done:
            return False
        if v is TaskState.READY and not all_done:
            return False
        if v is TaskState.OPEN and all_done:
            return False
    return True


def test_criterion_2_state_validity_on_random_daws():
    with criterion(2, "1000 random DAWs: every state valid, every invalid mutation rejected"):
        rng = random.Random(2024)
        states = mutations = rejected = 0
        for _ in range(1000):
            daw = with_profiles(random_daw(rng, 10), None)
            result = simulate(daw, cluster(8, 8, 8))
            assert result.status is RunStatus.CORRECT
            assert trace_violations(daw, result.trace) == []
            for s in result.trace.states:
                states += 1
                assert is_valid_state(daw, s) and _valid_by_clauses(daw, dict(s.assignment))
                for t in sorted(daw.tasks):
                    for v in TaskState:
                        if v == s[t]:
                            continue
                        changed = {**s.assignment, t: v}
                        mutations += 1
                        expected = _valid_by_clauses(daw, changed)
                        assert is_valid_state(daw, DawState(changed)) == expected, (daw.deps, changed)
                        rejected += not expected
        assert states and rejected and mutations


# ---- 3 ---------------------------------------------------------------------------

def test_criterion_3_catalog_table(capsys):
    from dawcheck.cli import main

    with criterion(3, "classify --all matches the golden table byte for byte"):
        assert main(["classify", "--all"]) == 0
        out = capsys.readouterr().out
        assert out.encode() == (ROOT / "tests" / "golden" / "catalog.txt").read_bytes()
        assert catalog.render_table() == out


# ---- 4 ---------------------------------------------------------------------------

def test_criterion_4_fasta(tmp_path):
    with criterion(4, "FASTA good input passes; bad input fails with exit 3 before launch"):
        _, good = _fasta(tmp_path / "good", bad=False)
        assert good.status is RunStatus.CORRECT and good.exit_code == 0
        _, bad = _fasta(tmp_path / "bad", bad=True)
        assert bad.exit_code == 3
        assert not bad.records["count"].launched and "launch" not in bad.events.kinds()
        violated = [v for v in bad.violations if v.verdict is Verdict.VIOLATED]
        assert violated
        for v in violated:
            assert v.subject["task"] == "count"
            assert v.constraint_id == "count:require1"
            assert Path(v.subject["file"]).name == "sample1.fa"
        text = explain(violated)
        assert "count" in text and "sample1.fa" in text and "require" in text


# ---- 5 ---------------------------------------------------------------------------

def test_criterion_5_early_abort():
    with criterion(5, "early abort at t=0 saves exactly the counterfactual spend"):
        t0 = time.perf_counter()
        wf = compile_file(SIM / "early_abort.vcw")
        r = simulate(wf, load_cluster(SIM / "cluster-8g.json"))
        elapsed = time.perf_counter() - t0
        assert r.status is RunStatus.ABORTED_STATIC and r.exit_code == 2
        assert r.end_time == 0 and r.first_erroneous_step == PRE_EXECUTION
        assert not any(rec.launched for rec in r.records.values())
        assert r.savings.spend_s == 0
        assert r.savings.counterfactual_spend_s == Decimal(100)
        assert r.savings.savings_s == r.savings.counterfactual_spend_s
        assert elapsed < 1


# ---- 6 ---------------------------------------------------------------------------

def test_criterion_6_straggler_ladder():
    with criterion(6, "straggler killed at the limit; retry, reschedule, abort in order"):
        _, r = _straggler()
        launches = [e for e in r.events.events if e.kind == "launch" and e.payload.get("task") == "classify"]
        kills = [e for e in r.events.events if e.kind == "kill"]
        assert [k.t - l.t for l, k in zip(launches, kills)] == [Decimal(60)] * 3
        ladder = [(e.t, e.kind, e.payload.get("node")) for e in r.events.events
                  if e.kind in ("kill", "retry", "reschedule", "launch", "abort")
                  and e.payload.get("task") in ("classify", None)]
        assert ladder == [
            (Decimal(10), "launch", "n1"),
            (Decimal(70), "kill", "n1"), (Decimal(70), "retry", "n1"), (Decimal(70), "launch", "n1"),
            (Decimal(130), "kill", "n1"), (Decimal(130), "reschedule", None), (Decimal(130), "launch", "n2"),
            (Decimal(190), "kill", "n2"), (Decimal(190), "abort", None),
        ]
        assert [v.recovery[-1].action for v in r.violations] == [
            "retry_same_node", "reschedule_other_node", "abort_workflow"]
        assert all(v.entry == "task/ends-within-limits" for v in r.violations)
        assert r.status is RunStatus.FAILED and r.exit_code == 3


# ---- 7 ---------------------------------------------------------------------------

def _noop(n: int, contracts: bool) -> str:
    body = " require { } promise { }" if contracts else ""
    tasks = "".join(f'  task t{i} {{ run: "true"{body} }}\n' for i in range(n))
    return f"workflow noop {{\n{tasks}}}"


def test_criterion_7_empty_contracts_cost_nothing(tmp_path):
    with criterion(7, "empty contracts within 5% of no contracts (median of 10 interleaved runs)"):
        plain, empty = compile_text(_noop(20, False)), compile_text(_noop(20, True))
        assert plain.constraints() == empty.constraints()

        def timed(wf, tag):
            gc.collect()
            t0 = time.perf_counter()
            r = run(wf, config=real_defaults(sandbox_root=str(tmp_path / tag)))
            assert r.status is RunStatus.CORRECT
            return time.perf_counter() - t0

        for i in range(3):
            timed(plain, f"wa{i}")
            timed(empty, f"wb{i}")
        a, b = [], []
        for i in range(10):
            # alternate which variant goes first so drift cancels
            pair = [(plain, a, "a"), (empty, b, "b")]
            for wf, out, tag in pair if i % 2 == 0 else pair[::-1]:
                out.append(timed(wf, f"{tag}{i}"))
        ma, mb = statistics.median(a), statistics.median(b)
        assert abs(mb - ma) / ma <= 0.05, (ma, mb)


# ---- 8 ---------------------------------------------------------------------------

def test_criterion_8_simulation_is_deterministic(tmp_path):
    with criterion(8, "two simulate invocations give byte-identical reports and traces"):
        outs = []
        for i in range(2):
            trace = tmp_path / f"trace{i}.json"
            cmd = [sys.executable, "-m", "dawcheck.cli", "simulate", str(SIM / "straggler.vcw"),
                   "--cluster", str(SIM / "cluster-8g.json"), "--faults", str(SIM / "straggle.faults.json"),
                   "--seed", "11", "--format", "json"]
            env = {**os.environ, "PYTHONHASHSEED": str(i + 1)}
            proc = subprocess.run(cmd, capture_output=True, env=env, check=False)
            assert proc.returncode == 3, proc.stderr
            outs.append(proc.stdout)
        assert outs[0] == outs[1] and outs[0]
        _, a = _straggler()
        _, b = _straggler()
        assert a.dumps() == b.dumps() and a.trace_dumps() == b.trace_dumps()


# ---- 9 ---------------------------------------------------------------------------

def test_criterion_9_posthoc_reproduces_live_verdicts(tmp_path):
    with criterion(9, "posthoc rechecks agree with live verdicts and catch a tampered output"):
        checked = 0
        wf, good = _fasta(tmp_path / "good", bad=False, keep=True)
        wf_bad, bad = _fasta(tmp_path / "bad", bad=True, keep=True)
        wf_s, strag = _straggler(tmp_path / "strag")
        early_wf = compile_file(SIM / "early_abort.vcw")
        early = simulate(early_wf, load_cluster(SIM / "cluster-8g.json"),
                         EngineConfig(keep_sandbox=True, sandbox_root=str(tmp_path / "early")))
        for w, r in ((wf, good), (wf_bad, bad), (wf_s, strag), (early_wf, early)):
            checks = posthoc_checks(r, w)
            assert all(is_posthoc(vc) for vc in w.constraints() if vc.id in {c.constraint for c in checks})
            total, disagree = agreement(checks)
            assert disagree == [], disagree
            assert digest_checks(r) == []
            checked += total
        runtime = [c for c in posthoc_checks(strag, wf_s) if c.constraint == "classify:max-runtime"]
        assert len(runtime) == 3 and all(c.live is False and c.posthoc is False for c in runtime)
        assert recheck_posthoc(good, wf) == []
        assert checked >= 8

        target = Path(good.results["summary"])
        target.write_text("tampered\n")
        reports = recheck_posthoc(good, wf)
        assert any(r.verdict is Verdict.VIOLATED and "posthoc-digest" in r.constraint_id
                   and r.subject["task"] == "count" for r in reports)
        stored = json.loads(good.dumps())
        assert any("posthoc-digest" in r.constraint_id for r in recheck_posthoc(stored, wf))

