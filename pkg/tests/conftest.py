"""Shared builders for tests."""

from __future__ import annotations

import random
import sys
from decimal import Decimal
from pathlib import Path

import pytest

from dawcheck.model import END, START, ClusterSpec, LogicalDaw, NodeDescriptor, SimProfile, TaskDef

ROOT = Path(__file__).resolve().parent.parent
DEMOS = ROOT / "demos"
GIB = 2**30


def chain(*names: str) -> LogicalDaw:
    seq = [START, *names, END]
    return LogicalDaw.from_edges(zip(seq, seq[1:]), name="chain")


def diamond() -> LogicalDaw:
    edges = [(START, "a"), (START, "b"), ("a", "c"), ("b", "c"), ("c", END)]
    return LogicalDaw.from_edges(edges, name="diamond")


def independent(k: int) -> LogicalDaw:
    names = [f"t{i}" for i in range(k)]
    edges = [(START, n) for n in names] + [(n, END) for n in names]
    if not names:
        edges = [(START, END)]
    return LogicalDaw.from_edges(edges, name=f"indep{k}")


def with_profiles(daw: LogicalDaw, runtimes: dict[str, int] | None = None) -> LogicalDaw:
    runtimes = runtimes or {}
    defs = {t: TaskDef(t, sim_profile=SimProfile(runtime_s=Decimal(runtimes.get(t, 10))))
            for t in daw.user_tasks()}
    return LogicalDaw(daw.tasks, daw.deps, daw.labels, daw.start, daw.end, defs, daw.name)


def random_daw(rng: random.Random, max_tasks: int = 10) -> LogicalDaw:
    n = rng.randint(0, max_tasks)
    names = [f"t{i}" for i in range(n)]
    p = rng.random()
    edges = {(names[i], names[j]) for i in range(n) for j in range(i + 1, n) if rng.random() < p}
    for t in names:
        if not any(b == t for _, b in edges):
            edges.add((START, t))
        if not any(a == t for a, _ in edges):
            edges.add((t, END))
    if not names:
        edges.add((START, END))
    return LogicalDaw.from_edges(sorted(edges), name="random")


def cluster(*mems_gib: int, cores: int = 8) -> ClusterSpec:
    return ClusterSpec(tuple(NodeDescriptor(f"n{i + 1}", memory_bytes=m * GIB, cpu_cores=cores)
                             for i, m in enumerate(mems_gib)))


@pytest.fixture
def demos() -> Path:
    return DEMOS


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, text = results[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {text}")
