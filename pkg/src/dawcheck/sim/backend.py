"""Simulated execution: task behaviour comes from each task's sim profile."""

from __future__ import annotations

import random
from decimal import Decimal

from ..engine.coordinator import Callback, Completion
from ..engine.workspace import VFile, VirtualWorkspace
from ..model import ClusterSpec
from .clock import SimClock
from .faults import FaultScript

DEFAULT_OUTPUT_BYTES = 1024  # size of a declared output the profile does not describe


class SimulationError(ValueError):
    pass


def jitter_factor(seed: int, task: str, attempt: int, jitter: Decimal) -> Decimal:
    if not jitter:
        return Decimal(1)
    u = random.Random(f"{seed}:{task}:{attempt}").uniform(-1.0, 1.0)
    return Decimal(1) + Decimal(jitter) * Decimal(str(round(u, 6)))


def inject(faults: FaultScript, clock: SimClock, backend: "SimulatedBackend") -> list[int]:
    """Put the timed faults on the clock; returns their handles."""
    handles = []
    for f in faults.events:
        if f.kind == "straggle":
            continue
        handles.append(clock.schedule(f.at, Callback(f.kind, lambda f=f: backend.apply(f))))
    return handles


class SimulatedBackend:
    mode = "simulated"
    assume_installed = True

    def __init__(self, cluster: ClusterSpec, workspace: VirtualWorkspace, faults: FaultScript | None = None,
                 seed: int = 0, clock: SimClock | None = None):
        self.cluster = cluster
        self.workspace = workspace
        self.faults = faults or FaultScript()
        self.seed = seed
        self.clock = clock or SimClock()
        self.down: set[str] = set()
        self.revoked: set[str] = set()
        self.active: dict[tuple[str, int], object] = {}
        self.coordinator = None

    def licenses(self) -> frozenset[str]:
        return self.cluster.licenses - self.revoked

    def node_up(self, node: str) -> bool:
        return node not in self.down

    def watches_nodes(self) -> bool:
        return self.faults.has_crashes()

    def start(self, coordinator) -> None:
        self.coordinator = coordinator
        inject(self.faults, self.clock, self)

    def apply(self, fault) -> None:
        emit = self.coordinator.emit if self.coordinator else (lambda *a, **k: None)
        if fault.kind == "node_crash":
            self.down.add(fault.node)
            emit("M", "fault", fault="node_crash", node=fault.node)
            for key, run in sorted(self.active.items()):
                if run.node == fault.node:
                    self.clock.cancel(run.handle)
                    self.active.pop(key)
                    self.clock.schedule(self.clock.now(), Completion(key, None, "", None, lost=True))
        elif fault.kind == "node_recover":
            self.down.discard(fault.node)
            emit("M", "fault", fault="node_recover", node=fault.node)
        elif fault.kind == "file_corrupt":
            hits = self.workspace.corrupt(fault.label)
            emit("M", "fault", fault="file_corrupt", label=fault.label, copies=hits)
        elif fault.kind == "license_revoke":
            self.revoked.add(fault.name)
            emit("M", "fault", fault="license_revoke", license=fault.name)

    def launch(self, run, task_def, env) -> None:
        prof = task_def.sim_profile
        if prof is None:
            raise SimulationError(f"task {task_def.id} has no sim profile")
        if run.node in self.down:
            self.clock.schedule(self.clock.now(), Completion(run.key, None, "", None, lost=True))
            return
        factor = self.faults.straggle_factor(run.task) * jitter_factor(self.seed, run.task, run.tries, prof.jitter)
        duration = Decimal(prof.runtime_s) * factor
        run.handle = self.clock.schedule(self.clock.now() + duration,
                                         Completion(run.key, prof.exit_code, prof.stderr, prof.memory_bytes))
        self.active[run.key] = run

    def finalize(self, run, completion) -> None:
        self.active.pop(run.key, None)
        tdef = self.coordinator.daw.task_def(run.task)
        prof = tdef.sim_profile
        for label in tdef.outputs:
            spec = prof.output(label)
            if spec is None:
                f = VFile(DEFAULT_OUTPUT_BYTES, None, origin=f"{run.task}:{label}")
            elif spec.content is not None and not spec.empty:
                data = spec.content.encode()
                f = VFile(len(data), data, spec.corrupt, origin=f"{run.task}:{label}")
            else:
                f = VFile(spec.effective_size(), b"" if spec.empty else None, spec.corrupt,
                          origin=f"{run.task}:{label}")
            self.workspace.write_output(run.sandbox, label, f)

    def kill(self, run) -> None:
        self.clock.cancel(run.handle)
        self.active.pop(run.key, None)

    def sample(self, run) -> dict:
        prof = self.coordinator.daw.task_def(run.task).sim_profile
        return {"peak_memory_bytes": prof.memory_bytes} if prof is not None else {}

    def finish(self) -> None:
        self.workspace.save()
