"""Entry point for real runs on this host."""

from __future__ import annotations

import shutil
import tempfile
from pathlib import Path
from typing import IO, Iterable

from ..constraints import ValidityConstraint
from ..model import ClusterSpec, LogicalDaw, Schedule
from .config import EngineConfig, Mode, real_defaults
from .coordinator import Coordinator
from .events import EventLog
from .records import RunResult
from .workspace import DiskWorkspace


def run(workflow, cluster: ClusterSpec | None = None, config: EngineConfig | None = None, *,
        schedule: Schedule | None = None, vcs: Iterable[ValidityConstraint] | None = None,
        log_sink: IO[str] | None = None, faults=None) -> RunResult:
    """Execute ``workflow`` (compiled, or a DAW plus ``vcs``).

    ``config.mode`` picks the backend; simulated runs are delegated to
    :func:`dawcheck.sim.simulate`.  Without a cluster, real mode uses a
    single node describing this host.
    """
    config = config or real_defaults()
    if config.mode is Mode.SIMULATED:
        from ..sim.simulate import simulate
        if cluster is None:
            raise ValueError("simulation needs a cluster description")
        return simulate(workflow, cluster, config, faults, schedule=schedule, vcs=vcs, log_sink=log_sink)
    from .local import LocalBackend, RealClock, local_cluster

    if isinstance(workflow, LogicalDaw):
        daw, vcs, params, inputs, name = workflow, list(vcs or []), {}, {}, workflow.name
    else:
        daw, params, inputs, name = workflow.daw, workflow.params, workflow.resolved_inputs(), workflow.name
        vcs = list(vcs) if vcs is not None else workflow.constraints()

    temp = config.sandbox_root is None
    root = Path(config.sandbox_root or tempfile.mkdtemp(prefix="dawcheck-run-")).resolve()
    root.mkdir(parents=True, exist_ok=True)
    cluster = cluster or local_cluster(root=str(root))
    workspace = DiskWorkspace(root, inputs)
    backend = LocalBackend(RealClock(), workspace, cluster)
    coord = Coordinator(daw, cluster, vcs, config, backend, schedule=schedule, params=params, input_paths=inputs,
                        log=EventLog(log_sink), workflow=name)
    result = coord.run()
    result.workspace = workspace
    with open(root / "events.jsonl", "w") as fh:
        fh.write(result.events.dumps())
    if not config.keep_sandbox:
        for t in daw.user_tasks():
            shutil.rmtree(root / t, ignore_errors=True)
        if temp and not result.results:
            shutil.rmtree(root, ignore_errors=True)
            result.sandbox_root = None
    return result
