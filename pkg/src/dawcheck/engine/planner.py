"""Task-to-node assignment.

Only per-task fit is checked here; whether several tasks can share a
node at the same moment is decided at dispatch by the resource manager.
"""

from __future__ import annotations

from typing import Iterable

from ..model import ClusterSpec, LogicalDaw, NodeDescriptor, ResourceVector, Schedule

_DIMS = (("memory_bytes", "memory_bytes"), ("cpu_cores", "cpu_cores"),
         ("gpu_count", "gpu_count"), ("disk_bytes", "disk_free_bytes"))


class PlanningError(ValueError):
    def __init__(self, task: str, dimension: str, needed: int, best: int):
        super().__init__(f"task {task} fits no node: needs {dimension} {needed}, largest node offers {best}")
        self.task = task
        self.dimension = dimension
        self.needed = needed
        self.best = best


def shortfall(request: ResourceVector, node: NodeDescriptor) -> str | None:
    """First resource dimension in which ``node`` cannot hold ``request``."""
    for req_dim, node_dim in _DIMS:
        if getattr(request, req_dim) > getattr(node, node_dim):
            return req_dim
    return None


def fits(request: ResourceVector, node: NodeDescriptor) -> bool:
    return shortfall(request, node) is None


def _infeasible(task: str, req: ResourceVector, nodes: list[NodeDescriptor], allow: bool) -> str:
    dim = next(d for d in (shortfall(req, n) for n in nodes) if d)
    node_dim = dict(_DIMS)[dim]
    best = max(nodes, key=lambda n: getattr(n, node_dim))
    if not allow:
        raise PlanningError(task, dim, getattr(req, dim), getattr(best, node_dim))
    return best.id


def _live(cluster: ClusterSpec) -> list[NodeDescriptor]:
    return [n for n in cluster.nodes if n.alive] or list(cluster.nodes)


def _first_fit(daw: LogicalDaw, cluster: ClusterSpec, allow_infeasible: bool) -> dict[str, str]:
    order = {t: i for i, t in enumerate(daw.topological_order())}
    tasks = sorted(daw.user_tasks(), key=lambda t: (-daw.task_def(t).resource_request.memory_bytes, order[t]))
    nodes = _live(cluster)
    out = {}
    for t in tasks:
        req = daw.task_def(t).resource_request
        chosen = next((n.id for n in nodes if fits(req, n)), None)
        out[t] = chosen or _infeasible(t, req, nodes, allow_infeasible)
    return out


def _round_robin(daw: LogicalDaw, cluster: ClusterSpec, allow_infeasible: bool) -> dict[str, str]:
    nodes = _live(cluster)
    out = {}
    i = 0
    for t in daw.topological_order():
        if t in (daw.start, daw.end):
            continue
        req = daw.task_def(t).resource_request
        for k in range(len(nodes)):
            n = nodes[(i + k) % len(nodes)]
            if fits(req, n):
                out[t] = n.id
                i = (i + k + 1) % len(nodes)
                break
        else:
            out[t] = _infeasible(t, req, nodes, allow_infeasible)
    return out


POLICIES = {"first-fit": _first_fit, "round-robin": _round_robin}


def plan(daw: LogicalDaw, cluster: ClusterSpec, policy: str = "first-fit",
         allow_infeasible: bool = False) -> Schedule:
    """A total schedule; synthetic start/end go to the first node.

    With ``allow_infeasible`` a task that fits nowhere is placed on the
    node closest to fitting, leaving the violation to the dynamic checks.
    """
    try:
        fn = POLICIES[policy]
    except KeyError:
        raise ValueError(f"unknown scheduler policy {policy!r}; choose from {', '.join(POLICIES)}") from None
    assignment = fn(daw, cluster, allow_infeasible)
    first = cluster.nodes[0].id
    assignment[daw.start] = first
    assignment[daw.end] = first
    return Schedule(dict(sorted(assignment.items())))


def alternative(request: ResourceVector, cluster: ClusterSpec, exclude: Iterable[str],
                alive: dict[str, bool] | None = None) -> str | None:
    """First live node not in ``exclude`` that can hold ``request``."""
    exclude = set(exclude)
    for n in cluster.nodes:
        up = n.alive if alive is None else alive.get(n.id, n.alive)
        if n.id not in exclude and up and fits(request, n):
            return n.id
    return None
