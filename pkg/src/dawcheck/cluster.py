"""Cluster description files.

A cluster file is JSON::

    {
      "nodes": [
        {"id": "n1", "memory": "8Gi", "cpu_cores": 4, "gpu_count": 0,
         "disk_free": "100Gi", "executables": ["grep", "sort"],
         "files": ["/ref/genome.fa"], "root": "/data", "alive": true}
      ],
      "licenses": ["tool-L"],
      "latency_s": {"n1->n2": 0.002}
    }

Byte quantities take an integer or a string with a binary or decimal
suffix.  ``executables`` may be omitted: real mode then consults the
host PATH and simulation treats every program as installed.
"""

from __future__ import annotations

import json
from typing import Any

from .model import ClusterSpec, NodeDescriptor
from .properties import QuantityError, parse_bytes


class ClusterFileError(ValueError):
    pass


_NODE_KEYS = {"id", "memory", "memory_bytes", "cpu_cores", "gpu_count", "disk_free", "disk_free_bytes",
              "executables", "files", "root", "alive", "licenses"}


def _bytes(value: Any, what: str) -> int:
    if isinstance(value, bool):
        raise ClusterFileError(f"{what} must be a byte quantity")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        try:
            return parse_bytes(value)
        except QuantityError as exc:
            raise ClusterFileError(f"{what}: {exc}") from None
    raise ClusterFileError(f"{what} must be a byte quantity, got {value!r}")


def _int(value: Any, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ClusterFileError(f"{what} must be an integer, got {value!r}")
    return value


def _strings(value: Any, what: str) -> frozenset[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ClusterFileError(f"{what} must be a list of strings")
    return frozenset(value)


def node_from_json(data: dict) -> NodeDescriptor:
    if not isinstance(data, dict) or "id" not in data:
        raise ClusterFileError(f"every node needs an 'id': {data!r}")
    unknown = set(data) - _NODE_KEYS
    if unknown:
        raise ClusterFileError(f"node {data['id']}: unknown field(s) {', '.join(sorted(unknown))}")
    nid = str(data["id"])
    mem = data.get("memory_bytes", data.get("memory", 0))
    disk = data.get("disk_free_bytes", data.get("disk_free", 0))
    execs = data.get("executables")
    try:
        return NodeDescriptor(
            nid,
            memory_bytes=_bytes(mem, f"node {nid} memory"),
            cpu_cores=_int(data.get("cpu_cores", 0), f"node {nid} cpu_cores"),
            gpu_count=_int(data.get("gpu_count", 0), f"node {nid} gpu_count"),
            disk_free_bytes=_bytes(disk, f"node {nid} disk_free"),
            installed_executables=None if execs is None else _strings(execs, f"node {nid} executables"),
            present_files=_strings(data.get("files", []), f"node {nid} files"),
            root=data.get("root"),
            alive=bool(data.get("alive", True)),
            licenses=_strings(data.get("licenses", []), f"node {nid} licenses"),
        )
    except ValueError as exc:
        if isinstance(exc, ClusterFileError):
            raise
        raise ClusterFileError(str(exc)) from None


def cluster_from_json(data: dict) -> ClusterSpec:
    if not isinstance(data, dict) or not isinstance(data.get("nodes"), list):
        raise ClusterFileError("a cluster file is an object with a 'nodes' list")
    nodes = tuple(node_from_json(n) for n in data["nodes"])
    latency = {}
    for key, value in (data.get("latency_s") or {}).items():
        a, sep, b = key.partition("->")
        if not sep:
            raise ClusterFileError(f"latency key {key!r} must look like 'n1->n2'")
        latency[(a, b)] = float(value)
    try:
        return ClusterSpec(nodes, latency, _strings(data.get("licenses", []), "licenses"))
    except ValueError as exc:
        raise ClusterFileError(str(exc)) from None


def cluster_to_json(cluster: ClusterSpec) -> dict:
    nodes = []
    for n in cluster.nodes:
        d = {"id": n.id, "memory_bytes": n.memory_bytes, "cpu_cores": n.cpu_cores, "gpu_count": n.gpu_count,
             "disk_free_bytes": n.disk_free_bytes, "files": sorted(n.present_files), "alive": n.alive,
             "licenses": sorted(n.licenses)}
        if n.installed_executables is not None:
            d["executables"] = sorted(n.installed_executables)
        if n.root is not None:
            d["root"] = n.root
        nodes.append(d)
    out = {"nodes": nodes, "licenses": sorted(cluster.licenses)}
    if cluster.latency_s:
        out["latency_s"] = {f"{a}->{b}": v for (a, b), v in sorted(cluster.latency_s.items())}
    return out


def parse_cluster(text: str) -> ClusterSpec:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ClusterFileError(f"cluster file is not valid JSON: {exc}") from None
    return cluster_from_json(data)


def load_cluster(path) -> ClusterSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_cluster(fh.read())
