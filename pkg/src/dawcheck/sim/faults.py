"""Fault scripts for the simulator.

A script is a JSON document::

    {"events": [
        {"kind": "node_crash", "node": "n1", "at": 50},
        {"kind": "node_recover", "node": "n1", "at": 120},
        {"kind": "straggle", "task": "classify", "factor": 10},
        {"kind": "file_corrupt", "label": "reads", "at": 0},
        {"kind": "license_revoke", "name": "tool-L", "at": 30}
    ]}

Timed events must appear in nondecreasing time order.  ``straggle``
has no time: it slows every attempt of the task by ``factor``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import Decimal

KINDS = ("node_crash", "node_recover", "straggle", "file_corrupt", "license_revoke")
_FIELDS = {
    "node_crash": ("node", "at"),
    "node_recover": ("node", "at"),
    "straggle": ("task", "factor"),
    "file_corrupt": ("label",),
    "license_revoke": ("name", "at"),
}


class FaultScriptError(ValueError):
    pass


@dataclass(frozen=True)
class Fault:
    kind: str
    at: Decimal = Decimal(0)
    node: str | None = None
    task: str | None = None
    label: str | None = None
    name: str | None = None
    factor: Decimal = Decimal(1)

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        for key in _FIELDS[self.kind]:
            value = getattr(self, key)
            out[key] = float(value) if isinstance(value, Decimal) else value
        if self.kind == "file_corrupt" and self.at:
            out["at"] = float(self.at)
        return out


@dataclass(frozen=True)
class FaultScript:
    events: tuple[Fault, ...] = ()

    def __post_init__(self):
        last = Decimal(0)
        for f in self.events:
            if f.kind not in KINDS:
                raise FaultScriptError(f"unknown fault kind {f.kind!r}")
            if f.at < 0:
                raise FaultScriptError(f"{f.kind}: time must be >= 0")
            if f.kind == "straggle":
                if f.factor < 1:
                    raise FaultScriptError(f"straggle factor for {f.task} must be >= 1")
                continue
            if f.at < last:
                raise FaultScriptError(f"{f.kind} at {f.at} comes after an event at {last}; keep events in time order")
            last = f.at

    def of_kind(self, kind: str) -> list[Fault]:
        return [f for f in self.events if f.kind == kind]

    def straggle_factor(self, task: str) -> Decimal:
        factor = Decimal(1)
        for f in self.of_kind("straggle"):
            if f.task == task:
                factor *= f.factor
        return factor

    def has_crashes(self) -> bool:
        return bool(self.of_kind("node_crash"))

    def to_json(self) -> dict:
        return {"events": [f.to_json() for f in self.events]}


def _num(value, what) -> Decimal:
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise FaultScriptError(f"{what} must be a number, got {value!r}")
    try:
        return Decimal(str(value))
    except ArithmeticError:
        raise FaultScriptError(f"{what} must be a number, got {value!r}") from None


def fault_from_json(data: dict) -> Fault:
    if not isinstance(data, dict) or "kind" not in data:
        raise FaultScriptError(f"a fault needs a 'kind': {data!r}")
    kind = data["kind"]
    if kind not in KINDS:
        raise FaultScriptError(f"unknown fault kind {kind!r}; expected one of {', '.join(KINDS)}")
    missing = [k for k in _FIELDS[kind] if k not in data]
    if missing:
        raise FaultScriptError(f"{kind} needs {', '.join(missing)}")
    extra = set(data) - set(_FIELDS[kind]) - {"kind", "at"}
    if extra:
        raise FaultScriptError(f"{kind} does not take {', '.join(sorted(extra))}")
    kw = {"kind": kind}
    for key in ("node", "task", "label", "name"):
        if key in data:
            kw[key] = str(data[key])
    if "at" in data:
        kw["at"] = _num(data["at"], f"{kind}.at")
    if "factor" in data:
        kw["factor"] = _num(data["factor"], "straggle.factor")
    return Fault(**kw)


def parse_faults(text: str) -> FaultScript:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FaultScriptError(f"fault script is not valid JSON: {exc}") from None
    if isinstance(data, list):
        data = {"events": data}
    if not isinstance(data, dict) or not isinstance(data.get("events", []), list):
        raise FaultScriptError("fault script must be an object with an 'events' list")
    return FaultScript(tuple(fault_from_json(e) for e in data.get("events", [])))


def load_faults(path) -> FaultScript:
    with open(path, encoding="utf-8") as fh:
        return parse_faults(fh.read())
