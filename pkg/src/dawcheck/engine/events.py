"""Structured event log: one JSON object per line.

Each record has ``t`` (run clock seconds), ``component`` (EE, S, RM or
M), ``kind`` and ``payload``.  The log level for the human-facing
``logging`` mirror comes from ``DAWCHECK_LOG_LEVEL`` (default WARNING).
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from decimal import Decimal
from typing import IO, Any

LOG_LEVEL_ENV = "DAWCHECK_LOG_LEVEL"

logger = logging.getLogger("dawcheck")


def configure_logging(level: str | None = None) -> None:
    level = (level or os.environ.get(LOG_LEVEL_ENV) or "WARNING").upper()
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
        logger.addHandler(handler)
    logger.setLevel(getattr(logging, level, logging.WARNING))


def jsonable(value: Any) -> Any:
    if isinstance(value, Decimal):
        return float(value)
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, (frozenset, set)):
        return sorted(jsonable(v) for v in value)
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    return value


@dataclass(frozen=True)
class Event:
    t: Decimal
    component: str
    kind: str
    payload: dict

    def to_json(self) -> dict:
        return {"t": jsonable(self.t), "component": self.component, "kind": self.kind,
                "payload": jsonable(self.payload)}

    def line(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


class EventLog:
    def __init__(self, sink: IO[str] | None = None):
        self.events: list[Event] = []
        self.sink = sink

    def emit(self, t, component: str, kind: str, **payload) -> Event:
        ev = Event(Decimal(t), component, kind, payload)
        self.events.append(ev)
        if self.sink is not None:
            self.sink.write(ev.line() + "\n")
        if logger.isEnabledFor(logging.INFO):
            logger.info("t=%s %s %s %s", ev.t, component, kind, json.dumps(ev.to_json()["payload"], sort_keys=True))
        return ev

    def kinds(self) -> list[str]:
        return [e.kind for e in self.events]

    def of_kind(self, *kinds: str) -> list[Event]:
        return [e for e in self.events if e.kind in kinds]

    def dumps(self) -> str:
        return "".join(e.line() + "\n" for e in self.events)
