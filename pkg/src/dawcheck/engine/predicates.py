"""User-registered metamorphic relations.

A relation is a named predicate over a finished attempt's input and
output directories.  Contracts refer to it as ``metamorphic("name")``;
the engine evaluates it after the task and records the truth value.
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable

Predicate = Callable[[Path, Path], bool]

_PREDICATES: dict[str, Predicate] = {}


def register_predicate(name: str, fn: Predicate | None = None):
    """Register ``fn(inputs_dir, outputs_dir) -> bool``; usable as a decorator."""
    def add(f: Predicate) -> Predicate:
        _PREDICATES[name] = f
        return f
    return add(fn) if fn is not None else add


def unregister_predicate(name: str) -> None:
    _PREDICATES.pop(name, None)


def get_predicate(name: str) -> Predicate | None:
    return _PREDICATES.get(name)


def registered() -> list[str]:
    return sorted(_PREDICATES)
