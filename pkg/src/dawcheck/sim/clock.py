"""Logical clock for the discrete-event simulation.

Time is a ``Decimal`` number of seconds.  Events at the same instant pop
in insertion order, so a run never depends on heap internals.
"""

from __future__ import annotations

import heapq
import itertools
from decimal import Decimal


class ClockError(ValueError):
    pass


class SimClock:
    def __init__(self, start: Decimal = Decimal(0)):
        self._now = Decimal(start)
        self._heap: list[tuple[Decimal, int, object]] = []
        self._seq = itertools.count()
        self._cancelled: set[int] = set()

    def now(self) -> Decimal:
        return self._now

    def schedule(self, at, item) -> int:
        at = Decimal(at)
        if at < self._now:
            raise ClockError(f"cannot schedule at {at}, the clock is already at {self._now}")
        seq = next(self._seq)
        heapq.heappush(self._heap, (at, seq, item))
        return seq

    def after(self, delay, item) -> int:
        return self.schedule(self._now + Decimal(delay), item)

    def cancel(self, handle: int | None) -> None:
        if handle is not None:
            self._cancelled.add(handle)

    def _drop_cancelled(self):
        while self._heap and self._heap[0][1] in self._cancelled:
            self._cancelled.discard(heapq.heappop(self._heap)[1])

    def peek_time(self) -> Decimal | None:
        self._drop_cancelled()
        return self._heap[0][0] if self._heap else None

    def pop(self, block: bool = True) -> tuple[Decimal, object] | None:
        self._drop_cancelled()
        if not self._heap:
            return None
        at, _, item = heapq.heappop(self._heap)
        self._now = at
        return at, item

    def pop_batch(self, block: bool = True) -> tuple[Decimal, list] | None:
        """Every event queued for the earliest pending instant."""
        first = self.pop(block)
        if first is None:
            return None
        t, item = first
        items = [item]
        while self.peek_time() == t:
            items.append(self.pop()[1])
        return t, items

    def items(self) -> list:
        """Live scheduled items in firing order."""
        return [item for _, seq, item in sorted(self._heap) if seq not in self._cancelled]

    def pending(self) -> int:
        return len(self._heap) - len(self._cancelled & {s for _, s, _ in self._heap})

    def empty(self) -> bool:
        return self.peek_time() is None
