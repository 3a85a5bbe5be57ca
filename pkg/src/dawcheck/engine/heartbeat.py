"""Heartbeat failure detector.

Nodes beat at every multiple of the interval.  A node is declared dead
at the ``threshold``-th consecutive missed beat and alive again at the
first beat it delivers afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from typing import Iterable


@dataclass(frozen=True)
class LivenessEvent:
    t: Decimal
    node: str
    alive: bool


class HeartbeatMonitor:
    def __init__(self, nodes: Iterable[str], interval: Decimal, threshold: int):
        if not interval > 0 or threshold < 1:
            raise ValueError("interval must be > 0 and threshold >= 1")
        self.interval = Decimal(interval)
        self.threshold = threshold
        self.missed = {n: 0 for n in nodes}
        self.dead: set[str] = set()
        self.last_beat: dict[str, Decimal] = {n: Decimal(0) for n in self.missed}

    def tick(self, t: Decimal, up: Iterable[str]) -> list[LivenessEvent]:
        """Account for the beat due at ``t``; ``up`` are the nodes able to send it."""
        up = set(up)
        events = []
        for node in sorted(self.missed):
            if node in up:
                self.missed[node] = 0
                self.last_beat[node] = t
                if node in self.dead:
                    self.dead.discard(node)
                    events.append(LivenessEvent(t, node, True))
            else:
                self.missed[node] += 1
                if self.missed[node] == self.threshold and node not in self.dead:
                    self.dead.add(node)
                    events.append(LivenessEvent(t, node, False))
        return events

    def age(self, node: str, now: Decimal) -> Decimal:
        return now - self.last_beat[node]

    def next_tick(self, after: Decimal) -> Decimal:
        """First beat time strictly after ``after``."""
        k = int(after // self.interval) + 1
        return self.interval * k

    def first_tick_at_or_after(self, t: Decimal) -> Decimal:
        k = -(-t // self.interval)
        return self.interval * max(int(k), 1)

    def quiet(self) -> bool:
        """No node is currently missing beats or declared dead."""
        return not self.dead and not any(self.missed.values())


def monitor_heartbeats(nodes: Iterable[str], interval, threshold: int,
                       outages: dict[str, list[tuple[Decimal, Decimal | None]]], until) -> list[LivenessEvent]:
    """Liveness events for scripted outages ``node -> [(down_at, up_at or None)]`` up to ``until``.

    A beat due at the same instant a node goes down counts as missed; one
    due at the instant it comes back counts as delivered.
    """
    interval, until = Decimal(interval), Decimal(until)
    mon = HeartbeatMonitor(nodes, interval, threshold)

    def up_at(node, t):
        for down, back in outages.get(node, ()):
            if Decimal(down) <= t and (back is None or t < Decimal(back)):
                return False
        return True

    events = []
    t = interval
    while t <= until:
        events += mon.tick(t, [n for n in mon.missed if up_at(n, t)])
        t += interval
    return events
