"""Engine settings."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from decimal import Decimal


class Mode(str, enum.Enum):
    REAL = "real"
    SIMULATED = "simulated"


@dataclass(frozen=True)
class RetryPolicy:
    """The recovery ladder for hard violations.

    ``retry_limit`` retries on the same node, then up to
    ``reschedule_limit`` moves to another node, then abort.  Delays grow
    as ``backoff_base * 2**(n-1)`` capped at ``backoff_cap``.
    """

    retry_limit: int = 1
    reschedule_limit: int = 1
    backoff_base: Decimal = Decimal(0)
    backoff_cap: Decimal = Decimal(60)

    def __post_init__(self):
        if self.retry_limit < 0 or self.reschedule_limit < 0:
            raise ValueError("retry and reschedule limits must be >= 0")
        if self.backoff_base < 0 or self.backoff_cap < 0:
            raise ValueError("backoff must be >= 0")

    @property
    def max_attempts(self) -> int:
        return 1 + self.retry_limit + self.reschedule_limit

    def backoff(self, n: int) -> Decimal:
        if n <= 0 or not self.backoff_base:
            return Decimal(0)
        return min(self.backoff_cap, self.backoff_base * (2 ** (n - 1)))


@dataclass(frozen=True)
class EngineConfig:
    mode: Mode = Mode.SIMULATED
    max_parallel_tasks: int | None = None  # None: bounded by node capacity only
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    heartbeat_interval: Decimal = Decimal(10)
    heartbeat_threshold: int = 3
    poll_interval: Decimal = Decimal(5)
    sandbox_root: str | None = None
    keep_sandbox: bool = False
    seed: int = 0
    scheduler: str = "first-fit"
    static_checks: bool = True
    debug: bool = False

    def __post_init__(self):
        if not self.heartbeat_interval > 0 or not self.poll_interval > 0:
            raise ValueError("heartbeat and polling intervals must be > 0")
        if self.heartbeat_threshold < 1:
            raise ValueError("heartbeat threshold must be >= 1")
        if self.max_parallel_tasks is not None and self.max_parallel_tasks < 1:
            raise ValueError("max_parallel_tasks must be >= 1")

    def with_(self, **kw) -> "EngineConfig":
        return replace(self, **kw)


def real_defaults(**kw) -> EngineConfig:
    base = dict(mode=Mode.REAL, poll_interval=Decimal("0.05"), heartbeat_interval=Decimal(1))
    base.update(kw)
    return EngineConfig(**base)
