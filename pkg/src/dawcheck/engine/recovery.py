"""What to do after a constraint breaks."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from ..catalog import Recoverable, Severity, VcMetadata
from .config import RetryPolicy


class RecoveryAction(str, enum.Enum):
    RETRY_SAME_NODE = "retry_same_node"
    RESCHEDULE_OTHER_NODE = "reschedule_other_node"
    ABORT_WORKFLOW = "abort_workflow"
    WARN_ONLY = "warn_only"


@dataclass(frozen=True)
class LadderState:
    retries: int = 0  # retries already spent on the current node
    reschedules: int = 0
    alternative_available: bool = False
    transient: bool = True  # could the same check pass if simply tried again?


def decide(meta: VcMetadata, state: LadderState, policy: RetryPolicy) -> RecoveryAction:
    """Pick the next rung of the ladder.

    soft                -> warn
    hard, not recoverable -> abort
    hard, maybe         -> retry on the same node, then move once, then abort
    hard, yes           -> move if another node can take the task, else retry, else abort
    """
    if meta.severity is Severity.SOFT:
        return RecoveryAction.WARN_ONLY
    if meta.recoverable is Recoverable.NO:
        return RecoveryAction.ABORT_WORKFLOW
    can_retry = state.retries < policy.retry_limit and state.transient
    can_move = state.reschedules < policy.reschedule_limit and state.alternative_available
    if meta.recoverable is Recoverable.MAYBE:
        if can_retry:
            return RecoveryAction.RETRY_SAME_NODE
        if can_move:
            return RecoveryAction.RESCHEDULE_OTHER_NODE
        return RecoveryAction.ABORT_WORKFLOW
    if can_move:
        return RecoveryAction.RESCHEDULE_OTHER_NODE
    if can_retry:
        return RecoveryAction.RETRY_SAME_NODE
    return RecoveryAction.ABORT_WORKFLOW
