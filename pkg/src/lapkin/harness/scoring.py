"""Weighted error score of a peg-transfer trial from pre-labeled events."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable


class ErrorKind(str, enum.Enum):
    FAILED_PICKUP = "failed_pickup"
    STRETCH_ON_PEGS = "stretch_pegs"
    STRETCH_HANDOFF = "stretch_handoff"
    DROP_RING = "drop"
    COLLISION = "collision"
    STRAW_DISPLACEMENT = "straw"


ERROR_WEIGHTS = {
    ErrorKind.FAILED_PICKUP: 2,
    ErrorKind.STRETCH_ON_PEGS: 2,
    ErrorKind.STRETCH_HANDOFF: 4,
    ErrorKind.DROP_RING: 5,
    ErrorKind.COLLISION: 3,
    ErrorKind.STRAW_DISPLACEMENT: 3,
}


@dataclass(frozen=True)
class TrialEvent:
    t: float
    kind: ErrorKind

    def __post_init__(self):
        object.__setattr__(self, "kind", ErrorKind(self.kind))


def score_trial(events: Iterable[TrialEvent]) -> int:
    return sum(ERROR_WEIGHTS[e.kind] for e in events)
