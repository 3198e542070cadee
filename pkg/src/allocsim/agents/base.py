"""Shared value types and the behaviour contract every decision backend fulfils."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

from ..scenario import HouseResource, ParticipantProfile, RatingTable
from .memory import AgentMemory, Utterance, update_relation

CHOOSE = "choose"
DECLINE = "decline"
QUIT = "quit"

INTENTS = ("honest", "deceptive", "withhold")


class BackendError(RuntimeError):
    """A backend could not produce an answer (transport failure, unparseable reply)."""


@dataclass(frozen=True)
class Decision:
    action: str
    resource_id: Optional[int] = None
    inspected: Optional[int] = None
    stages: Dict[str, Any] = field(default_factory=dict)
    reason: str = ""

    def to_dict(self) -> dict:
        return {"action": self.action, "resource_id": self.resource_id, "inspected": self.inspected,
                "stages": dict(self.stages), "reason": self.reason}


@dataclass(frozen=True)
class QueueSummary:
    """What a participant is told about one queue before choosing it."""

    index: int
    count: int
    size_min: float = 0.0
    size_max: float = 0.0
    rent_min: float = 0.0
    rent_max: float = 0.0
    orientation_score: float = 0.0
    floor_score: float = 0.0
    applicants: int = 0

    def describe(self) -> str:
        if self.count == 0:
            return f"Queue {self.index}: no houses left."
        return (
            f"Queue {self.index}: {self.count} houses, {self.size_min:g}-{self.size_max:g} m2, "
            f"rent {self.rent_min:.0f}-{self.rent_max:.0f}, {self.applicants} applicants."
        )


@dataclass(frozen=True)
class CommunicationPlan:
    intent: str
    audience: Optional[int]  # listener id, None for the forum
    goal: str = ""

    def __post_init__(self) -> None:
        if self.intent not in INTENTS:
            raise ValueError(f"unknown intent {self.intent!r}")


def scarcity_ratio(competitiveness: Any, queue: Optional[int] = None) -> float:
    """Resources per contender for ``queue`` (or overall); ``inf`` when unknown."""
    if competitiveness is None:
        return math.inf
    if queue is not None:
        return competitiveness.ratio_for(queue)
    return competitiveness.overall_ratio


class Backend:
    """Participant behaviour contract.

    ``deterministic`` backends must return identical results for identical
    inputs; the engine only relies on that for rule-based backends.
    """

    name = "base"
    deterministic = False

    def subjective_score(self, p: ParticipantProfile, r: HouseResource) -> float:
        raise NotImplementedError

    def select_queue(self, p: ParticipantProfile, summaries: Sequence[QueueSummary], memory: AgentMemory,
                     rating_table: RatingTable) -> int:
        raise NotImplementedError

    def decide(self, p: ParticipantProfile, visible: Sequence[HouseResource], memory: AgentMemory,
               competitiveness: Any, rating_table: RatingTable, queue: Optional[int] = None) -> Decision:
        raise NotImplementedError

    def plan(self, p: ParticipantProfile, memory: AgentMemory, competitiveness: Any,
             listener: Optional[int], rng: random.Random, queue: Optional[int] = None) -> CommunicationPlan:
        raise NotImplementedError

    def speak(self, p: ParticipantProfile, listener: Optional[int], history: Sequence[Utterance],
              memory: AgentMemory, competitiveness: Any, plan: CommunicationPlan,
              visible: Sequence[HouseResource], rating_table: RatingTable,
              relevant: Sequence[int] = (), topic: Optional[int] = None) -> Optional[Utterance]:
        raise NotImplementedError

    def assess(self, p: ParticipantProfile, incoming: Utterance, memory: AgentMemory,
               round_index: int = 0) -> Tuple[AgentMemory, Optional[str]]:
        raise NotImplementedError

    def reflect(self, memory: AgentMemory) -> AgentMemory:
        raise NotImplementedError

    def relate(self, p: ParticipantProfile, peer: int, outcomes: Sequence[str], memory: AgentMemory,
               exchange: Sequence[Utterance] = ()) -> AgentMemory:
        """Update the relation with ``peer`` after the verdicts in ``outcomes``."""
        return update_relation(memory, peer, outcomes)
