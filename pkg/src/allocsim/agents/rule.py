"""Deterministic rule-based participant behaviour."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

from ..scenario import FEATURES, HouseResource, ParticipantProfile, RatingTable
from .base import (
    CHOOSE,
    DECLINE,
    QUIT,
    Backend,
    CommunicationPlan,
    Decision,
    QueueSummary,
    scarcity_ratio,
)
from .memory import (
    DEFAULT_TRUST_THRESHOLD,
    AgentMemory,
    Claim,
    Utterance,
    assess_with_report,
    reflect_memory,
)

CONDITION_ADJUSTMENT = {"good": 1.0, "neutral": 0.0, "bad": -2.0}
ASPIRATION = {"astute": 13.0, "neutral": 11.0, "conservative": 9.0}


def affordability_bonus(rent: float, budget: float) -> float:
    if budget <= 0:
        return 10.0 if rent <= 0 else 0.0
    return min(10.0, max(0.0, 10.0 * (1.0 - rent / budget)))


def objective_score(p: ParticipantProfile, r: HouseResource, rating_table: RatingTable) -> float:
    total = 0.0
    for feature in FEATURES:
        w = p.feature_weights.get(feature, 0.0)
        if w:
            total += w * rating_table.score(feature, getattr(r, feature))
    return total


def score_resource(
    p: ParticipantProfile,
    r: HouseResource,
    rating_table: RatingTable,
    subjective: Optional[Backend] = None,
) -> Tuple[float, float, float]:
    """Return ``(objective, subjective, overall)`` satisfaction of ``p`` with ``r``.

    The outer weight on the objective part is fixed to 1; feature weights
    already live inside the objective score.
    """
    u_o = objective_score(p, r, rating_table)
    if subjective is None:
        u_s = affordability_bonus(r.rent, p.rent_budget)
    else:
        u_s = float(subjective.subjective_score(p, r))
    return u_o, u_s, u_o + u_s


@dataclass
class RuleBackend(Backend):
    """Hand-written participant model.

    Every method is a pure function of its arguments; the only randomness is
    the ``rng`` handed to :meth:`plan`.
    """

    quit_threshold: float = 2.0
    affordability_cap: float = 1.2
    trust_threshold: float = DEFAULT_TRUST_THRESHOLD
    aspiration_decay: float = 0.8
    contested_discount: float = 0.8
    name: str = "rule"
    deterministic: bool = True

    # -- scoring -----------------------------------------------------------
    def subjective_score(self, p: ParticipantProfile, r: HouseResource) -> float:
        return affordability_bonus(r.rent, p.rent_budget)

    def affordable(self, p: ParticipantProfile, r: HouseResource) -> bool:
        return r.rent <= p.rent_budget * self.affordability_cap

    def perceived_score(self, p: ParticipantProfile, r: HouseResource, memory: Optional[AgentMemory],
                        rating_table: RatingTable) -> float:
        u = score_resource(p, r, rating_table)[2]
        if memory is not None:
            cond = memory.trusted_value(r.id, "condition")
            u += CONDITION_ADJUSTMENT.get(cond, 0.0)
        return u

    def aspiration(self, p: ParticipantProfile, memory: AgentMemory, ratio: float) -> float:
        level = ASPIRATION[p.personality] * self.aspiration_decay ** memory.declines
        if ratio < 1.0:
            level *= self.contested_discount
        return level

    # -- queue choice ------------------------------------------------------
    def expected_queue_score(self, p: ParticipantProfile, s: QueueSummary, rating_table: RatingTable) -> float:
        """Midpoint satisfaction scaled by the chance of getting a house at all."""
        if s.count <= 0 or s.rent_min > p.rent_budget * self.affordability_cap:
            return -math.inf
        size_mid = (s.size_min + s.size_max) / 2
        rent_mid = (s.rent_min + s.rent_max) / 2
        w = p.feature_weights
        u_o = (
            w.get("size", 0.0) * rating_table.score("size", size_mid)
            + w.get("rent", 0.0) * rating_table.score("rent", rent_mid)
            + w.get("orientation", 0.0) * s.orientation_score
            + w.get("floor", 0.0) * s.floor_score
        )
        odds = min(1.0, s.count / (s.applicants + 1))
        return (u_o + affordability_bonus(rent_mid, p.rent_budget)) * odds

    def select_queue(self, p, summaries, memory, rating_table) -> int:
        best, best_score = 0, -math.inf
        for s in summaries:
            score = self.expected_queue_score(p, s, rating_table)
            if score > best_score:
                best, best_score = s.index, score
        return best

    # -- resource choice ---------------------------------------------------
    def decide(self, p, visible, memory, competitiveness, rating_table, queue=None) -> Decision:
        """Pick a house in three stages: community, house type, house.

        Each stage ranks its groups by their best perceived score, so the
        final pick is the global argmax over affordable visible houses with
        ties going to the lowest resource id.
        """
        if not visible:
            return Decision(QUIT, reason="nothing visible")
        options = [r for r in visible if self.affordable(p, r)]
        if not options:
            return Decision(QUIT, reason="nothing affordable")
        scored = {r.id: self.perceived_score(p, r, memory, rating_table) for r in options}

        def rank(group: Sequence[HouseResource]) -> Tuple[float, int]:
            top = min(group, key=lambda r: (-scored[r.id], r.id))
            return (scored[top.id], -top.id)

        communities: Dict[int, List[HouseResource]] = {}
        for r in options:
            communities.setdefault(r.community_id, []).append(r)
        community = max(communities, key=lambda c: rank(communities[c]))

        types: Dict[str, List[HouseResource]] = {}
        for r in communities[community]:
            types.setdefault(rating_table.bucket("size", r.size), []).append(r)
        house_type = max(types, key=lambda t: rank(types[t]))

        best = min(types[house_type], key=lambda r: (-scored[r.id], r.id))
        stages = {"community": community, "type": house_type, "house": best.id}
        score = scored[best.id]
        if score < self.quit_threshold:
            return Decision(QUIT, stages=stages, reason=f"best score {score:.2f} below quit threshold")
        ratio = scarcity_ratio(competitiveness, queue)
        if score < self.aspiration(p, memory, ratio):
            return Decision(DECLINE, inspected=best.id, stages=stages,
                            reason=f"best score {score:.2f} below aspiration")
        return Decision(CHOOSE, resource_id=best.id, inspected=best.id, stages=stages)

    # -- social behaviour --------------------------------------------------
    def plan(self, p, memory, competitiveness, listener, rng, queue=None) -> CommunicationPlan:
        if listener is not None and memory.relation_with(listener) in ("competitor", "enemy"):
            return CommunicationPlan("withhold", listener, "keep my options to myself")
        contested = scarcity_ratio(competitiveness, queue) < 1.0
        draw = rng.random()
        if contested and draw < 1.0 - p.honesty:
            return CommunicationPlan("deceptive", listener, "steer others away from the house I want")
        return CommunicationPlan("honest", listener, "share what I know")

    def speak(self, p, listener, history, memory, competitiveness, plan, visible, rating_table,
              relevant=(), topic=None) -> Optional[Utterance]:
        broadcast = listener is None
        if plan.intent == "honest":
            entry = _top_trusted(memory, relevant, topic, visible)
            if entry is None:
                return None if broadcast else Utterance(p.id, listener, "Nothing new on my side.", (),
                                                        topic, "honest")
            claim = Claim(entry.resource_id, entry.attribute, entry.value, truthful=True)
            text = f"House {entry.resource_id}: {entry.attribute} is {entry.value}."
            return Utterance(p.id, listener, text, (claim,), topic, "honest")
        if plan.intent == "deceptive":
            favourite = self.favourite(p, visible, memory, rating_table)
            pool = [r for r in visible
                    if (topic is None or r.community_id == topic) and r.id != favourite]
            if pool:
                scores = {r.id: self.perceived_score(p, r, memory, rating_table) for r in pool}
                decoy = min(pool, key=lambda r: (scores[r.id], r.id))
                truthful = memory.trusted_value(decoy.id, "condition") == "good"
                claim = Claim(decoy.id, "condition", "good", truthful=truthful)
                text = f"House {decoy.id} is in great condition, worth a look."
                return Utterance(p.id, listener, text, (claim,), topic, "deceptive")
        if broadcast:
            return None
        return Utterance(p.id, listener, "Good luck with your search!", (), topic, "withhold")

    def favourite(self, p, visible, memory, rating_table) -> Optional[int]:
        """Current argmax house: best affordable one, else best visible one."""
        pool = [r for r in visible if self.affordable(p, r)] or list(visible)
        if not pool:
            return None
        return min(pool, key=lambda r: (-self.perceived_score(p, r, memory, rating_table), r.id)).id

    def assess(self, p, incoming, memory, round_index=0):
        memory, report = assess_with_report(incoming, memory, self.trust_threshold, round_index)
        return memory, report.outcome

    def reflect(self, memory: AgentMemory) -> AgentMemory:
        return reflect_memory(memory)


def _top_trusted(memory: AgentMemory, relevant: Sequence[int], topic: Optional[int],
                 visible: Sequence[HouseResource]):
    """Most recent trusted fact about a resource the audience cares about."""
    if topic is not None:
        in_topic = {r.id for r in visible if r.community_id == topic}
        wanted = set(relevant) & in_topic if relevant else in_topic
    else:
        wanted = set(relevant)
    fallback = None
    for e in reversed(memory.trusted):
        if e.resource_id in wanted:
            return e
        if fallback is None and topic is None:
            fallback = e
    return fallback
