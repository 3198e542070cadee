"""Trusted/suspicious agent memory with assessment, reflection and relation tracking."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

SOURCES = ("policymaker", "broadcast", "private", "self")

TRUST_SCORES: Dict[str, float] = {
    "friend": 0.9,
    "mate": 0.9,
    "colleague": 0.6,
    "stranger": 0.4,
    "competitor": 0.2,
    "enemy": 0.1,
}
DEFAULT_TRUST_THRESHOLD = 0.5
DEFAULT_REFLECTION_THRESHOLD = 10

# promotion/demotion ladder; mate sits level with friend, enemy below the ladder
_LADDER = ("competitor", "stranger", "colleague", "friend")
_PROMOTE_AFTER = 2
# reasons marking a claim already counted as false
_CAUGHT = ("contradicted by own observation", "contradicts trusted memory")


@dataclass(frozen=True)
class Claim:
    resource_id: int
    attribute: str
    value: str
    truthful: bool = True

    def to_dict(self) -> dict:
        return {"resource_id": self.resource_id, "attribute": self.attribute, "value": self.value,
                "truthful": self.truthful}


@dataclass(frozen=True)
class Utterance:
    speaker_id: int
    listener_id: Optional[int]  # None means a forum broadcast
    text: str
    claims: Tuple[Claim, ...] = ()
    topic: Optional[int] = None
    intent: str = "honest"

    @property
    def is_broadcast(self) -> bool:
        return self.listener_id is None

    def to_dict(self) -> dict:
        return {
            "speaker": self.speaker_id,
            "listener": self.listener_id,
            "topic": self.topic,
            "intent": self.intent,
            "text": self.text,
            "claims": [c.to_dict() for c in self.claims],
        }


@dataclass(frozen=True)
class MemoryEntry:
    source: str
    resource_id: int
    attribute: str
    value: str
    round: int = 0
    speaker: Optional[int] = None
    assessed: bool = False
    reason: Optional[str] = None

    @property
    def key(self) -> Tuple[int, str]:
        return (self.resource_id, self.attribute)


@dataclass(frozen=True)
class RelationState:
    relation: str = "stranger"
    note: str = ""
    moral: str = ""
    consistent: int = 0


@dataclass(frozen=True)
class AgentMemory:
    trusted: Tuple[MemoryEntry, ...] = ()
    suspicious: Tuple[MemoryEntry, ...] = ()
    short_term: Tuple[MemoryEntry, ...] = ()
    long_term: Tuple[Tuple[Tuple[int, str, str], ...], ...] = ()
    relations: Dict[int, RelationState] = field(default_factory=dict)
    declines: int = 0
    seen_posts: frozenset = frozenset()
    reflection_threshold: int = DEFAULT_REFLECTION_THRESHOLD
    notes: Tuple[str, ...] = ()  # free-text digest kept by language-model backends

    def trusted_value(self, resource_id: int, attribute: str) -> Optional[str]:
        for e in reversed(self.trusted):
            if e.resource_id == resource_id and e.attribute == attribute:
                return e.value
        return None

    def relation_with(self, peer: int) -> str:
        state = self.relations.get(peer)
        return state.relation if state else "stranger"

    def to_dict(self) -> dict:
        return {
            "trusted": [_entry_dict(e) for e in self.trusted],
            "suspicious": [_entry_dict(e) for e in self.suspicious],
            "short_term": len(self.short_term),
            "long_term": [list(map(list, d)) for d in self.long_term],
            "relations": {str(k): v.relation for k, v in sorted(self.relations.items())},
            "declines": self.declines,
            "notes": list(self.notes),
        }


def _entry_dict(e: MemoryEntry) -> dict:
    return {"source": e.source, "resource_id": e.resource_id, "attribute": e.attribute, "value": e.value,
            "round": e.round, "speaker": e.speaker, "reason": e.reason}


def initial_memory(relations: Dict[int, str], reflection_threshold: int = DEFAULT_REFLECTION_THRESHOLD) -> AgentMemory:
    return AgentMemory(
        relations={peer: RelationState(relation=rel) for peer, rel in relations.items()},
        reflection_threshold=reflection_threshold,
    )


def reflect_memory(memory: AgentMemory, threshold: Optional[int] = None) -> AgentMemory:
    """Fold short-term memory into a latest-wins digest once it outgrows ``threshold``."""
    threshold = memory.reflection_threshold if threshold is None else threshold
    if threshold < 1:
        raise ValueError("reflection threshold must be >= 1")
    if len(memory.short_term) <= threshold:
        return memory
    digest: Dict[Tuple[int, str], str] = {}
    for e in memory.short_term:
        digest[e.key] = e.value
    summary = tuple((rid, attr, val) for (rid, attr), val in sorted(digest.items()))
    return replace(memory, short_term=(), long_term=memory.long_term + (summary,))


def _remember(memory: AgentMemory, entries: Sequence[MemoryEntry]) -> AgentMemory:
    memory = replace(memory, short_term=memory.short_term + tuple(entries))
    return reflect_memory(memory)


def observe(memory: AgentMemory, entries: Iterable[MemoryEntry]) -> Tuple[AgentMemory, List[int]]:
    """Add first-hand (self/policymaker) facts to trusted memory.

    Hearsay contradicted by a new fact moves to suspicious.  Returns the new
    memory and the speakers whose claims were caught as false (one per claim).
    """
    entries = list(entries)
    trusted = list(memory.trusted)
    suspicious = list(memory.suspicious)
    liars: List[int] = []
    for e in entries:
        if e.source not in ("self", "policymaker"):
            raise ValueError("observe only accepts first-hand sources")
        keep = []
        for t in trusted:
            if t.key == e.key and t.value != e.value and t.speaker is not None:
                suspicious.append(replace(t, reason="contradicted by own observation"))
                liars.append(t.speaker)
            elif t.key == e.key and t.value == e.value and t.source == e.source:
                continue  # superseded by the fresh copy
            else:
                keep.append(t)
        trusted = keep
        updated = []
        for s in suspicious:
            if s.key == e.key and s.value != e.value and s.reason not in _CAUGHT:
                if s.speaker is not None:
                    liars.append(s.speaker)
                s = replace(s, reason=_CAUGHT[0])
            updated.append(s)
        suspicious = updated
        trusted.append(e)
    memory = replace(memory, trusted=tuple(trusted), suspicious=tuple(suspicious))
    return _remember(memory, entries), liars


@dataclass(frozen=True)
class AssessmentReport:
    promoted: int = 0
    kept_suspicious: int = 0
    confirmed: int = 0
    contradicted: int = 0

    @property
    def outcome(self) -> Optional[str]:
        """Listener-visible verdict on the exchange: ``"lie"``, ``"truthful"`` or None."""
        if self.contradicted:
            return "lie"
        if self.confirmed:
            return "truthful"
        return None


def assess_with_report(
    incoming: Utterance,
    memory: AgentMemory,
    trust_threshold: float = DEFAULT_TRUST_THRESHOLD,
    round_index: int = 0,
) -> Tuple[AgentMemory, AssessmentReport]:
    source = "broadcast" if incoming.is_broadcast else "private"
    relation = memory.relation_with(incoming.speaker_id)
    trust = TRUST_SCORES.get(relation, 0.0)
    trusted = list(memory.trusted)
    suspicious = list(memory.suspicious)
    stored: List[MemoryEntry] = []
    promoted = kept = confirmed = contradicted = 0
    for claim in incoming.claims:
        entry = MemoryEntry(source, claim.resource_id, claim.attribute, claim.value, round_index, incoming.speaker_id)
        known = memory.trusted_value(claim.resource_id, claim.attribute)
        conflict = known is not None and known != claim.value
        if conflict:
            contradicted += 1
        elif known is not None:
            confirmed += 1
        # everything lands in suspicious first; the assessment may promote it
        if trust >= trust_threshold and not conflict:
            if known is None:
                trusted.append(replace(entry, assessed=True))
            promoted += 1
        else:
            reason = "contradicts trusted memory" if conflict else f"low trust in {relation}"
            suspicious.append(replace(entry, reason=reason))
            kept += 1
        stored.append(entry)
    memory = replace(memory, trusted=tuple(trusted), suspicious=tuple(suspicious))
    report = AssessmentReport(promoted, kept, confirmed, contradicted)
    return _remember(memory, stored), report


def assess_memory(
    incoming: Utterance,
    memory: AgentMemory,
    trust_threshold: float = DEFAULT_TRUST_THRESHOLD,
    round_index: int = 0,
) -> AgentMemory:
    return assess_with_report(incoming, memory, trust_threshold, round_index)[0]


def evaluate_relation(state: RelationState, outcomes: Sequence[str]) -> RelationState:
    """Walk the trust ladder: a lie demotes one step, two truthful exchanges promote one."""
    for outcome in outcomes:
        rel = state.relation
        if outcome == "lie":
            if rel == "mate":
                rel = "colleague"
            elif rel in _LADDER and rel != _LADDER[0]:
                rel = _LADDER[_LADDER.index(rel) - 1]
            state = replace(state, relation=rel, consistent=0,
                            moral="may pass on false information")
        elif outcome == "truthful":
            count = state.consistent + 1
            if rel in ("stranger", "colleague") and count >= _PROMOTE_AFTER:
                rel = _LADDER[_LADDER.index(rel) + 1]
                count = 0
            state = replace(state, relation=rel, consistent=count,
                            moral="has shared accurate information")
    return state


def update_relation(memory: AgentMemory, peer: int, outcomes: Sequence[str]) -> AgentMemory:
    if not outcomes:
        return memory
    current = memory.relations.get(peer, RelationState())
    updated = evaluate_relation(current, outcomes)
    if updated == current:
        return memory
    relations = dict(memory.relations)
    relations[peer] = updated
    return replace(memory, relations=relations)
