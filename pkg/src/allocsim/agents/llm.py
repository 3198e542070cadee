"""Chat-completion backend driven by the shipped prompt templates.

Nothing here is deterministic; the engine treats this backend as opaque and
only its parse layer is covered by fixture tests.
"""

from __future__ import annotations

import json
import logging
import os
import random
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from ..scenario import HouseResource, ParticipantProfile, RatingTable
from .base import CHOOSE, DECLINE, QUIT, Backend, BackendError, CommunicationPlan, Decision, QueueSummary
from .memory import AgentMemory, RelationState, Utterance, assess_with_report, update_relation
from .prompts import ParseError, parse_structured, render_prompt
from .rule import affordability_bonus

log = logging.getLogger(__name__)

# transport(url, body, headers, timeout) -> response body
Transport = Callable[[str, bytes, Dict[str, str], float], bytes]


@dataclass(frozen=True)
class LlmConfig:
    url: str = "http://localhost:8000/v1/chat/completions"
    api_key: str = ""
    model: str = "gpt-3.5-turbo"
    temperature: float = 0.7
    timeout: float = 60.0
    max_retries: int = 3
    backoff: float = 1.0
    max_in_flight: int = 4

    @classmethod
    def from_env(cls, env: Optional[Dict[str, str]] = None, **overrides: Any) -> "LlmConfig":
        env = os.environ if env is None else env
        values: Dict[str, Any] = {}
        if "ALLOCSIM_LLM_URL" in env:
            values["url"] = env["ALLOCSIM_LLM_URL"]
        if "ALLOCSIM_LLM_API_KEY" in env:
            values["api_key"] = env["ALLOCSIM_LLM_API_KEY"]
        if "ALLOCSIM_LLM_MODEL" in env:
            values["model"] = env["ALLOCSIM_LLM_MODEL"]
        if "ALLOCSIM_LLM_TEMPERATURE" in env:
            values["temperature"] = float(env["ALLOCSIM_LLM_TEMPERATURE"])
        values.update(overrides)
        return cls(**values)


def _urllib_transport(url: str, body: bytes, headers: Dict[str, str], timeout: float) -> bytes:
    req = urllib.request.Request(url, data=body, headers=headers, method="POST")
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        return resp.read()


def complete(config: LlmConfig, text: str, transport: Optional[Transport] = None,
             sleep: Callable[[float], None] = time.sleep) -> str:
    """POST one user message and return the reply text.

    Transport errors are retried ``config.max_retries`` times with exponential
    backoff; after that a :class:`BackendError` is raised.
    """
    transport = transport or _urllib_transport
    payload = {
        "model": config.model,
        "temperature": config.temperature,
        "messages": [{"role": "user", "content": text}],
    }
    headers = {"Content-Type": "application/json"}
    if config.api_key:
        headers["Authorization"] = f"Bearer {config.api_key}"
    body = json.dumps(payload).encode("utf-8")
    last: Optional[Exception] = None
    for attempt in range(config.max_retries + 1):
        if attempt:
            sleep(config.backoff * 2 ** (attempt - 1))
        try:
            raw = transport(config.url, body, headers, config.timeout)
            data = json.loads(raw)
            return data["choices"][0]["message"]["content"]
        except (urllib.error.URLError, TimeoutError, OSError, ValueError, KeyError, IndexError) as exc:
            last = exc
            log.warning("completion attempt %d failed: %s", attempt + 1, exc)
    raise BackendError(f"completion failed after {config.max_retries + 1} attempts: {last}")


def role_description(p: ParticipantProfile) -> str:
    prefs = ", ".join(f"{k} {v:.2f}" for k, v in sorted(p.feature_weights.items(), key=lambda kv: -kv[1]))
    return (f"You are {p.name}, renting for a household of {p.family_size}. Your monthly income is "
            f"{p.monthly_income:.0f} and you can spend about {p.rent_budget:.0f} on rent. "
            f"How much you care about each feature: {prefs}.")


def memory_text(memory: AgentMemory) -> str:
    lines = [f"- house {e.resource_id}: {e.attribute} is {e.value} ({e.source})" for e in memory.trusted[-20:]]
    lines += [f"- {n}" for n in memory.notes[-5:]]
    return "\n".join(lines) if lines else "Nothing yet."


def _first_int(text: str) -> Optional[int]:
    m = re.search(r"-?\d+", text or "")
    return int(m.group()) if m else None


@dataclass
class LlmBackend(Backend):
    """Participant model that asks a chat-completion endpoint for every choice.

    Replies that fail to parse are retried ``parse_retries`` times.  Decisions
    then raise :class:`BackendError` (the engine skips that turn); speech
    falls back to a contentless withhold utterance.
    """

    config: LlmConfig = field(default_factory=LlmConfig)
    transport: Optional[Transport] = None
    parse_retries: int = 2
    sleep: Callable[[float], None] = time.sleep
    name: str = "llm"
    deterministic: bool = False

    def __post_init__(self) -> None:
        self._slots = threading.BoundedSemaphore(max(1, self.config.max_in_flight))
        self.fallbacks = 0

    # -- plumbing ----------------------------------------------------------
    def ask(self, template_id: str, context: Dict[str, Any]) -> Any:
        prompt = render_prompt(template_id, context)
        last: Optional[ParseError] = None
        for _ in range(self.parse_retries + 1):
            with self._slots:
                reply = complete(self.config, prompt, self.transport, self.sleep)
            try:
                return parse_structured(reply, template_id)
            except ParseError as exc:
                last = exc
                log.info("unparseable %s reply, retrying: %s", template_id, exc)
        raise BackendError(f"{template_id}: no parseable reply after {self.parse_retries + 1} tries ({last})")

    def _choose(self, p, memory, task: str, options: Dict[Any, str], thought: str) -> Optional[Any]:
        keys = list(options)
        listing = "\n".join(f"[{i}] {options[k]}" for i, k in enumerate(keys))
        parsed = self.ask("decision", {
            "memory": memory_text(memory),
            "role_description": role_description(p),
            "task": task,
            "house_info": listing,
            "thought_hint": "Think about your budget and your family before answering.",
            "thought_type": thought,
            "choose_type": "the number in square brackets of your choice",
        })
        if parsed["action"] == "give_up":
            return None
        idx = _first_int(parsed.get("action_input", ""))
        if idx is None or not 0 <= idx < len(keys):
            raise BackendError(f"choice {parsed.get('action_input')!r} is not a listed option")
        return keys[idx]

    # -- Backend contract --------------------------------------------------
    def subjective_score(self, p: ParticipantProfile, r: HouseResource) -> float:
        # No rating template ships with the package; reuse the affordability bonus.
        return affordability_bonus(r.rent, p.rent_budget)

    def select_queue(self, p, summaries: Sequence[QueueSummary], memory, rating_table) -> int:
        options = {s.index: s.describe() for s in summaries}
        picked = self._choose(p, memory, "choose which queue to join", options, "your reason for the queue")
        return 0 if picked is None else picked

    def decide(self, p, visible, memory, competitiveness, rating_table, queue=None) -> Decision:
        if not visible:
            return Decision(QUIT, reason="nothing visible")
        communities: Dict[int, List[HouseResource]] = {}
        for r in visible:
            communities.setdefault(r.community_id, []).append(r)
        community = self._choose(
            p, memory, "choose a community",
            {c: f"community {c}: {len(rs)} houses, rent {min(r.rent for r in rs):.0f}-{max(r.rent for r in rs):.0f}"
             for c, rs in sorted(communities.items())},
            "your reason for the community")
        if community is None:
            return Decision(QUIT, reason="gave up at community stage")
        types: Dict[str, List[HouseResource]] = {}
        for r in communities[community]:
            types.setdefault(rating_table.bucket("size", r.size), []).append(r)
        house_type = self._choose(
            p, memory, "choose a house type",
            {t: f"size band {t}: {len(rs)} houses" for t, rs in sorted(types.items())},
            "your reason for the house type")
        if house_type is None:
            return Decision(QUIT, reason="gave up at type stage")
        pick = self._choose(
            p, memory, "choose one house",
            {r.id: f"house {r.id}: {r.disclosed}" for r in sorted(types[house_type], key=lambda r: r.id)},
            "your reason for the house")
        stages = {"community": community, "type": house_type, "house": pick}
        if pick is None:
            # giving up at the last stage counts as one declined offer
            return Decision(DECLINE, stages=stages, reason="declined at house stage")
        return Decision(CHOOSE, resource_id=pick, inspected=pick, stages=stages)

    def plan(self, p, memory, competitiveness, listener, rng: random.Random, queue=None) -> CommunicationPlan:
        context = {
            "role_description": role_description(p),
            "acquaintance_description": ("You are writing on the public forum." if listener is None else
                                         f"You are talking with participant {listener}, "
                                         f"your {memory.relation_with(listener)}."),
            "memory": memory_text(memory),
            "competitiveness": getattr(competitiveness, "text", "unknown"),
            "personality": p.personality,
            "goal": "rent the house that suits your family best",
        }
        try:
            parsed = self.ask("communication_plan", context)
        except BackendError as exc:
            log.warning("participant %d: plan fallback to withhold (%s)", p.id, exc)
            self.fallbacks += 1
            return CommunicationPlan("withhold", listener, "fallback")
        return CommunicationPlan(parsed["intent"], listener, parsed.get("plan", ""))

    def speak(self, p, listener, history, memory, competitiveness, plan, visible, rating_table,
              relevant=(), topic=None) -> Optional[Utterance]:
        try:
            if listener is None:
                communities = sorted({r.community_id for r in visible})
                parsed = self.ask("broadcasting", {
                    "role_description": role_description(p),
                    "plan": plan.goal or plan.intent,
                    "memory": memory_text(memory),
                    "community_ids": ", ".join(map(str, communities)),
                })
                if parsed["action"] != "publish":
                    return None
                community = _first_int(parsed.get("community", ""))
                return Utterance(p.id, None, parsed.get("info", ""), (), community, plan.intent)
            chats = "\n".join(f"{u.speaker_id}: {u.text}" for u in history[-6:]) or "None."
            blocks = self.ask("utterance_generation", {
                "role_description": role_description(p),
                "memory": memory_text(memory),
                "utterance_plan": plan.goal or plan.intent,
                "acquaintances": f"participant {listener} ({memory.relation_with(listener)})",
                "recent_chats": chats,
                "acquaintance_number": 1,
            })
            return Utterance(p.id, listener, blocks[0]["output"], (), topic, plan.intent)
        except BackendError as exc:
            log.warning("participant %d: utterance fallback to withhold (%s)", p.id, exc)
            self.fallbacks += 1
            if listener is None:
                return None
            return Utterance(p.id, listener, "Good luck with your search!", (), topic, "withhold")

    def assess(self, p, incoming, memory, round_index=0):
        memory, report = assess_with_report(incoming, memory, round_index=round_index)
        if incoming.text:
            try:
                parsed = self.ask("memory_assessment", {
                    "name": p.name,
                    "memory": memory_text(memory),
                    "forum_info": f"[{incoming.speaker_id}] {incoming.text}",
                })
                if parsed["trusted"].strip().lower() not in ("", "none"):
                    memory = replace(memory, notes=memory.notes + (parsed["trusted"],))
            except BackendError as exc:
                log.warning("participant %d: assessment skipped (%s)", p.id, exc)
        return memory, report.outcome

    def relate(self, p, peer: int, outcomes, memory, exchange: Sequence[Utterance] = ()) -> AgentMemory:
        if not exchange:
            return update_relation(memory, peer, outcomes)
        try:
            parsed = self.ask("relation_evaluation", {
                "acquaintance_name": f"participant {peer}",
                "role_description": role_description(p),
                "memory": memory_text(memory),
                "relation": memory.relation_with(peer),
                "communication": "\n".join(f"{u.speaker_id}: {u.text}" for u in exchange),
            })
        except BackendError:
            return update_relation(memory, peer, outcomes)
        relations = dict(memory.relations)
        base = relations.get(peer) or RelationState()
        relations[peer] = replace(base, relation=parsed["relation"], note=parsed.get("view", ""))
        return replace(memory, relations=relations)

    def reflect(self, memory: AgentMemory) -> AgentMemory:
        if len(memory.notes) <= memory.reflection_threshold:
            return memory
        try:
            parsed = self.ask("memory_reflection", {"summary": memory.notes[0], "new_lines": "\n".join(memory.notes[1:])})
        except BackendError:
            return replace(memory, notes=memory.notes[-memory.reflection_threshold:])
        return replace(memory, notes=(parsed["summary"],))
