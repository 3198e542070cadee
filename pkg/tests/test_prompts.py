import json
import urllib.error

import pytest

from conftest import house, person
from allocsim.agents import CHOOSE, DECLINE, QUIT, BackendError, LlmBackend, LlmConfig, complete
from allocsim.agents.base import CommunicationPlan
from allocsim.agents.memory import Claim, Utterance, initial_memory
from allocsim.agents.prompts import (
    TEMPLATE_IDS,
    ParseError,
    PromptError,
    load_template,
    parse_structured,
    placeholders,
    render_prompt,
)
from allocsim.scenario import DEFAULT_RATING_TABLE


def _reply(text):
    return json.dumps({"choices": [{"message": {"content": text}}]}).encode()


class Scripted:
    """Fake transport that replays canned reply texts and records requests."""

    def __init__(self, *texts):
        self.texts = list(texts)
        self.requests = []

    def __call__(self, url, body, headers, timeout):
        self.requests.append((url, json.loads(body), headers))
        text = self.texts.pop(0) if len(self.texts) > 1 else self.texts[0]
        if isinstance(text, Exception):
            raise text
        return _reply(text)


def _backend(*texts, **kw):
    transport = Scripted(*texts)
    return LlmBackend(LlmConfig(**kw), transport=transport, sleep=lambda s: None), transport


# -- templates ---------------------------------------------------------------------

@pytest.mark.parametrize("tid", TEMPLATE_IDS)
def test_every_template_has_placeholders(tid):
    assert load_template(tid).strip()
    assert placeholders(tid)


def test_decision_template_carries_grammar():
    text = render_prompt("decision", {n: "x" for n in placeholders("decision")})
    assert "Action: Choose" in text


def test_unbound_placeholders_listed():
    with pytest.raises(PromptError) as info:
        render_prompt("decision", {})
    for name in placeholders("decision"):
        assert name in str(info.value)


def test_unknown_template():
    with pytest.raises(PromptError):
        load_template("haiku")


# -- parsing -----------------------------------------------------------------------

def test_give_up_parses():
    assert parse_structured("Thought: x\nAction: Give up", "decision") == {"thought": "x", "action": "give_up"}


def test_multiline_values_and_case():
    out = parse_structured("thought: a\nstill thinking\nACTION: choose.\nAction Input: [1]", "decision")
    assert out == {"thought": "a\nstill thinking", "action": "choose", "action_input": "[1]"}


@pytest.mark.parametrize("text, grammar", [
    ("no labels here", "decision"),
    ("Action: Maybe", "decision"),
    ("Thought: only a thought", "decision"),
    ("Intent: sneaky", "communication_plan"),
    ("I like them", "relation_evaluation"),
    ("   ", "memory_reflection"),
])
def test_malformed_replies_raise(text, grammar):
    with pytest.raises(ParseError):
        parse_structured(text, grammar)


# -- transport ---------------------------------------------------------------------

def test_complete_retries_with_backoff():
    sleeps = []
    transport = Scripted(urllib.error.URLError("down"), urllib.error.URLError("down"), "hello")
    cfg = LlmConfig(api_key="k", model="m", temperature=0.1, backoff=0.5)
    assert complete(cfg, "hi", transport, sleeps.append) == "hello"
    assert sleeps == [0.5, 1.0]
    url, payload, headers = transport.requests[0]
    assert payload["model"] == "m" and payload["temperature"] == 0.1
    assert payload["messages"] == [{"role": "user", "content": "hi"}]
    assert headers["Authorization"] == "Bearer k"


def test_complete_gives_up():
    transport = Scripted(TimeoutError("slow"))
    with pytest.raises(BackendError, match="3 attempts"):
        complete(LlmConfig(max_retries=2), "hi", transport, lambda s: None)


def test_config_from_env():
    cfg = LlmConfig.from_env({"ALLOCSIM_LLM_URL": "http://x", "ALLOCSIM_LLM_MODEL": "tiny",
                              "ALLOCSIM_LLM_TEMPERATURE": "0.3"}, max_retries=1)
    assert (cfg.url, cfg.model, cfg.temperature, cfg.max_retries) == ("http://x", "tiny", 0.3, 1)


# -- backend -----------------------------------------------------------------------

HOMES = [house(1, community=0), house(2, community=1, size=100), house(3, community=1, size=30)]


def test_three_stage_choice():
    backend, transport = _backend("Action: Choose\nAction Input: [1]",
                                  "Action: Choose\nAction Input: [0]",
                                  "Action: Choose\nAction Input: [0]")
    d = backend.decide(person(0), HOMES, initial_memory({}), None, DEFAULT_RATING_TABLE)
    assert len(transport.requests) == 3
    assert d.action == CHOOSE and d.stages["community"] == 1
    assert d.resource_id in (2, 3)


def test_give_up_early_quits_and_late_declines():
    backend, _ = _backend("Action: Give up")
    assert backend.decide(person(0), HOMES, initial_memory({}), None, DEFAULT_RATING_TABLE).action == QUIT
    backend, _ = _backend("Action: Choose\nAction Input: 0", "Action: Choose\nAction Input: 0", "Action: Give up")
    assert backend.decide(person(0), HOMES, initial_memory({}), None, DEFAULT_RATING_TABLE).action == DECLINE


def test_retry_then_success():
    backend, transport = _backend("garbage", "Intent: honest\nPlan: share")
    plan = backend.plan(person(0), initial_memory({}), None, 1, None)
    assert plan.intent == "honest" and len(transport.requests) == 2
    assert backend.fallbacks == 0


def test_decision_raises_after_bounded_retries():
    backend, transport = _backend("garbage")
    with pytest.raises(BackendError):
        backend.decide(person(0), HOMES, initial_memory({}), None, DEFAULT_RATING_TABLE)
    assert len(transport.requests) == backend.parse_retries + 1


def test_out_of_range_choice_is_an_error():
    backend, _ = _backend("Action: Choose\nAction Input: 7")
    with pytest.raises(BackendError, match="not a listed option"):
        backend.select_queue(person(0), [], initial_memory({}), DEFAULT_RATING_TABLE)


def test_plan_falls_back_to_withhold():
    backend, _ = _backend("???")
    assert backend.plan(person(0), initial_memory({}), None, 1, None).intent == "withhold"
    assert backend.fallbacks == 1


def test_forum_post_and_private_message():
    backend, _ = _backend("Action: Publish\nCommunity: 1\nInfo: house 2 is bright")
    post = backend.speak(person(0), None, [], initial_memory({}), None, CommunicationPlan("honest", None),
                         HOMES, DEFAULT_RATING_TABLE)
    assert post.is_broadcast and post.topic == 1 and post.text == "house 2 is bright"
    backend, _ = _backend("Thought: hi\nAcquaintance: P1\nOutput: Hello there")
    msg = backend.speak(person(0), 1, [], initial_memory({}), None, CommunicationPlan("honest", 1),
                        HOMES, DEFAULT_RATING_TABLE)
    assert msg.text == "Hello there" and msg.listener_id == 1


def test_relation_reply_sets_relation():
    backend, _ = _backend("My Relation with participant 1: enemy\nThey lied to me.")
    exchange = [Utterance(1, 0, "house 2 is great", (Claim(2, "condition", "good", False),))]
    mem = backend.relate(person(0), 1, ["lie"], initial_memory({1: "friend"}), exchange)
    assert mem.relation_with(1) == "enemy"
    assert mem.relations[1].note == "They lied to me."
