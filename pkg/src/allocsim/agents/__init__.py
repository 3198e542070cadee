"""Participant behaviour: scoring, decisions, social messaging and memory."""

from .base import CHOOSE, DECLINE, QUIT, Backend, BackendError, CommunicationPlan, Decision, QueueSummary
from .llm import LlmBackend, LlmConfig, complete
from .memory import (
    AgentMemory,
    Claim,
    MemoryEntry,
    Utterance,
    assess_memory,
    evaluate_relation,
    initial_memory,
    observe,
    reflect_memory,
)
from .prompts import ParseError, PromptError, parse_structured, render_prompt
from .rule import RuleBackend, score_resource

__all__ = [
    "CHOOSE", "DECLINE", "QUIT", "Backend", "BackendError", "CommunicationPlan", "Decision", "QueueSummary",
    "LlmBackend", "LlmConfig", "complete", "AgentMemory", "Claim", "MemoryEntry", "Utterance",
    "assess_memory", "evaluate_relation", "initial_memory", "observe", "reflect_memory",
    "ParseError", "PromptError", "parse_structured", "render_prompt", "RuleBackend", "score_resource",
]
