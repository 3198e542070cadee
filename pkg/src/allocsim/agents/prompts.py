"""Prompt templates: rendering with strict placeholder binding and reply parsing."""

from __future__ import annotations

import re
import string
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

TEMPLATE_IDS = (
    "utterance_generation",
    "communication_plan",
    "decision",
    "broadcasting",
    "relation_evaluation",
    "memory_reflection",
    "memory_assessment",
)


class PromptError(KeyError):
    """Unknown template or unbound placeholders."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class ParseError(ValueError):
    def __init__(self, message: str, text: str):
        self.text = text
        super().__init__(f"{message}; reply was: {text!r}")


@lru_cache(maxsize=None)
def load_template(template_id: str) -> str:
    if template_id not in TEMPLATE_IDS:
        raise PromptError(f"unknown template {template_id!r}")
    return resources.files(__package__).joinpath("templates", f"{template_id}.txt").read_text(encoding="utf-8")


def placeholders(template_id: str) -> List[str]:
    names = []
    for _, name, _, _ in string.Formatter().parse(load_template(template_id)):
        if name and name not in names:
            names.append(name)
    return names


def render_prompt(template_id: str, context: Mapping[str, Any]) -> str:
    names = placeholders(template_id)
    missing = [n for n in names if n not in context]
    if missing:
        raise PromptError(f"unbound placeholders for {template_id}: {', '.join(missing)}")
    return load_template(template_id).format_map({n: context[n] for n in names})


@dataclass(frozen=True)
class Grammar:
    """Labelled-line reply format.

    ``choices`` maps a label to its allowed values; parsed values are
    normalised to lower snake case (``"Give up"`` becomes ``"give_up"``).
    """

    labels: Tuple[str, ...]
    required: Tuple[str, ...] = ()
    choices: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    repeat: bool = False
    free_text: bool = False


GRAMMARS: Dict[str, Grammar] = {
    "decision": Grammar(("Thought", "Action", "Action Input"), required=("Action",),
                        choices={"Action": ("Choose", "Give up")}),
    "broadcasting": Grammar(("Thought", "Action", "Community", "Info"), required=("Action",),
                            choices={"Action": ("Publish", "Give up")}),
    "utterance_generation": Grammar(("Thought", "Acquaintance", "Output"),
                                    required=("Acquaintance", "Output"), repeat=True),
    "communication_plan": Grammar(("Intent", "Audience", "Plan"), required=("Intent",),
                                  choices={"Intent": ("honest", "deceptive", "withhold")}),
    "memory_assessment": Grammar(("Trusted", "Suspicious", "Reason"), required=("Trusted", "Suspicious")),
    "relation_evaluation": Grammar(("My Relation with",), required=("My Relation with",),
                                   choices={"My Relation with": ("friend", "mate", "colleague", "stranger",
                                                                 "competitor", "enemy")}),
    "memory_reflection": Grammar((), free_text=True),
}


def _key(label: str) -> str:
    return re.sub(r"\W+", "_", label.strip().lower()).strip("_")


def _normalise_choice(label: str, value: str, allowed: Tuple[str, ...], text: str) -> str:
    cleaned = value.strip().strip(".").strip().lower()
    for option in allowed:
        if cleaned == option.lower() or cleaned.startswith(option.lower()):
            return _key(option)
    raise ParseError(f"{label} must be one of {allowed}, got {value.strip()!r}", text)


def _parse_relation(text: str, grammar: Grammar) -> Dict[str, str]:
    m = re.search(r"My Relation with\s+(.+?)\s*:\s*([A-Za-z]+)", text)
    if not m:
        raise ParseError("missing 'My Relation with <name>: <relation>' line", text)
    relation = _normalise_choice("relation", m.group(2), grammar.choices["My Relation with"], text)
    view = text[m.end():].strip().splitlines()
    view_text = next((ln.strip() for ln in view if ln.strip()), "")
    # strip a trailing "(friend/enemy/...)" hint if the model echoed it
    view_text = re.sub(r"^\([^)]*\)\s*", "", view_text)
    return {"acquaintance": m.group(1).strip(), "relation": relation, "view": view_text}


def parse_structured(text: str, grammar: Union[str, Grammar]) -> Union[Dict[str, str], List[Dict[str, str]]]:
    """Extract labelled blocks from a model reply.

    Returns one dict for single-block grammars and a list of dicts for
    repeating ones; raises :class:`ParseError` when a required label is
    missing or a constrained value is not recognised.
    """
    if isinstance(grammar, str):
        grammar = GRAMMARS[grammar]
    if grammar.free_text:
        body = text.strip()
        if not body:
            raise ParseError("empty reply", text)
        return {"summary": body}
    if grammar.labels == ("My Relation with",):
        return _parse_relation(text, grammar)

    ordered = sorted(grammar.labels, key=len, reverse=True)
    pattern = re.compile(r"^\s*(" + "|".join(re.escape(lb) for lb in ordered) + r")\s*:\s*(.*)$", re.IGNORECASE)
    canonical = {lb.lower(): lb for lb in grammar.labels}
    blocks: List[Dict[str, str]] = []
    current: Dict[str, str] = {}
    last: Optional[str] = None
    for line in text.splitlines():
        m = pattern.match(line)
        if m:
            label = canonical[m.group(1).lower()]
            if grammar.repeat and label in current:
                blocks.append(current)
                current = {}
            current[label] = m.group(2).strip()
            last = label
        elif last is not None and line.strip():
            current[last] = (current[last] + "\n" + line.strip()).strip()
    if current:
        blocks.append(current)
    if not blocks:
        raise ParseError(f"no labelled lines found (expected {', '.join(grammar.labels)})", text)
    if not grammar.repeat:
        merged: Dict[str, str] = {}
        for b in blocks:
            merged.update(b)
        blocks = [merged]

    out = []
    for block in blocks:
        missing = [lb for lb in grammar.required if lb not in block]
        if missing:
            raise ParseError(f"missing required label(s): {', '.join(missing)}", text)
        parsed = {}
        for label, value in block.items():
            if label in grammar.choices:
                value = _normalise_choice(label, value, grammar.choices[label], text)
            parsed[_key(label)] = value
        out.append(parsed)
    return out if grammar.repeat else out[0]
