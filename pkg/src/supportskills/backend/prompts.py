"""Prompt templates with ``{slot}`` placeholders.

A slot is ``{name}`` or ``{name:format_spec}`` where ``name`` is an
identifier; braces that do not match this shape (JSON examples in the
templates) are literal text. Rendering is a single pass, so braces inside
filled values are never re-expanded.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Any, Mapping

from ..errors import MissingSlot, UnknownSlot

TEMPLATE_IDS: tuple[str, ...] = ("agent_system", "analysis", "skill_update", "skill_create", "judge", "selfgen_cot")
SLOT_RE = re.compile(r"\{([A-Za-z_]\w*)(?::([^{}\n]*))?\}")
JUDGE_SEPARATOR = "\n\n--- User Message Template ---\n\n"
_NUMERIC_SPEC = re.compile(r"[eEfFgGn%d]$")


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str

    @property
    def required_slots(self) -> frozenset[str]:
        return frozenset(m.group(1) for m in SLOT_RE.finditer(self.body))

    def render(self, **slots: Any) -> str:
        return render(self, slots)


def _fill(value: Any, spec: str | None) -> str:
    if spec is None or spec == "":
        return str(value)
    if isinstance(value, str) and _NUMERIC_SPEC.search(spec):
        value = float(value) if not spec.endswith("d") else int(value)
    return format(value, spec)


def render(template: PromptTemplate, slots: Mapping[str, Any]) -> str:
    required = template.required_slots
    for name in sorted(required):
        if name not in slots:
            raise MissingSlot(name)
    for name in sorted(slots):
        if name not in required:
            raise UnknownSlot(name)
    return SLOT_RE.sub(lambda m: _fill(slots[m.group(1)], m.group(2)), template.body)


@lru_cache(maxsize=None)
def load_template(template_id: str) -> PromptTemplate:
    if template_id not in TEMPLATE_IDS:
        raise KeyError(f"unknown template {template_id!r}")
    body = resources.files("supportskills.backend").joinpath("templates", f"{template_id}.txt").read_text("utf-8")
    return PromptTemplate(template_id, body)


def judge_parts() -> tuple[PromptTemplate, PromptTemplate]:
    """The judge template as (system prompt, user message template)."""
    system, _, user = load_template("judge").body.partition(JUDGE_SEPARATOR)
    return PromptTemplate("judge_system", system), PromptTemplate("judge_user", user)
