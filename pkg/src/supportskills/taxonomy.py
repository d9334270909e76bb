"""Closed label sets for annotation and the response-change direction mapping.

Every other module validates labels through :func:`validate_label`. Labels are
matched after trimming, case folding and collapsing internal whitespace, and
are always returned in their canonical casing.

The scenario set ships the seventeen labels that are actually enumerated in
the annotation guide; the guide announces eighteen, so a deployment can add the
missing one through ``extra_scenarios`` instead of the library inventing it.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Literal, Mapping

from .errors import UnknownLabel

Kind = Literal["scenario", "state", "action", "change", "strategy"]
Direction = Literal["positive", "negative", "neutral"]

KINDS: tuple[str, ...] = ("scenario", "state", "action", "change", "strategy")
DIRECTIONS: tuple[str, ...] = ("positive", "negative", "neutral")

SCENARIOS: tuple[str, ...] = (
    "Loss of perceived control",
    "Anxiety and stress",
    "Loneliness",
    "Doubts about self-worth",
    "Loss and grief",
    "Trust rupture",
    "Career uncertainty / intimate relationship conflict",
    "Excessive sense of responsibility",
    "Feelings of neglect",
    "Family conflict",
    "Social withdrawal",
    "Depressed mood",
    "Interpersonal conflict",
    "Self-negation",
    "Perfectionism-related distress",
    "Impaired personal boundaries",
    "Identity confusion",
)

SEEKER_STATES: tuple[str, ...] = (
    "Willingness to explore",
    "Self-awareness",
    "Depressed mood",
    "Intellectualization",
    "Helplessness",
    "Advice seeking",
    "Tentative disclosure",
    "Heightened emotional arousal",
    "Rumination",
    "Disorganized expression",
    "Avoidance",
    "Indecisiveness",
    "Anger expression",
    "Self-blame",
    "High defensiveness",
)

SUPPORT_ACTIONS: tuple[str, ...] = (
    "Action-oriented suggestions",
    "Strengths/resource affirmation",
    "Open-ended questioning",
    "Empathic reflection",
    "Supporter self-disclosure",
    "Information provision",
    "Normalization",
    "Closed-ended questioning",
    "Cognitive reframing",
    "Exploratory deepening",
    "Paraphrasing and clarification",
    "Boundary setting/reminder",
    "Emotion labeling",
    "Guided questioning",
    "Summarizing and focusing",
    "Gentle challenge",
    "Intentional silence",
)

RESPONSE_CHANGES: tuple[str, ...] = (
    "More specific expression",
    "Continued disclosure",
    "No observable change",
    "Emotional relief",
    "Expression of willingness to take action",
    "Willingness to consider a new perspective",
    "Indeterminable",
    "Topic shift",
    "Increased self-awareness",
    "Increased confusion",
    "Increased withdrawal",
    "Increased emotional agitation",
    "Reduced repetitive responding",
    "Perceived offense",
)

STRATEGIES: tuple[str, ...] = (
    "Question",
    "Restatement or Paraphrasing",
    "Reflection of feelings",
    "Self-disclosure",
    "Affirmation and Reassurance",
    "Providing Suggestions",
    "Information",
    "Others",
)

# Sizes announced by the annotation guide; the scenario check only passes once
# the eighteenth label is configured.
EXPECTED_SIZES: Mapping[str, int] = MappingProxyType(
    {"scenario": 18, "state": 15, "action": 17, "change": 14, "strategy": 8}
)

_WS = re.compile(r"\s+")


def normalize(raw: str) -> str:
    return _WS.sub(" ", raw.strip()).casefold()


def parse_direction_mapping(text: str) -> dict[str, str]:
    """Parse ``label = direction`` lines; ``#`` starts a comment line."""
    mapping: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'label = direction'")
        label, _, direction = line.rpartition("=")
        direction = direction.strip().lower()
        if direction not in DIRECTIONS:
            raise ValueError(f"line {lineno}: bad direction {direction!r}")
        mapping[label.strip()] = direction
    return mapping


def _shipped_mapping() -> dict[str, str]:
    text = resources.files("supportskills.data").joinpath("change_directions.txt").read_text("utf-8")
    return parse_direction_mapping(text)


@dataclass(frozen=True)
class Taxonomy:
    """Immutable bundle of the label sets plus the change-direction mapping."""

    extra_scenarios: tuple[str, ...] = ()
    direction_overrides: Mapping[str, str] = field(default_factory=dict)
    expected_sizes: Mapping[str, int] = EXPECTED_SIZES

    def __post_init__(self) -> None:
        sets = {
            "scenario": SCENARIOS + tuple(self.extra_scenarios),
            "state": SEEKER_STATES,
            "action": SUPPORT_ACTIONS,
            "change": RESPONSE_CHANGES,
            "strategy": STRATEGIES,
        }
        index = {kind: {normalize(label): label for label in labels} for kind, labels in sets.items()}
        directions = dict(_shipped_mapping())
        for label, direction in self.direction_overrides.items():
            canonical = index["change"].get(normalize(label))
            if canonical is None:
                raise UnknownLabel("change", label)
            if direction not in DIRECTIONS:
                raise ValueError(f"bad direction {direction!r} for {label!r}")
            directions[canonical] = direction
        missing = [label for label in RESPONSE_CHANGES if label not in directions]
        if missing:
            raise ValueError(f"direction mapping is not total; missing {missing}")
        object.__setattr__(self, "_sets", MappingProxyType(sets))
        object.__setattr__(self, "_index", MappingProxyType(index))
        object.__setattr__(self, "_directions", MappingProxyType(directions))

    @classmethod
    def from_mapping_file(cls, path: str | Path, extra_scenarios: Iterable[str] = ()) -> "Taxonomy":
        overrides = parse_direction_mapping(Path(path).read_text(encoding="utf-8"))
        return cls(extra_scenarios=tuple(extra_scenarios), direction_overrides=overrides)

    def labels(self, kind: str) -> tuple[str, ...]:
        if kind not in KINDS:
            raise ValueError(f"unknown taxonomy kind {kind!r}")
        return self._sets[kind]  # type: ignore[attr-defined]

    def validate(self, kind: str, raw: str) -> str:
        if kind not in KINDS:
            raise ValueError(f"unknown taxonomy kind {kind!r}")
        if not isinstance(raw, str):
            raise UnknownLabel(kind, repr(raw))
        label = self._index[kind].get(normalize(raw))  # type: ignore[attr-defined]
        if label is None:
            raise UnknownLabel(kind, raw)
        return label

    def direction(self, change: str) -> str:
        return self._directions[self.validate("change", change)]  # type: ignore[attr-defined]

    @property
    def directions(self) -> Mapping[str, str]:
        return self._directions  # type: ignore[attr-defined]

    def size_mismatches(self) -> dict[str, tuple[int, int]]:
        """Return ``{kind: (actual, expected)}`` for every set whose size is off."""
        out = {}
        for kind in KINDS:
            actual = len(self.labels(kind))
            expected = self.expected_sizes.get(kind, actual)
            if actual != expected:
                out[kind] = (actual, expected)
        return out


DEFAULT = Taxonomy()


def validate_label(kind: str, raw: str, taxonomy: Taxonomy = DEFAULT) -> str:
    return taxonomy.validate(kind, raw)


def change_direction(change: str, taxonomy: Taxonomy = DEFAULT) -> str:
    return taxonomy.direction(change)
