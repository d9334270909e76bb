"""Intervention Units: data model, NDJSON ingestion and corpus statistics."""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Literal

from .errors import SupportSkillsError, UnknownLabel
from .taxonomy import DEFAULT, DIRECTIONS, Taxonomy

log = logging.getLogger(__name__)

FIELDS: tuple[str, ...] = (
    "dialog_id",
    "outcome",
    "scenario_labels",
    "problem_type",
    "emotion_type",
    "turn_id",
    "pre_seeker_states",
    "pre_seeker_text",
    "counselor_actions",
    "supporter_text",
    "response_change",
    "change_direction",
    "post_seeker_states",
    "post_seeker_text",
    "is_pivotal",
)
REQUIRED: frozenset[str] = frozenset(
    {"dialog_id", "outcome", "turn_id", "pre_seeker_states", "counselor_actions", "supporter_text", "response_change"}
)
OUTCOMES = ("success", "failed")

KeyClass = Literal["key_positive", "key_negative", "non_key"]


class IngestError(SupportSkillsError):
    """Raised in strict mode on the first bad record."""

    def __init__(self, issue: "IngestIssue") -> None:
        super().__init__(f"line {issue.line}: {issue.kind}: {issue.detail}")
        self.issue = issue


@dataclass(frozen=True)
class InterventionUnit:
    dialog_id: str
    outcome: str
    turn_id: int
    pre_seeker_states: tuple[str, ...]
    counselor_actions: tuple[str, ...]
    supporter_text: str
    response_change: str
    change_direction: str
    scenario_labels: tuple[str, ...] = ()
    problem_type: str = ""
    emotion_type: str = ""
    pre_seeker_text: str = ""
    post_seeker_states: tuple[str, ...] = ()
    post_seeker_text: str = ""
    is_pivotal: bool = False
    extra: dict[str, Any] = field(default_factory=dict, compare=False, hash=False)

    @property
    def key(self) -> tuple[str, int]:
        return (self.dialog_id, self.turn_id)

    def to_record(self) -> dict[str, Any]:
        record: dict[str, Any] = {
            "dialog_id": self.dialog_id,
            "outcome": self.outcome,
            "scenario_labels": list(self.scenario_labels),
            "problem_type": self.problem_type,
            "emotion_type": self.emotion_type,
            "turn_id": self.turn_id,
            "pre_seeker_states": list(self.pre_seeker_states),
            "pre_seeker_text": self.pre_seeker_text,
            "counselor_actions": list(self.counselor_actions),
            "supporter_text": self.supporter_text,
            "response_change": self.response_change,
            "change_direction": self.change_direction,
            "post_seeker_states": list(self.post_seeker_states),
            "post_seeker_text": self.post_seeker_text,
            "is_pivotal": self.is_pivotal,
        }
        record.update(self.extra)
        return record


@dataclass(frozen=True)
class IngestIssue:
    line: int
    kind: str  # MissingField, UnknownLabel, BadRecord, DuplicateTurn, DirectionOverride
    detail: str
    skipped: bool = True


@dataclass
class IngestReport:
    lines_read: int = 0
    accepted: int = 0
    issues: list[IngestIssue] = field(default_factory=list)

    @property
    def skipped(self) -> list[IngestIssue]:
        return [i for i in self.issues if i.skipped]

    @property
    def overrides(self) -> list[IngestIssue]:
        return [i for i in self.issues if i.kind == "DirectionOverride"]


@dataclass(frozen=True)
class CorpusStats:
    total: int = 0
    key_total: int = 0
    key_positive: int = 0
    key_negative: int = 0
    by_state_action: dict[tuple[str, str], dict[str, int]] = field(default_factory=dict)

    @property
    def non_key(self) -> int:
        return self.total - self.key_total

    def to_dict(self) -> dict[str, Any]:
        return {
            "total": self.total,
            "key_total": self.key_total,
            "key_positive": self.key_positive,
            "key_negative": self.key_negative,
            "non_key": self.non_key,
            "by_state_action": [
                {"state": s, "action": a, **counts} for (s, a), counts in sorted(self.by_state_action.items())
            ],
        }


class _Invalid(Exception):
    def __init__(self, kind: str, detail: str) -> None:
        self.kind = kind
        self.detail = detail


def _labels(value: Any, kind: str, name: str, taxonomy: Taxonomy, nonempty: bool) -> tuple[str, ...]:
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, list):
        raise _Invalid("BadRecord", f"{name} must be a list of labels")
    if nonempty and not value:
        raise _Invalid("MissingField", f"{name} is empty")
    try:
        return tuple(taxonomy.validate(kind, v) for v in value)
    except UnknownLabel as exc:
        raise _Invalid("UnknownLabel", f"{name}: {exc}") from None


def _text(record: dict, name: str) -> str:
    value = record.get(name, "")
    if value is None:
        return ""
    if not isinstance(value, str):
        raise _Invalid("BadRecord", f"{name} must be a string")
    return value


def record_to_iu(record: dict[str, Any], taxonomy: Taxonomy = DEFAULT) -> tuple[InterventionUnit, bool]:
    """Validate one wire record. Returns the unit and whether its direction overrides the default."""
    if not isinstance(record, dict):
        raise _Invalid("BadRecord", "record is not an object")
    for name in sorted(REQUIRED):
        if record.get(name) is None or record.get(name) == "":
            raise _Invalid("MissingField", name)
    outcome = str(record["outcome"]).strip().lower()
    if outcome not in OUTCOMES:
        raise _Invalid("BadRecord", f"outcome must be one of {OUTCOMES}, got {record['outcome']!r}")
    turn_id = record["turn_id"]
    if isinstance(turn_id, bool) or not isinstance(turn_id, int) or turn_id < 0:
        raise _Invalid("BadRecord", "turn_id must be a non-negative integer")
    try:
        change = taxonomy.validate("change", record["response_change"])
    except UnknownLabel as exc:
        raise _Invalid("UnknownLabel", str(exc)) from None
    default_direction = taxonomy.direction(change)
    direction = record.get("change_direction")
    overridden = False
    if direction in (None, ""):
        direction = default_direction
    else:
        direction = str(direction).strip().lower()
        if direction not in DIRECTIONS:
            raise _Invalid("BadRecord", f"change_direction must be one of {DIRECTIONS}")
        overridden = direction != default_direction
    is_pivotal = record.get("is_pivotal", False)
    if not isinstance(is_pivotal, bool):
        raise _Invalid("BadRecord", "is_pivotal must be a boolean")
    iu = InterventionUnit(
        dialog_id=str(record["dialog_id"]),
        outcome=outcome,
        turn_id=turn_id,
        pre_seeker_states=_labels(record["pre_seeker_states"], "state", "pre_seeker_states", taxonomy, True),
        counselor_actions=_labels(record["counselor_actions"], "action", "counselor_actions", taxonomy, True),
        supporter_text=_text(record, "supporter_text"),
        response_change=change,
        change_direction=direction,
        scenario_labels=_labels(record.get("scenario_labels") or [], "scenario", "scenario_labels", taxonomy, False),
        problem_type=_text(record, "problem_type"),
        emotion_type=_text(record, "emotion_type"),
        pre_seeker_text=_text(record, "pre_seeker_text"),
        post_seeker_states=_labels(record.get("post_seeker_states") or [], "state", "post_seeker_states", taxonomy, False),
        post_seeker_text=_text(record, "post_seeker_text"),
        is_pivotal=is_pivotal,
        extra={k: v for k, v in record.items() if k not in FIELDS},
    )
    return iu, overridden


def parse_lines(
    lines: Iterable[str], strict: bool = False, taxonomy: Taxonomy = DEFAULT
) -> tuple[list[InterventionUnit], IngestReport]:
    report = IngestReport()
    units: list[InterventionUnit] = []
    seen: set[tuple[str, int]] = set()
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        report.lines_read += 1
        try:
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise _Invalid("BadRecord", f"invalid JSON: {exc.msg}") from None
            iu, overridden = record_to_iu(record, taxonomy)
            if iu.key in seen:
                raise _Invalid("DuplicateTurn", f"turn {iu.turn_id} repeated in dialog {iu.dialog_id}")
        except _Invalid as bad:
            issue = IngestIssue(lineno, bad.kind, bad.detail)
            if strict:
                raise IngestError(issue) from None
            report.issues.append(issue)
            continue
        if overridden:
            report.issues.append(
                IngestIssue(lineno, "DirectionOverride", f"{iu.response_change} -> {iu.change_direction}", skipped=False)
            )
        seen.add(iu.key)
        units.append(iu)
    report.accepted = len(units)
    return units, report


def ingest_corpus(
    path: str | Path, strict: bool = False, taxonomy: Taxonomy = DEFAULT
) -> tuple[list[InterventionUnit], IngestReport]:
    """Read an NDJSON corpus of Intervention Units, preserving line order.

    Malformed records are collected in the report and skipped; ``strict`` turns
    the first one into an :class:`IngestError`. Unreadable files raise ``OSError``.
    """
    with open(path, encoding="utf-8") as fh:
        units, report = parse_lines(fh, strict=strict, taxonomy=taxonomy)
    if report.skipped:
        log.warning("%s: skipped %d of %d records", path, len(report.skipped), report.lines_read)
    return units, report


def dump_corpus(units: Iterable[InterventionUnit], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for iu in units:
            fh.write(json.dumps(iu.to_record(), ensure_ascii=False) + "\n")


def classify_key(iu: InterventionUnit) -> KeyClass:
    if iu.change_direction == "positive":
        return "key_positive"
    if iu.change_direction == "negative":
        return "key_negative"
    return "non_key"


def state_action_pairs(iu: InterventionUnit, expand: str = "cross") -> list[tuple[str, str]]:
    """(state, action) pairs an IU contributes; ``expand='first'`` keeps only the first labels."""
    if expand == "first":
        return [(iu.pre_seeker_states[0], iu.counselor_actions[0])]
    if expand != "cross":
        raise ValueError(f"unknown expansion mode {expand!r}")
    pairs = []
    for state in dict.fromkeys(iu.pre_seeker_states):
        for action in dict.fromkeys(iu.counselor_actions):
            pairs.append((state, action))
    return pairs


def corpus_stats(units: Iterable[InterventionUnit], expand: str = "cross") -> CorpusStats:
    classes: Counter[str] = Counter()
    by_pair: dict[tuple[str, str], Counter[str]] = {}
    total = 0
    for iu in units:
        total += 1
        cls = classify_key(iu)
        classes[cls] += 1
        for pair in state_action_pairs(iu, expand):
            by_pair.setdefault(pair, Counter())[cls] += 1
    return CorpusStats(
        total=total,
        key_total=classes["key_positive"] + classes["key_negative"],
        key_positive=classes["key_positive"],
        key_negative=classes["key_negative"],
        by_state_action={
            pair: {"total": sum(c.values()), **{k: c[k] for k in ("key_positive", "key_negative", "non_key")}}
            for pair, c in by_pair.items()
        },
    )
