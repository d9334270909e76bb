"""On-disk skill banks: immutable snapshots, a mutation log, and lexical retrieval."""
from __future__ import annotations

import json
import logging
import os
import re
import tempfile
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from types import MappingProxyType
from typing import Any, Iterable, Literal, Mapping, Protocol, Sequence

from .errors import (
    BankError,
    DuplicateSkill,
    NothingToRollback,
    SkillFormatError,
    UnknownSkill,
    VersionRegression,
)
from .skill import Skill, parse_skill, parse_version, serialize_skill
from .taxonomy import normalize

log = logging.getLogger(__name__)

LOG_NAME = "mutations.log"
GENERATION_TAGS = ("B0", "B_intermediate", "B_star", "custom")
OpName = Literal["add", "update", "remove", "rollback"]


@dataclass(frozen=True)
class MutationRecord:
    timestamp: str
    op: str
    name: str
    from_version: str | None
    to_version: str | None
    reason: str = ""
    # full document for add/update so the log alone can rebuild the bank
    content: str | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "timestamp": self.timestamp,
                "op": self.op,
                "name": self.name,
                "from_version": self.from_version,
                "to_version": self.to_version,
                "reason": self.reason,
                "content": self.content,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "MutationRecord":
        d = json.loads(line)
        return cls(
            timestamp=d["timestamp"],
            op=d["op"],
            name=d["name"],
            from_version=d.get("from_version"),
            to_version=d.get("to_version"),
            reason=d.get("reason", ""),
            content=d.get("content"),
        )


@dataclass(frozen=True)
class Mutation:
    op: OpName
    skill: Skill | None = None
    name: str | None = None
    reason: str = ""

    @classmethod
    def add(cls, skill: Skill, reason: str = "") -> "Mutation":
        return cls("add", skill=skill, name=skill.name, reason=reason)

    @classmethod
    def update(cls, skill: Skill, reason: str = "") -> "Mutation":
        return cls("update", skill=skill, name=skill.name, reason=reason)

    @classmethod
    def remove(cls, name: str, reason: str = "") -> "Mutation":
        return cls("remove", name=name, reason=reason)

    @classmethod
    def rollback(cls, name: str, reason: str = "") -> "Mutation":
        return cls("rollback", name=name, reason=reason)


@dataclass(frozen=True)
class LoadIssue:
    path: str
    error: str


@dataclass(frozen=True)
class SkillBank:
    """An immutable snapshot. Every mutation returns a new bank."""

    skills: Mapping[str, Skill] = field(default_factory=dict)
    generation_tag: str = "custom"
    mutation_log: tuple[MutationRecord, ...] = ()
    # exact document bytes for every skill; what gets written to disk
    texts: Mapping[str, str] = field(default_factory=dict)
    # earlier documents per skill, most recent last, for rollback
    history: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    load_issues: tuple[LoadIssue, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if self.generation_tag not in GENERATION_TAGS:
            raise ValueError(f"generation_tag must be one of {GENERATION_TAGS}")
        ordered = {name: self.skills[name] for name in sorted(self.skills)}
        texts = dict(self.texts)
        for name, skill in ordered.items():
            texts.setdefault(name, serialize_skill(skill))
        object.__setattr__(self, "skills", MappingProxyType(ordered))
        object.__setattr__(self, "texts", MappingProxyType({n: texts[n] for n in ordered}))
        object.__setattr__(self, "history", MappingProxyType(dict(self.history)))

    @classmethod
    def from_skills(cls, skills: Iterable[Skill], generation_tag: str = "custom") -> "SkillBank":
        table: dict[str, Skill] = {}
        for skill in skills:
            if skill.name in table:
                raise DuplicateSkill(skill.name)
            table[skill.name] = skill
        return cls(skills=table, generation_tag=generation_tag)

    def __len__(self) -> int:
        return len(self.skills)

    def __contains__(self, name: object) -> bool:
        return name in self.skills

    def __iter__(self):
        return iter(self.skills.values())

    def get(self, name: str) -> Skill:
        try:
            return self.skills[name]
        except KeyError:
            raise UnknownSkill(name) from None

    @property
    def names(self) -> list[str]:
        return list(self.skills)

    def by_category(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for skill in self.skills.values():
            out.setdefault(skill.category or "", []).append(skill.name)
        return out

    def retag(self, generation_tag: str) -> "SkillBank":
        return replace(self, generation_tag=generation_tag)

    def state_text(self) -> str:
        """Canonical dump of the bank contents, for byte-level comparisons."""
        return "".join(f"=== {name}\n{text}" for name, text in self.texts.items())


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _version_key(version: str | None) -> tuple[int, int]:
    return parse_version(version) if version is not None else (-1, -1)


def apply_mutation(
    bank: SkillBank, mutation: Mutation, timestamp: str | None = None
) -> SkillBank:
    """Return a new bank with ``mutation`` applied and logged."""
    ts = timestamp or _now()
    skills = dict(bank.skills)
    texts = dict(bank.texts)
    history = dict(bank.history)
    op = mutation.op
    if op in ("add", "update"):
        skill = mutation.skill
        if skill is None:
            raise ValueError(f"{op} needs a skill")
        name = skill.name
        if skill.version is None:
            raise VersionRegression(f"{name}: a committed skill needs a version")
        old = skills.get(name)
        if op == "update" and old is None:
            raise UnknownSkill(name)
        if old is not None:
            if _version_key(skill.version) <= _version_key(old.version):
                if op == "add":
                    raise DuplicateSkill(name)
                raise VersionRegression(f"{name}: {old.version} -> {skill.version} does not increase")
            history[name] = history.get(name, ()) + (texts[name],)
        from_version = old.version if old is not None else None
        source = "updated" if old is not None else "added"
        committed = replace(skill, source=source, parent_version=from_version)
        text = serialize_skill(committed)
        skills[name] = committed
        texts[name] = text
        record = MutationRecord(ts, op, name, from_version, skill.version, mutation.reason, text)
    elif op == "remove":
        name = mutation.name or ""
        if name not in skills:
            raise UnknownSkill(name)
        old = skills.pop(name)
        texts.pop(name)
        history.pop(name, None)
        record = MutationRecord(ts, op, name, old.version, None, mutation.reason)
    elif op == "rollback":
        name = mutation.name or ""
        if name not in skills:
            raise UnknownSkill(name)
        stack = history.get(name, ())
        if not stack:
            raise NothingToRollback(f"{name} has no earlier version")
        prior_text = stack[-1]
        history[name] = stack[:-1]
        if not history[name]:
            del history[name]
        prior = parse_skill(prior_text)
        from_version = skills[name].version
        skills[name] = replace(prior, source="updated" if name in history else "induced")
        texts[name] = prior_text
        record = MutationRecord(ts, op, name, from_version, prior.version, mutation.reason)
    else:
        raise ValueError(f"unknown mutation {op!r}")
    return SkillBank(
        skills=skills,
        generation_tag=bank.generation_tag,
        mutation_log=bank.mutation_log + (record,),
        texts=texts,
        history=history,
    )


def replay_log(initial: SkillBank, records: Iterable[MutationRecord]) -> SkillBank:
    """Re-apply logged mutations to ``initial``; the result matches the logged bank byte for byte."""
    bank = initial
    for rec in records:
        if rec.op in ("add", "update"):
            if rec.content is None:
                raise BankError(f"log record for {rec.name} carries no content")
            skill = parse_skill(rec.content)
            bank = apply_mutation(bank, Mutation(rec.op, skill=skill, name=rec.name, reason=rec.reason), rec.timestamp)  # type: ignore[arg-type]
        else:
            bank = apply_mutation(bank, Mutation(rec.op, name=rec.name, reason=rec.reason), rec.timestamp)  # type: ignore[arg-type]
    return bank


def read_log(path: str | Path) -> list[MutationRecord]:
    path = Path(path)
    if not path.exists():
        return []
    with open(path, encoding="utf-8") as fh:
        return [MutationRecord.from_json(line) for line in fh if line.strip()]


def load_bank(directory: str | Path, generation_tag: str = "custom", lenient: bool = False) -> SkillBank:
    """Load every ``*.md`` file in ``directory`` (name-sorted).

    Parse errors raise unless ``lenient``, in which case the file is skipped and
    recorded in ``load_issues``. Duplicate names always raise.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"bank directory not found: {directory}")
    skills: dict[str, Skill] = {}
    texts: dict[str, str] = {}
    issues: list[LoadIssue] = []
    for path in sorted(directory.glob("*.md")):
        raw = path.read_bytes().decode("utf-8")
        try:
            skill = parse_skill(raw)
        except SkillFormatError as exc:
            if not lenient:
                exc.path = str(path)  # type: ignore[attr-defined]
                log.error("%s: %s", path, exc)
                raise
            log.warning("skipping %s: %s", path, exc)
            issues.append(LoadIssue(str(path), f"{type(exc).__name__}: {exc}"))
            continue
        if skill.name in skills:
            raise DuplicateSkill(skill.name)
        if path.stem != skill.name:
            issues.append(LoadIssue(str(path), f"file name does not match skill name {skill.name!r}"))
        skills[skill.name] = skill
        texts[skill.name] = raw.replace("\r\n", "\n")
    return SkillBank(
        skills=skills,
        generation_tag=generation_tag,
        mutation_log=tuple(read_log(directory / LOG_NAME)),
        texts=texts,
        load_issues=tuple(issues),
    )


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_bank(bank: SkillBank, directory: str | Path) -> None:
    """Write one ``<name>.md`` per skill plus ``mutations.log``; stale skill files are deleted."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, text in bank.texts.items():
        _atomic_write(directory / f"{name}.md", text)
    for path in directory.glob("*.md"):
        if path.stem not in bank.texts:
            path.unlink()
    _atomic_write(directory / LOG_NAME, "".join(rec.to_json() + "\n" for rec in bank.mutation_log))


# --- retrieval ----------------------------------------------------------------

CATEGORY_PRIORITY = {"meta": 0, "scenario": 1, "technique": 2, "phase": 3}
ACTIVATION_KEYWORDS = ("when to use", "activation", "trigger", "decision rule", "when ")

# Extra lexical cues per seeker state, beyond the label itself.
STATE_CUES: Mapping[str, tuple[str, ...]] = MappingProxyType(
    {
        "Willingness to explore": ("willing", "explore", "curious", "open to"),
        "Self-awareness": ("self-aware", "insight", "realiz"),
        "Depressed mood": ("depress", "low mood", "hopeless", "sad"),
        "Intellectualization": ("intellectual", "analy", "abstract"),
        "Helplessness": ("helpless", "powerless", "stuck"),
        "Advice seeking": ("advice", "how do i", "what should i", "suggestion", "guidance"),
        "Tentative disclosure": ("tentative", "hesitan", "disclos"),
        "Heightened emotional arousal": ("arous", "overwhelm", "panic", "agitat", "intense emotion"),
        "Rumination": ("rumina", "repetitive", "loop", "dwell"),
        "Disorganized expression": ("disorganized", "scattered", "confus"),
        "Avoidance": ("avoid", "withdraw", "deflect"),
        "Indecisiveness": ("indecis", "ambivalen", "undecided", "torn between"),
        "Anger expression": ("anger", "angry", "frustrat", "resent"),
        "Self-blame": ("self-blam", "blame themselves", "blaming themselves", "guilt", "my fault"),
        "High defensiveness": ("defensiv", "resist", "guarded"),
    }
)

_QUOTED = re.compile(r"[\"“]([^\"”\n]{2,80})[\"”]")


def _activation_text(skill: Skill) -> str:
    parts = [skill.description]
    for section in skill.sections:
        title = section.title.lower()
        if any(k in title for k in ACTIVATION_KEYWORDS):
            parts.append(section.title)
            parts.append(section.body)
    return normalize(" ".join(parts))


def trigger_phrases(skill: Skill) -> list[str]:
    """Quoted phrases on lines that mention a trigger, e.g. ``Trigger: seeker asks "how do I," ...``."""
    phrases: list[str] = []
    for line in (skill.preamble + "".join(s.render() for s in skill.sections)).splitlines():
        if "trigger" not in line.lower():
            continue
        for m in _QUOTED.finditer(line):
            phrase = normalize(m.group(1)).strip(" ,.;:!?…")
            if phrase and phrase not in phrases:
                phrases.append(phrase)
    return phrases


def state_matches(skill: Skill, states: Sequence[str]) -> int:
    text = _activation_text(skill)
    hits = 0
    for state in dict.fromkeys(states):
        cues = (normalize(state),) + STATE_CUES.get(state, ())
        if any(cue in text for cue in cues):
            hits += 1
    return hits


def trigger_hits(skill: Skill, utterance: str) -> int:
    said = normalize(utterance).replace("’", "'")
    return sum(1 for phrase in trigger_phrases(skill) if phrase in said)


def rank_key(skill: Skill, states: Sequence[str], utterance: str) -> tuple[int, int, int, str]:
    return (
        -state_matches(skill, states),
        -trigger_hits(skill, utterance),
        CATEGORY_PRIORITY.get(skill.category or "", len(CATEGORY_PRIORITY)),
        skill.name,
    )


def retrieve_skills(
    bank: SkillBank, seeker_states: Sequence[str], last_utterance: str, k: int = 3
) -> list[Skill]:
    """Top-``k`` skills for the seeker's states and latest utterance, deterministically ranked."""
    if k < 1:
        raise ValueError("k must be at least 1")
    ranked = sorted(bank.skills.values(), key=lambda s: rank_key(s, seeker_states, last_utterance))
    return ranked[:k]


class Retriever(Protocol):
    def __call__(self, bank: SkillBank, seeker_states: Sequence[str], last_utterance: str, k: int) -> list[Skill]: ...


def format_skills_section(skills: Sequence[Skill]) -> str:
    """Text injected into the agent prompt's skills slot; empty for the no-skill baseline."""
    if not skills:
        return ""
    blocks = [f"### Skill: {s.name}\n{s.description}\n\n{serialize_body(s)}" for s in skills]
    return "## Relevant Skills\n\n" + "\n".join(blocks)


def serialize_body(skill: Skill) -> str:
    return skill.body_text.strip("\n") + "\n"


def skills_catalog(bank: SkillBank) -> str:
    return "\n".join(f"- {s.name} ({s.category}): {s.description}" for s in bank.skills.values())


def bank_summary(bank: SkillBank) -> dict[str, Any]:
    return {
        "generation_tag": bank.generation_tag,
        "size": len(bank),
        "categories": {k: len(v) for k, v in sorted(bank.by_category().items())},
        "mutations": len(bank.mutation_log),
    }

