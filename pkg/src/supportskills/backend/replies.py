"""Parsers for the structured outputs each backend role is asked to produce."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Any

from ..errors import BadStrategy, InconsistentReport, SkillFormatError, Unparseable, UnknownLabel
from ..skill import Skill, parse_skill
from ..taxonomy import DEFAULT, Taxonomy

RECOMMENDATIONS = ("no_action", "update_existing", "add_new")
_FENCE = re.compile(r"```[A-Za-z0-9_-]*[ \t]*\n(.*?)```", re.DOTALL)
_decoder = json.JSONDecoder()


def extract_json_object(raw: str) -> dict[str, Any]:
    """Return the first JSON object in ``raw``, looking inside code fences first."""
    if not isinstance(raw, str):
        raise Unparseable("reply is not text")
    candidates = [m.group(1) for m in _FENCE.finditer(raw)] + [raw]
    for text in candidates:
        start = text.find("{")
        while start >= 0:
            try:
                obj, _ = _decoder.raw_decode(text, start)
            except json.JSONDecodeError:
                start = text.find("{", start + 1)
                continue
            if isinstance(obj, dict):
                return obj
            start = text.find("{", start + 1)
    raise Unparseable(f"no JSON object found in reply: {raw[:120]!r}")


def _nullable(value: Any) -> str | None:
    if value is None:
        return None
    text = str(value).strip()
    return None if text == "" or text.lower() in ("null", "none", "n/a") else text


def _str_list(value: Any) -> tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, str):
        return (value,) if value.strip() else ()
    if isinstance(value, list):
        return tuple(str(v) for v in value if str(v).strip())
    raise Unparseable(f"expected a list of strings, got {type(value).__name__}")


# --- agent --------------------------------------------------------------------


@dataclass(frozen=True)
class AgentReply:
    strategy: str
    text: str

    def to_json(self) -> str:
        return json.dumps({"strategy": self.strategy, "text": self.text}, ensure_ascii=False)


def parse_agent_reply(raw: str, strict: bool = False, taxonomy: Taxonomy = DEFAULT) -> AgentReply:
    """Parse ``{"strategy": ..., "text": ...}``; unknown strategies become ``Others`` unless ``strict``."""
    obj = extract_json_object(raw)
    text = obj.get("text")
    if not isinstance(text, str) or not text.strip():
        raise Unparseable("agent reply has no text")
    label = str(obj.get("strategy") or "").strip().strip("[]").strip()
    try:
        strategy = taxonomy.validate("strategy", label)
    except UnknownLabel:
        if strict:
            raise BadStrategy(f"unknown strategy {label!r}") from None
        strategy = "Others"
    return AgentReply(strategy, text)


# --- seeker and scorer --------------------------------------------------------------


@dataclass(frozen=True)
class SeekerReply:
    thought: str
    utterance: str
    states: tuple[str, ...] = ()


def parse_seeker_reply(raw: str, taxonomy: Taxonomy = DEFAULT) -> SeekerReply:
    """``{"thought", "utterance", "states"?}``; unknown state labels are dropped."""
    obj = extract_json_object(raw)
    utterance = obj.get("utterance")
    if not isinstance(utterance, str) or not utterance.strip():
        raise Unparseable("seeker reply has no utterance")
    states = []
    for label in _str_list(obj.get("states")):
        try:
            states.append(taxonomy.validate("state", label))
        except UnknownLabel:
            continue
    return SeekerReply(str(obj.get("thought") or ""), utterance, tuple(dict.fromkeys(states)))


@dataclass(frozen=True)
class ScorerReply:
    analysis: str
    delta: int


def parse_scorer_reply(raw: str) -> ScorerReply:
    obj = extract_json_object(raw)
    delta = obj.get("delta")
    if isinstance(delta, bool):
        raise Unparseable("delta must be a number")
    if isinstance(delta, str):
        try:
            delta = float(delta.strip())
        except ValueError:
            raise Unparseable(f"delta is not numeric: {delta!r}") from None
    if not isinstance(delta, (int, float)):
        raise Unparseable("scorer reply has no numeric delta")
    if isinstance(delta, float) and not delta.is_integer():
        raise Unparseable(f"delta must be an integer, got {delta}")
    return ScorerReply(str(obj.get("analysis") or ""), int(delta))


# --- analysis report ----------------------------------------------------------------


@dataclass(frozen=True)
class AnalysisReport:
    profile_id: str
    avg_score: float | None
    analysis: str
    skills_actually_used: tuple[str, ...]
    skill_effectiveness: str
    skill_gaps: tuple[str, ...]
    recommendation: str
    target_skill: str | None
    update_reason: str | None
    new_skill_name: str | None
    new_skill_description: str | None
    reasoning: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "profile_id": self.profile_id,
            "avg_score": self.avg_score,
            "analysis": self.analysis,
            "skills_actually_used": list(self.skills_actually_used),
            "skill_effectiveness": self.skill_effectiveness,
            "skill_gaps": list(self.skill_gaps),
            "recommendation": self.recommendation,
            "target_skill": self.target_skill,
            "update_reason": self.update_reason,
            "new_skill_name": self.new_skill_name,
            "new_skill_description": self.new_skill_description,
            "reasoning": self.reasoning,
        }


def parse_analysis_report(raw: str) -> AnalysisReport:
    obj = extract_json_object(raw)
    rec = str(obj.get("recommendation") or "").strip().lower()
    if rec not in RECOMMENDATIONS:
        raise Unparseable(f"recommendation must be one of {RECOMMENDATIONS}, got {rec!r}")
    avg = obj.get("avg_score")
    if avg is not None:
        try:
            avg = float(avg)
        except (TypeError, ValueError):
            raise Unparseable(f"avg_score is not numeric: {avg!r}") from None
    report = AnalysisReport(
        profile_id=str(obj.get("profile_id") or ""),
        avg_score=avg,
        analysis=str(obj.get("analysis") or ""),
        skills_actually_used=_str_list(obj.get("skills_actually_used")),
        skill_effectiveness=str(obj.get("skill_effectiveness") or ""),
        skill_gaps=_str_list(obj.get("skill_gaps")),
        recommendation=rec,
        target_skill=_nullable(obj.get("target_skill")),
        update_reason=_nullable(obj.get("update_reason")),
        new_skill_name=_nullable(obj.get("new_skill_name")),
        new_skill_description=_nullable(obj.get("new_skill_description")),
        reasoning=str(obj.get("reasoning") or ""),
    )
    if rec == "update_existing" and report.target_skill is None:
        raise InconsistentReport("update_existing requires target_skill")
    if rec == "add_new" and report.new_skill_name is None:
        raise InconsistentReport("add_new requires new_skill_name")
    return report


# --- judge ----------------------------------------------------------------------------

JUDGE_DIMENSIONS = ("empathy", "relevance", "helpfulness", "overall")


@dataclass(frozen=True)
class JudgeScores:
    empathy: int
    relevance: int
    helpfulness: int
    overall: int
    rationale: str = ""


def parse_judge_reply(raw: str) -> JudgeScores:
    obj = extract_json_object(raw)
    values = {}
    for dim in JUDGE_DIMENSIONS:
        v = obj.get(dim)
        if isinstance(v, str) and v.strip().isdigit():
            v = int(v.strip())
        if isinstance(v, float) and v.is_integer():
            v = int(v)
        if isinstance(v, bool) or not isinstance(v, int) or not 1 <= v <= 5:
            raise Unparseable(f"{dim} must be an integer in 1..5, got {v!r}")
        values[dim] = v
    return JudgeScores(**values, rationale=str(obj.get("rationale") or ""))


# --- generated skills -------------------------------------------------------------------


def parse_skill_reply(raw: str) -> Skill:
    """Parse a generated SKILL.md, tolerating a wrapping code fence or chatter before ``---``."""
    text = raw.replace("\r\n", "\n").strip("\n")
    fenced = re.fullmatch(r"```[A-Za-z]*\n(.*?)\n?```", text, re.DOTALL)
    if fenced:
        text = fenced.group(1)
    lines = text.split("\n")
    try:
        start = next(i for i, line in enumerate(lines) if line.rstrip() == "---")
    except StopIteration:
        raise SkillFormatError("generated skill has no frontmatter") from None
    return parse_skill("\n".join(lines[start:]) + "\n")
