"""Verification-gated skill evolution.

Pipeline: simulate every profile against the current bank, ask the designer
backend for a per-profile analysis report, consolidate the reports into a plan
of updates and additions, then run a generate -> verify loop for each entry.
A candidate is accepted when every verification conversation succeeds or its
average final score strictly beats the baseline; after ``max_attempts``
failures the entry is rejected (updates roll back, additions are dropped).

All candidates are verified against the bank as it stood before the loop, so
one entry's outcome never depends on another's. Accepted candidates are
committed through :func:`apply_mutation`; the audit carries the committed log
records, so the final bank can be rebuilt from the initial bank plus the audit.

Backend call tags:
  ``simulate/{pid}/{role}``                 stage-one simulation
  ``analyze/{pid}``                         per-profile analysis
  ``consolidate``                           plan consolidation (backend mode)
  ``baseline/{skill}/{pid}/{role}``         baseline re-simulation
  ``update/{skill}``, ``create/{skill}``    candidate generation, n-th call = attempt n
  ``verify/{skill}/{attempt}/{pid}/{role}`` verification conversations
"""
from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Literal, Sequence

from .backend.port import ChatBackend, ChatRequest
from .backend.prompts import load_template
from .backend.replies import AnalysisReport, extract_json_object, parse_analysis_report, parse_skill_reply
from .bank import Mutation, MutationRecord, SkillBank, apply_mutation, replay_log, skills_catalog
from .errors import BackendError, NameCollision, ParseError, SupportSkillsError
from .simulation import SeekerProfile, SimConfig, SimulationReport, Transcript, batch_simulate, format_transcript
from .skill import CREATE_SCHEMA, DOMAIN, Skill, parse_version, serialize_skill, validate_skill

log = logging.getLogger(__name__)

Decision = Literal["accept", "retry", "reject"]
DESIGNER_SYSTEM = "You are a careful assistant. Follow the instructions in the user message exactly."


def decide(all_success: bool, avg_score: float, baseline_avg: float, attempt: int, max_attempts: int = 3) -> Decision:
    """The acceptance gate. Ties with the baseline never accept."""
    if not 1 <= attempt <= max_attempts:
        raise ValueError(f"attempt {attempt} outside 1..{max_attempts}")
    if all_success or avg_score > baseline_avg:
        return "accept"
    return "retry" if attempt < max_attempts else "reject"


@dataclass(frozen=True)
class Backends:
    agent: ChatBackend
    seeker: ChatBackend
    scorer: ChatBackend
    designer: ChatBackend

    @classmethod
    def single(cls, backend: ChatBackend) -> "Backends":
        return cls(backend, backend, backend, backend)


@dataclass(frozen=True)
class EvolveConfig:
    n_verify: int = 15
    max_attempts: int = 3
    parallelism: int = 1
    consolidator: Literal["deterministic", "backend"] = "deterministic"
    n_examples: int = 2
    sim: SimConfig = field(default_factory=SimConfig)
    reference_skill: str | None = None
    temperature: float = 0.0
    max_tokens: int = 8192

    def __post_init__(self) -> None:
        if self.n_verify < 1 or self.max_attempts < 1 or self.parallelism < 1:
            raise ValueError("n_verify, max_attempts and parallelism must be >= 1")
        if self.consolidator not in ("deterministic", "backend"):
            raise ValueError(f"unknown consolidator {self.consolidator!r}")


@dataclass(frozen=True)
class UpdateEntry:
    target_skill: str
    merged_reasons: tuple[str, ...]
    key_improvements: tuple[str, ...]
    evidence_profile_ids: tuple[str, ...]
    evidence_avg_score: float


@dataclass(frozen=True)
class AdditionEntry:
    new_skill_name: str
    description: str
    rationale: str
    evidence_profile_ids: tuple[str, ...]
    evidence_avg_score: float


@dataclass(frozen=True)
class EvolutionPlan:
    updates: tuple[UpdateEntry, ...] = ()
    additions: tuple[AdditionEntry, ...] = ()

    @property
    def sizes(self) -> tuple[int, int]:
        return len(self.updates), len(self.additions)

    @property
    def is_empty(self) -> bool:
        return not self.updates and not self.additions


@dataclass(frozen=True)
class VerificationResult:
    skill_name: str
    attempt: int
    profile_scores: tuple[tuple[str, int, str], ...]
    avg_score: float
    all_success: bool
    baseline_avg: float
    decision: Decision


# --- analysis -------------------------------------------------------------------------


def _used_skills(transcripts: Sequence[Transcript]) -> list[str]:
    return list(dict.fromkeys(name for t in transcripts for name in t.skills_used))


def analyze_profile(
    profile: SeekerProfile,
    transcripts: Sequence[Transcript],
    bank: SkillBank,
    backend: ChatBackend,
    temperature: float = 0.0,
) -> AnalysisReport:
    if not transcripts:
        raise ValueError(f"no transcripts for profile {profile.profile_id}")
    used = [n for n in _used_skills(transcripts) if n in bank]
    prompt = load_template("analysis").render(
        task=profile.task,
        scene_summary=profile.scene_summary[:500],
        skills_catalog=skills_catalog(bank),
        skills_used_list="\n".join(f"- {n}" for n in used) or "(none)",
        used_skills_content="\n\n".join(bank.texts[n] for n in used) or "(none)",
        conversations_text="\n\n".join(format_transcript(t) for t in transcripts),
    )
    raw = backend.complete(ChatRequest.single(DESIGNER_SYSTEM, prompt, tag=f"analyze/{profile.profile_id}", temperature=temperature))
    report = parse_analysis_report(raw)
    return replace(report, profile_id=profile.profile_id)


# --- consolidation ----------------------------------------------------------------------


def normalize_skill_name(name: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", name.casefold()).strip("-")
    return slug


def _mean(values: Iterable[float]) -> float:
    vals = list(values)
    return sum(vals) / len(vals) if vals else 0.0


def _report_score(report: AnalysisReport, finals: dict[str, int]) -> float:
    if report.avg_score is not None:
        return report.avg_score
    return float(finals.get(report.profile_id, 0))


def consolidate_deterministic(
    reports: Sequence[AnalysisReport], bank: SkillBank, finals: dict[str, int] | None = None
) -> EvolutionPlan:
    """Group updates by exact target and dedupe proposals by normalized name.

    Entries keep first-appearance order. Update targets missing from the bank and
    proposals whose name is already taken are dropped with a warning.
    """
    finals = finals or {}
    updates: dict[str, list[AnalysisReport]] = {}
    additions: dict[str, list[AnalysisReport]] = {}
    taken = {normalize_skill_name(n) for n in bank.names}
    for r in reports:
        if r.recommendation == "update_existing":
            assert r.target_skill is not None
            if r.target_skill not in bank:
                log.warning("report %s targets unknown skill %s; dropped", r.profile_id, r.target_skill)
                continue
            updates.setdefault(r.target_skill, []).append(r)
        elif r.recommendation == "add_new":
            assert r.new_skill_name is not None
            key = normalize_skill_name(r.new_skill_name)
            if key in taken:
                log.warning("proposal %s collides with an existing skill; dropped", r.new_skill_name)
                continue
            additions.setdefault(key, []).append(r)
    plan_updates = []
    for target, group in updates.items():
        plan_updates.append(
            UpdateEntry(
                target_skill=target,
                merged_reasons=tuple(dict.fromkeys(r.update_reason for r in group if r.update_reason)),
                key_improvements=tuple(dict.fromkeys(g for r in group for g in r.skill_gaps)),
                evidence_profile_ids=tuple(dict.fromkeys(r.profile_id for r in group)),
                evidence_avg_score=_mean(_report_score(r, finals) for r in group),
            )
        )
    plan_additions = []
    for key, group in additions.items():
        first = group[0]
        plan_additions.append(
            AdditionEntry(
                new_skill_name=key,
                description=first.new_skill_description or "",
                rationale=" ".join(dict.fromkeys(r.reasoning for r in group if r.reasoning)),
                evidence_profile_ids=tuple(dict.fromkeys(r.profile_id for r in group)),
                evidence_avg_score=_mean(_report_score(r, finals) for r in group),
            )
        )
    return EvolutionPlan(tuple(plan_updates), tuple(plan_additions))


CONSOLIDATE_PROMPT = """Merge the following skill-bank recommendations into one plan.
Combine update reasons that target the same skill, and merge new-skill proposals that describe
the same gap into a single canonical proposal with a kebab-case name.

Existing skills: {names}

Recommendations (JSON lines):
{reports}

Output ONLY a JSON object:
{{"updates": [{{"target_skill": "...", "merged_reasons": ["..."], "key_improvements": ["..."], "evidence_profile_ids": ["..."]}}],
  "additions": [{{"new_skill_name": "...", "description": "...", "rationale": "...", "evidence_profile_ids": ["..."]}}]}}"""


def consolidate_with_backend(
    reports: Sequence[AnalysisReport], bank: SkillBank, backend: ChatBackend, finals: dict[str, int] | None = None
) -> EvolutionPlan:
    finals = finals or {}
    actionable = [r for r in reports if r.recommendation != "no_action"]
    if not actionable:
        return EvolutionPlan()
    prompt = CONSOLIDATE_PROMPT.format(
        names=", ".join(bank.names), reports="\n".join(json.dumps(r.to_dict(), ensure_ascii=False) for r in actionable)
    )
    obj = extract_json_object(backend.complete(ChatRequest.single(DESIGNER_SYSTEM, prompt, tag="consolidate")))
    by_id = {r.profile_id: r for r in reports}

    def evidence(entry: dict) -> tuple[tuple[str, ...], float]:
        ids = tuple(dict.fromkeys(str(i) for i in entry.get("evidence_profile_ids") or []))
        if not ids or any(i not in by_id for i in ids):
            raise ParseError(f"plan entry cites unknown evidence: {ids}")
        return ids, _mean(_report_score(by_id[i], finals) for i in ids)

    updates, seen = [], set()
    for e in obj.get("updates") or []:
        target = str(e.get("target_skill") or "")
        if target not in bank or target in seen:
            raise ParseError(f"bad or repeated update target {target!r}")
        seen.add(target)
        ids, avg = evidence(e)
        updates.append(
            UpdateEntry(target, tuple(map(str, e.get("merged_reasons") or [])), tuple(map(str, e.get("key_improvements") or [])), ids, avg)
        )
    additions, names = [], {normalize_skill_name(n) for n in bank.names}
    for e in obj.get("additions") or []:
        name = normalize_skill_name(str(e.get("new_skill_name") or ""))
        if not name or name in names:
            raise ParseError(f"bad or colliding proposal {name!r}")
        names.add(name)
        ids, avg = evidence(e)
        additions.append(AdditionEntry(name, str(e.get("description") or ""), str(e.get("rationale") or ""), ids, avg))
    return EvolutionPlan(tuple(updates), tuple(additions))


def consolidate(
    reports: Sequence[AnalysisReport],
    bank: SkillBank,
    backend: ChatBackend | None = None,
    finals: dict[str, int] | None = None,
) -> EvolutionPlan:
    """Backend consolidation when a backend is given, falling back to the deterministic grouping."""
    if backend is None:
        return consolidate_deterministic(reports, bank, finals)
    try:
        return consolidate_with_backend(reports, bank, backend, finals)
    except (BackendError, ParseError) as exc:
        log.warning("backend consolidation failed (%s); using deterministic grouping", exc)
        return consolidate_deterministic(reports, bank, finals)


# --- generation -------------------------------------------------------------------------


class CandidateRejected(SupportSkillsError):
    """A generated candidate broke a format or lineage rule; counts as a failed attempt."""


def _examples(transcripts: Sequence[Transcript]) -> str:
    return "\n\n".join(format_transcript(t) for t in transcripts) or "(none)"


def check_update_candidate(original: Skill, candidate: Skill) -> None:
    if candidate.name != original.name:
        raise CandidateRejected(f"candidate renamed {original.name!r} to {candidate.name!r}")
    if candidate.version is None or original.version is None:
        raise CandidateRejected("candidate and original must both carry versions")
    if parse_version(candidate.version) <= parse_version(original.version):
        raise CandidateRejected(f"version {original.version} -> {candidate.version} does not increase")
    if (candidate.metadata.domain, candidate.category) != (original.metadata.domain, original.category):
        raise CandidateRejected("candidate changed domain or category")
    problems = validate_skill(candidate)
    if problems:
        raise CandidateRejected("; ".join(problems))


def check_new_candidate(name: str, candidate: Skill) -> None:
    if candidate.name != name:
        raise CandidateRejected(f"candidate is named {candidate.name!r}, expected {name!r}")
    if candidate.version != "1.0":
        raise CandidateRejected(f"new skills start at version 1.0, got {candidate.version!r}")
    if candidate.metadata.domain != DOMAIN:
        raise CandidateRejected(f"domain must be {DOMAIN!r}")
    problems = validate_skill(candidate, CREATE_SCHEMA)
    if problems:
        raise CandidateRejected("; ".join(problems))


def generate_update(
    original: Skill,
    original_text: str,
    entry: UpdateEntry,
    examples: Sequence[Transcript],
    backend: ChatBackend,
    temperature: float = 0.0,
    max_tokens: int = 8192,
) -> Skill:
    prompt = load_template("skill_update").render(
        current_content=original_text.rstrip("\n"),
        update_reason="\n".join(f"- {r}" for r in entry.merged_reasons) or "(unspecified)",
        key_improvements="\n".join(f"- {k}" for k in entry.key_improvements) or "(unspecified)",
        evidence_count=len(entry.evidence_profile_ids),
        avg_score=entry.evidence_avg_score,
        conversation_examples=_examples(examples),
    )
    raw = backend.complete(
        ChatRequest.single(DESIGNER_SYSTEM, prompt, tag=f"update/{original.name}", temperature=temperature, max_tokens=max_tokens)
    )
    candidate = parse_skill_reply(raw)
    check_update_candidate(original, candidate)
    return candidate


def generate_new(
    entry: AdditionEntry,
    bank: SkillBank,
    reference: str,
    examples: Sequence[Transcript],
    backend: ChatBackend,
    temperature: float = 0.0,
    max_tokens: int = 8192,
) -> Skill:
    if entry.new_skill_name in bank:
        raise NameCollision(f"{entry.new_skill_name} already exists in the bank")
    prompt = load_template("skill_create").render(
        reference_skill=reference.rstrip("\n"),
        skill_name=entry.new_skill_name,
        description=entry.description,
        rationale=entry.rationale or "(unspecified)",
        evidence_count=len(entry.evidence_profile_ids),
        avg_score=entry.evidence_avg_score,
        conversation_examples=_examples(examples),
        skills_list="\n".join(f"- {n}" for n in bank.names) or "(empty)",
    )
    raw = backend.complete(
        ChatRequest.single(DESIGNER_SYSTEM, prompt, tag=f"create/{entry.new_skill_name}", temperature=temperature, max_tokens=max_tokens)
    )
    candidate = parse_skill_reply(raw)
    check_new_candidate(entry.new_skill_name, candidate)
    return candidate


# --- verification ------------------------------------------------------------------------


def select_profiles(
    stage: SimulationReport, n: int, skill: str | None = None
) -> list[str]:
    """Lowest-scoring profiles (ties by id). With ``skill``, profiles that used it come first;
    the rest of the quota is filled from the globally lowest-scoring profiles."""
    ranked = sorted(stage.transcripts, key=lambda t: (t.final_score, t.profile_id))
    chosen: list[str] = []
    if skill is not None:
        chosen = [t.profile_id for t in ranked if skill in t.skills_used][:n]
    for t in ranked:
        if len(chosen) >= n:
            break
        if t.profile_id not in chosen:
            chosen.append(t.profile_id)
    return chosen


def with_candidate(bank: SkillBank, candidate: Skill) -> SkillBank:
    """The bank plus ``candidate`` (replacing a same-named skill), without touching the log."""
    skills = dict(bank.skills)
    skills[candidate.name] = candidate
    texts = {k: v for k, v in bank.texts.items() if k != candidate.name}
    return SkillBank(skills=skills, generation_tag=bank.generation_tag, texts=texts)


def verify_skill(
    candidate: Skill,
    base: SkillBank,
    profiles: Sequence[SeekerProfile],
    backends: Backends,
    baseline_avg: float,
    attempt: int,
    config: EvolveConfig = EvolveConfig(),
) -> VerificationResult:
    report = batch_simulate(
        profiles,
        with_candidate(base, candidate),
        backends.agent,
        backends.seeker,
        backends.scorer,
        parallelism=config.parallelism,
        config=config.sim,
        run=f"verify/{candidate.name}/{attempt}",
    )
    scores = tuple((t.profile_id, t.final_score, t.outcome if not t.aborted else "Aborted") for t in report.transcripts)
    all_success = all(t.succeeded for t in report.transcripts)
    return VerificationResult(
        skill_name=candidate.name,
        attempt=attempt,
        profile_scores=scores,
        avg_score=report.avg_score,
        all_success=all_success,
        baseline_avg=baseline_avg,
        decision=decide(all_success, report.avg_score, baseline_avg, attempt, config.max_attempts),
    )


# --- audit ---------------------------------------------------------------------------------


@dataclass
class EvolutionAudit:
    records: list[dict[str, Any]] = field(default_factory=list)

    def add(self, phase: str, **fields: Any) -> dict[str, Any]:
        rec = {"seq": len(self.records), "phase": phase, **fields}
        self.records.append(rec)
        return rec

    def commits(self) -> list[MutationRecord]:
        return [MutationRecord(**r["mutation"]) for r in self.records if r["phase"] == "commit"]

    def decisions(self) -> dict[str, str]:
        return {r["skill"]: r["decision"] for r in self.records if r["phase"] == "final"}

    def to_ndjson(self) -> str:
        return "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in self.records)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_ndjson(), encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "EvolutionAudit":
        with open(path, encoding="utf-8") as fh:
            return cls([json.loads(line) for line in fh if line.strip()])


def replay_audit(initial: SkillBank, audit: EvolutionAudit) -> SkillBank:
    """Rebuild the evolved bank from the pre-evolution bank and the audit alone."""
    return replay_log(initial, audit.commits())


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _record_dict(rec: MutationRecord) -> dict[str, Any]:
    return json.loads(rec.to_json())


class FixedClock:
    """Deterministic timestamps: ``start`` plus one second per call."""

    def __init__(self, start: str = "2000-01-01T00:00:00+00:00") -> None:
        self._t = datetime.fromisoformat(start)

    def __call__(self) -> str:
        out = self._t.isoformat(timespec="seconds")
        self._t += timedelta(seconds=1)
        return out


def _utc_clock() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# --- end to end ------------------------------------------------------------------------------


@dataclass(frozen=True)
class EvolveResult:
    bank: SkillBank
    audit: EvolutionAudit
    plan: EvolutionPlan
    stage1: SimulationReport
    reports: tuple[AnalysisReport, ...]


def evolve(
    bank: SkillBank,
    profiles: Sequence[SeekerProfile],
    backends: Backends,
    config: EvolveConfig = EvolveConfig(),
    clock: Callable[[], str] = _utc_clock,
) -> EvolveResult:
    if not profiles:
        raise ValueError("evolve needs at least one profile")
    by_id = {p.profile_id: p for p in profiles}
    audit = EvolutionAudit()
    stage1 = batch_simulate(
        profiles, bank, backends.agent, backends.seeker, backends.scorer, config.parallelism, config.sim, run="simulate"
    )
    transcripts = stage1.by_profile()
    finals = {pid: t.final_score for pid, t in transcripts.items()}
    audit.add("simulate", summary=stage1.summary())

    reports: list[AnalysisReport] = []
    for p in profiles:
        try:
            report = analyze_profile(p, [transcripts[p.profile_id]], bank, backends.designer, config.temperature)
        except (BackendError, ParseError) as exc:
            audit.add("analyze", profile_id=p.profile_id, error=f"{type(exc).__name__}: {exc}")
            continue
        reports.append(report)
        audit.add("analyze", profile_id=p.profile_id, recommendation=report.recommendation,
                  target=report.target_skill or report.new_skill_name)

    designer = backends.designer if config.consolidator == "backend" else None
    plan = consolidate(reports, bank, designer, finals)
    audit.add(
        "plan",
        updates=[u.target_skill for u in plan.updates],
        additions=[a.new_skill_name for a in plan.additions],
        note="no_action" if plan.is_empty else "",
    )

    base = bank
    current = bank
    reference = config.reference_skill or (base.names[0] if len(base) else None)
    entries: list[tuple[str, UpdateEntry | AdditionEntry]] = [("update", u) for u in plan.updates]
    entries += [("add", a) for a in plan.additions]
    for kind, entry in entries:
        name = entry.target_skill if isinstance(entry, UpdateEntry) else entry.new_skill_name
        chosen = select_profiles(stage1, config.n_verify, name if kind == "update" else None)
        chosen_profiles = [by_id[pid] for pid in chosen]
        baseline = batch_simulate(
            chosen_profiles, base, backends.agent, backends.seeker, backends.scorer,
            config.parallelism, config.sim, run=f"baseline/{name}",
        )
        evidence = [transcripts[pid] for pid in entry.evidence_profile_ids if pid in transcripts]
        if kind == "update":
            evidence = sorted(
                [t for t in stage1.transcripts if name in t.skills_used] or evidence,
                key=lambda t: (t.final_score, t.profile_id),
            )
        else:
            evidence = sorted(evidence, key=lambda t: (t.final_score, t.profile_id))
        examples = evidence[: config.n_examples]

        accepted: tuple[Skill, VerificationResult] | None = None
        for attempt in range(1, config.max_attempts + 1):
            try:
                if isinstance(entry, UpdateEntry):
                    candidate = generate_update(
                        base.get(name), base.texts[name], entry, examples, backends.designer, config.temperature, config.max_tokens
                    )
                else:
                    ref_text = base.texts[reference] if reference is not None else ""
                    candidate = generate_new(entry, base, ref_text, examples, backends.designer, config.temperature, config.max_tokens)
            except NameCollision as exc:
                audit.add("attempt", skill=name, kind=kind, attempt=attempt, decision="reject", error=str(exc))
                break
            except (BackendError, ParseError, CandidateRejected) as exc:
                decision = "retry" if attempt < config.max_attempts else "reject"
                audit.add("attempt", skill=name, kind=kind, attempt=attempt, decision=decision,
                          error=f"{type(exc).__name__}: {exc}", baseline_avg=baseline.avg_score)
                continue
            result = verify_skill(candidate, base, chosen_profiles, backends, baseline.avg_score, attempt, config)
            audit.add(
                "attempt",
                skill=name,
                kind=kind,
                attempt=attempt,
                decision=result.decision,
                avg_score=result.avg_score,
                baseline_avg=result.baseline_avg,
                all_success=result.all_success,
                profile_scores=[list(s) for s in result.profile_scores],
                diff_digest=_digest(serialize_skill(candidate)),
                version=candidate.version,
            )
            if result.decision == "accept":
                accepted = (candidate, result)
                break

        if accepted is not None:
            candidate, result = accepted
            mutation = Mutation.update(candidate, "verified") if kind == "update" else Mutation.add(candidate, "verified")
            current = apply_mutation(current, mutation, clock())
            audit.add("commit", skill=name, attempt=result.attempt, mutation=_record_dict(current.mutation_log[-1]))
            audit.add("final", skill=name, kind=kind, decision="accept", attempt=result.attempt)
        else:
            # nothing was committed, so restoring is a no-op on the bank; the audit
            # still records what would have been undone
            audit.add("final", skill=name, kind=kind, decision="rollback" if kind == "update" else "remove")
    return EvolveResult(current, audit, plan, stage1, tuple(reports))


def bank_diff(before: SkillBank, after: SkillBank) -> dict[str, list[str]]:
    return {
        "added": sorted(set(after.names) - set(before.names)),
        "removed": sorted(set(before.names) - set(after.names)),
        "changed": sorted(n for n in set(before.names) & set(after.names) if before.texts[n] != after.texts[n]),
    }


__all__ = [
    "AdditionEntry",
    "Backends",
    "CandidateRejected",
    "EvolutionAudit",
    "EvolutionPlan",
    "EvolveConfig",
    "EvolveResult",
    "FixedClock",
    "UpdateEntry",
    "VerificationResult",
    "analyze_profile",
    "bank_diff",
    "check_new_candidate",
    "check_update_candidate",
    "consolidate",
    "consolidate_deterministic",
    "decide",
    "evolve",
    "generate_new",
    "generate_update",
    "replay_audit",
    "select_profiles",
    "verify_skill",
]
