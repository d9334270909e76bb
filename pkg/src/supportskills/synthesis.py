"""Backend-driven skill authoring: one SKILL.md per prototype cluster, plus the single-document
chain-of-thought baseline and the response judge."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .backend.port import ChatBackend, ChatRequest
from .backend.prompts import judge_parts, load_template
from .backend.replies import JudgeScores, parse_judge_reply, parse_skill_reply
from .bank import _atomic_write
from .errors import BackendError, ParseError
from .prototype import PrototypeCluster, render_percent
from .skill import Skill, serialize_skill, validate_skill

log = logging.getLogger(__name__)

SYNTH_SYSTEM = "You write executable emotional-support skills as SKILL.md documents."

SYNTH_PROMPT = """Write one SKILL.md that turns the evidence below into a reusable emotional support skill.

Theme: {theme}
Cluster id: {cluster_id}

State-action prototypes (effectiveness = share of positive key responses):
{prototypes}

Representative supporter turns:
{snippets}

Requirements:
- Frontmatter fenced by --- lines with name (kebab-case, prefixed "esc-"), description, and
  metadata with domain "emotional-support-counseling", category (one of meta, phase,
  technique, scenario) and version "1.0".
- Sections: Overview, When to Use, Recommended Actions, Pitfalls to Avoid, Examples.
- Treat prototypes marked RISK as cautions, not recommendations.

Output ONLY the SKILL.md content."""


def _prototype_lines(cluster: PrototypeCluster) -> str:
    lines = []
    for p in cluster.prototypes:
        flag = " RISK" if p.flagged_risk else ""
        neg = f", most common negative change: {p.dominant_negative}" if p.dominant_negative else ""
        lines.append(f"- {p.state} + {p.action}: {render_percent(p.effectiveness)} of {p.n_total}{flag}{neg}")
    return "\n".join(lines)


def synthesis_prompt(cluster: PrototypeCluster) -> str:
    return SYNTH_PROMPT.format(
        theme=cluster.theme,
        cluster_id=cluster.cluster_id,
        prototypes=_prototype_lines(cluster),
        snippets="\n".join(
            f"- Seeker: {pre}\n  Supporter: {said}\n  Seeker after: {post}" for pre, said, post in cluster.sample_snippets
        )
        or "(none)",
    )


@dataclass(frozen=True)
class SynthesisOutcome:
    cluster_id: str
    skill: Skill | None
    error: str | None = None


def synthesize_skills(clusters: Sequence[PrototypeCluster], backend: ChatBackend, temperature: float = 0.0) -> list[SynthesisOutcome]:
    """One candidate skill per cluster; failures are reported per cluster and never raise."""
    outcomes: list[SynthesisOutcome] = []
    names: set[str] = set()
    for cluster in clusters:
        req = ChatRequest.single(SYNTH_SYSTEM, synthesis_prompt(cluster), tag=f"synthesize/{cluster.cluster_id}", temperature=temperature, max_tokens=8192)
        try:
            skill = parse_skill_reply(backend.complete(req))
            problems = validate_skill(skill)
            if problems:
                raise ParseError("; ".join(problems))
            if skill.name in names:
                raise ParseError(f"duplicate skill name {skill.name!r}")
        except (BackendError, ParseError) as exc:
            log.warning("cluster %s: %s", cluster.cluster_id, exc)
            outcomes.append(SynthesisOutcome(cluster.cluster_id, None, f"{type(exc).__name__}: {exc}"))
            continue
        names.add(skill.name)
        outcomes.append(SynthesisOutcome(cluster.cluster_id, skill))
    return outcomes


def write_skills(outcomes: Sequence[SynthesisOutcome], directory: str | Path) -> list[Path]:
    """Write each successful skill as ``<name>.md``; every file is written atomically."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for o in outcomes:
        if o.skill is not None:
            path = out / f"{o.skill.name}.md"
            _atomic_write(path, serialize_skill(o.skill))
            written.append(path)
    return written


_THINKING = re.compile(r"<thinking>.*?</thinking>", re.DOTALL)


def self_generate(backend: ChatBackend, task: str = "Create an emotional support counseling skill.", temperature: float = 0.0) -> Skill:
    """Single-document baseline: the step-by-step self-generation prompt, reasoning stripped."""
    system = load_template("selfgen_cot").render()
    raw = backend.complete(ChatRequest.single(system, task, tag="selfgen", temperature=temperature, max_tokens=8192))
    return parse_skill_reply(_THINKING.sub("", raw))


def judge_response(
    backend: ChatBackend,
    context_id: str,
    situation: str,
    history: str,
    strategy: str,
    response: str,
    temperature: float = 0.0,
) -> JudgeScores:
    system, user = judge_parts()
    msg = user.render(situation=situation, history=history, strategy=strategy, response=response)
    return parse_judge_reply(backend.complete(ChatRequest.single(system.body, msg, tag=f"judge/{context_id}", temperature=temperature)))


def judge_means(scores: Sequence[JudgeScores]) -> dict[str, float]:
    if not scores:
        return {}
    dims = ("empathy", "relevance", "helpfulness", "overall")
    return {d: sum(getattr(s, d) for s in scores) / len(scores) for d in dims}

