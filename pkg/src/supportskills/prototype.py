"""Skill prototypes: (seeker state, support action) groups over key IUs.

Groups below ``min_support`` members are dropped. Groups whose effectiveness
falls below the threshold are *kept* and flagged as risky so synthesis can turn
them into pitfalls.
"""
from __future__ import annotations

import json
import random
import re
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Protocol, Sequence

from .errors import BackendError, EmptyGroup
from .iu import InterventionUnit, classify_key, state_action_pairs
from .taxonomy import DEFAULT, RESPONSE_CHANGES, SEEKER_STATES, Taxonomy

DEFAULT_MIN_SUPPORT = 5
DEFAULT_EFFECTIVENESS_THRESHOLD = Fraction(3, 5)

# Scenario theme used when clustering by seeker state.
STATE_THEMES: dict[str, str] = {
    "Willingness to explore": "problem exploration",
    "Self-awareness": "insight deepening",
    "Depressed mood": "low mood support",
    "Intellectualization": "intellectualization grounding",
    "Helplessness": "low mood support",
    "Advice seeking": "action planning",
    "Tentative disclosure": "opening rapport",
    "Heightened emotional arousal": "emotional crisis",
    "Rumination": "confusion clarification",
    "Disorganized expression": "confusion clarification",
    "Avoidance": "resistance handling",
    "Indecisiveness": "ambivalence guidance",
    "Anger expression": "emotional crisis",
    "Self-blame": "self-blame response",
    "High defensiveness": "resistance handling",
}


@dataclass(frozen=True)
class SkillPrototype:
    state: str
    action: str
    member_ids: tuple[tuple[str, int], ...]
    n_positive: int
    change_histogram: dict[str, int] = field(hash=False)
    flagged_risk: bool = False
    dominant_negative: str | None = None

    @property
    def n_total(self) -> int:
        return len(self.member_ids)

    @property
    def effectiveness(self) -> Fraction:
        return effectiveness_rate(self.n_positive, self.n_total)

    def to_record(self) -> dict[str, Any]:
        return {
            "state": self.state,
            "action": self.action,
            "member_ids": [list(m) for m in self.member_ids],
            "n_total": self.n_total,
            "n_positive": self.n_positive,
            "effectiveness": float(self.effectiveness),
            "effectiveness_pct": render_percent(self.effectiveness),
            "change_histogram": dict(self.change_histogram),
            "flagged_risk": self.flagged_risk,
            "dominant_negative": self.dominant_negative,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "SkillPrototype":
        return cls(
            state=record["state"],
            action=record["action"],
            member_ids=tuple((d, int(t)) for d, t in record["member_ids"]),
            n_positive=int(record["n_positive"]),
            change_histogram=dict(record["change_histogram"]),
            flagged_risk=bool(record.get("flagged_risk", False)),
            dominant_negative=record.get("dominant_negative"),
        )


@dataclass(frozen=True)
class PrototypeCluster:
    cluster_id: str
    theme: str
    prototypes: tuple[SkillPrototype, ...]
    sample_snippets: tuple[tuple[str, str, str], ...] = ()

    def to_record(self) -> dict[str, Any]:
        return {
            "cluster_id": self.cluster_id,
            "theme": self.theme,
            "prototypes": [p.to_record() for p in self.prototypes],
            "sample_snippets": [list(s) for s in self.sample_snippets],
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "PrototypeCluster":
        return cls(
            cluster_id=record["cluster_id"],
            theme=record["theme"],
            prototypes=tuple(SkillPrototype.from_record(p) for p in record["prototypes"]),
            sample_snippets=tuple(tuple(s) for s in record.get("sample_snippets", [])),  # type: ignore[misc]
        )


def effectiveness_rate(n_positive: int, n_total: int) -> Fraction:
    if n_total <= 0:
        raise EmptyGroup("effectiveness of an empty group is undefined")
    if not 0 <= n_positive <= n_total:
        raise ValueError(f"n_positive={n_positive} outside [0, {n_total}]")
    return Fraction(n_positive, n_total)


def render_percent(rate: Fraction) -> str:
    """Percent with one decimal, rounding halves up: 3/7 -> '42.9%'."""
    scaled = Fraction(rate) * 1000
    tenths = (2 * scaled.numerator + scaled.denominator) // (2 * scaled.denominator)
    return f"{tenths // 10}.{tenths % 10}%"


def _dominant_negative(histogram: dict[str, int], taxonomy: Taxonomy) -> str | None:
    negatives = [(count, label) for label, count in histogram.items() if taxonomy.direction(label) == "negative" and count]
    if not negatives:
        return None
    order = {label: i for i, label in enumerate(RESPONSE_CHANGES)}
    return min(negatives, key=lambda cl: (-cl[0], order[cl[1]]))[1]


def group_prototypes(
    key_ius: Iterable[InterventionUnit],
    min_support: int = DEFAULT_MIN_SUPPORT,
    effectiveness_threshold: Fraction | float = DEFAULT_EFFECTIVENESS_THRESHOLD,
    expand: str = "cross",
    taxonomy: Taxonomy = DEFAULT,
) -> list[SkillPrototype]:
    """Group key IUs by (state, action) and keep groups with at least ``min_support`` members.

    Non-key IUs are ignored. Multi-label IUs contribute one membership per
    (state, action) combination unless ``expand='first'``.
    """
    members: dict[tuple[str, str], list[InterventionUnit]] = defaultdict(list)
    for iu in key_ius:
        if classify_key(iu) == "non_key":
            continue
        for pair in state_action_pairs(iu, expand):
            members[pair].append(iu)
    threshold = Fraction(effectiveness_threshold)
    out = []
    for (state, action), group in sorted(members.items()):
        if len(group) < min_support:
            continue
        histogram = dict(sorted(Counter(iu.response_change for iu in group).items()))
        n_pos = sum(1 for iu in group if iu.change_direction == "positive")
        out.append(
            SkillPrototype(
                state=state,
                action=action,
                member_ids=tuple(iu.key for iu in group),
                n_positive=n_pos,
                change_histogram=histogram,
                flagged_risk=Fraction(n_pos, len(group)) < threshold,
                dominant_negative=_dominant_negative(histogram, taxonomy),
            )
        )
    return out


def flag_risk(
    prototypes: Iterable[SkillPrototype],
    effectiveness_threshold: Fraction | float = DEFAULT_EFFECTIVENESS_THRESHOLD,
) -> tuple[list[SkillPrototype], list[SkillPrototype]]:
    """Split into (recommended, risk); a prototype exactly at the threshold is recommended."""
    threshold = Fraction(effectiveness_threshold)
    if not 0 < threshold <= 1:
        raise ValueError("effectiveness_threshold must be in (0, 1]")
    recommended, risk = [], []
    for p in prototypes:
        flagged = p.effectiveness < threshold
        p = replace(p, flagged_risk=flagged)
        (risk if flagged else recommended).append(p)
    return recommended, risk


def _slug(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")


class Clusterer(Protocol):
    def __call__(self, prototypes: Sequence[SkillPrototype]) -> list[tuple[str, str, list[SkillPrototype]]]:
        """Return ``(cluster_id, theme, members)`` triples covering every prototype once."""
        ...


def state_clusterer(prototypes: Sequence[SkillPrototype]) -> list[tuple[str, str, list[SkillPrototype]]]:
    """Group by seeker state, then fold singleton groups into a group sharing their action."""
    state_order = {s: i for i, s in enumerate(SEEKER_STATES)}
    by_state: dict[str, list[SkillPrototype]] = defaultdict(list)
    for p in prototypes:
        by_state[p.state].append(p)
    states = sorted(by_state, key=lambda s: (state_order.get(s, len(state_order)), s))
    groups = {s: sorted(by_state[s], key=lambda p: (p.state, p.action)) for s in states}
    for state in states:
        group = groups.get(state)
        if group is None or len(group) != 1:
            continue
        action = group[0].action
        candidates = [s for s in states if s != state and s in groups and any(p.action == action for p in groups[s])]
        if not candidates:
            continue
        # prefer folding into a multi-member group
        target = sorted(candidates, key=lambda s: (len(groups[s]) == 1, states.index(s)))[0]
        groups[target] = groups[target] + group
        del groups[state]
    return [(_slug(s), STATE_THEMES.get(s, s.lower()), members) for s, members in groups.items()]


SEMANTIC_PROMPT = """You group emotional-support intervention prototypes into recurring support scenarios.
Each prototype is a (seeker state, support action) pair with an effectiveness rate.
Put every prototype in exactly one cluster. Output ONLY a JSON object:
{"clusters": [{"theme": "<short scenario name>", "members": [<prototype indices>]}]}

Prototypes:
"""


class BackendClusterer:
    """Delegate clustering to a chat backend and validate that the answer is a partition."""

    def __init__(self, backend: Any, tag: str = "cluster") -> None:
        self.backend = backend
        self.tag = tag

    def __call__(self, prototypes: Sequence[SkillPrototype]) -> list[tuple[str, str, list[SkillPrototype]]]:
        from .backend.port import ChatRequest
        from .backend.replies import extract_json_object

        listing = "\n".join(
            f"{i}. {p.state} x {p.action} (n={p.n_total}, eff={render_percent(p.effectiveness)})"
            for i, p in enumerate(prototypes)
        )
        req = ChatRequest(system=SEMANTIC_PROMPT + listing, messages=(("user", "Cluster the prototypes."),), tag=self.tag)
        raw = self.backend.complete(req)
        try:
            data = extract_json_object(raw)
            clusters = data["clusters"]
            seen: list[int] = []
            out = []
            for n, c in enumerate(clusters):
                idx = [int(i) for i in c["members"]]
                seen.extend(idx)
                if not idx:
                    raise ValueError("empty cluster")
                theme = str(c.get("theme") or f"cluster {n}")
                out.append((f"{n:02d}-{_slug(theme)}", theme, [prototypes[i] for i in idx]))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise BackendError(f"semantic clusterer returned an unusable answer: {exc}") from exc
        if sorted(seen) != list(range(len(prototypes))):
            raise BackendError("semantic clusterer did not return a partition of the prototypes")
        return out


def cluster_prototypes(
    prototypes: Sequence[SkillPrototype],
    clusterer: Clusterer = state_clusterer,
    ius: Iterable[InterventionUnit] = (),
    snippets_per_cluster: int = 3,
    seed: int = 0,
) -> list[PrototypeCluster]:
    """Partition prototypes into clusters and attach representative snippets.

    Snippets come from member IUs of the cluster's prototypes, latest turns
    first; ties are ordered by a seeded shuffle so output is reproducible.
    """
    by_key = {iu.key: iu for iu in ius}
    clusters = []
    for cluster_id, theme, members in clusterer(list(prototypes)):
        keys = sorted({k for p in members for k in p.member_ids if k in by_key})
        rng = random.Random(f"{seed}:{cluster_id}")
        tiebreak = {k: rng.random() for k in keys}
        keys.sort(key=lambda k: (-k[1], tiebreak[k]))
        snippets = tuple(
            (by_key[k].pre_seeker_text, by_key[k].supporter_text, by_key[k].post_seeker_text)
            for k in keys[:snippets_per_cluster]
        )
        clusters.append(PrototypeCluster(cluster_id, theme, tuple(members), snippets))
    return clusters


def summary_table(prototypes: Iterable[SkillPrototype], min_support: int | None = None) -> str:
    """Plain-text table sorted by effectiveness (desc), then support (desc)."""
    rows = sorted(prototypes, key=lambda p: (-p.effectiveness, -p.n_total, p.state, p.action))
    header = f"{'Seeker State':<30} {'Support Action':<32} {'#IUs':>5} {'Eff.':>7}  Negative Impact"
    lines = []
    if min_support is not None:
        lines.append(f"# min_support={min_support}")
    lines += [header, "-" * len(header)]
    for p in rows:
        lines.append(
            f"{p.state:<30} {p.action:<32} {p.n_total:>5} {render_percent(p.effectiveness):>7}  {p.dominant_negative or '-'}"
        )
    return "\n".join(lines)


def write_prototypes(prototypes: Iterable[SkillPrototype], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in prototypes:
            fh.write(json.dumps(p.to_record(), ensure_ascii=False) + "\n")


def read_prototypes(path: str | Path) -> list[SkillPrototype]:
    with open(path, encoding="utf-8") as fh:
        return [SkillPrototype.from_record(json.loads(line)) for line in fh if line.strip()]


def write_clusters(clusters: Iterable[PrototypeCluster], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in clusters:
            fh.write(json.dumps(c.to_record(), ensure_ascii=False) + "\n")


def read_clusters(path: str | Path) -> list[PrototypeCluster]:
    with open(path, encoding="utf-8") as fh:
        return [PrototypeCluster.from_record(json.loads(line)) for line in fh if line.strip()]
