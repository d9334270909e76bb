"""Reference-based response metrics: strategy accuracy, BLEU, ROUGE and exact-match METEOR.

Per-pair scorers return fractions in [0, 1]; corpus functions average them and
scale to percent. Nothing is rounded here; tables round for display only.
"""
from __future__ import annotations

import itertools
import json
import math
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Literal, Sequence

from .errors import EmptyInput, UnknownLabel
from .taxonomy import DEFAULT, Taxonomy

_TOKEN = re.compile(r"\w+|[^\w\s]")

# (candidate, reference) -> score in [0, 1]; plugged in from outside, e.g. an embedding service
TextScorer = Callable[[str, str], float]


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, and split punctuation into standalone tokens."""
    return _TOKEN.findall(text.lower())


def ngrams(tokens: Sequence[str], n: int) -> Counter[tuple[str, ...]]:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


# --- BLEU -----------------------------------------------------------------------------------


def modified_precision(cand: Sequence[str], ref: Sequence[str], n: int) -> tuple[int, int]:
    """(clipped matches, candidate n-gram count)."""
    c, r = ngrams(cand, n), ngrams(ref, n)
    return sum(min(cnt, r[g]) for g, cnt in c.items()), sum(c.values())


def brevity_penalty(c_len: int, r_len: int) -> float:
    if c_len == 0:
        return 0.0
    return 1.0 if c_len > r_len else math.exp(1 - r_len / c_len)


def _smoothed(order: int, matches: int, total: int) -> float:
    # Orders >= 2 with no matches get add-one smoothing; unigram precision is never smoothed.
    if order >= 2 and matches == 0:
        return 1 / (total + 1)
    return matches / total if total else 0.0


def sentence_bleu(candidate: str, reference: str, n: int = 4) -> float:
    if n < 1:
        raise ValueError("BLEU order must be >= 1")
    cand, ref = tokenize(candidate), tokenize(reference)
    if not cand:
        return 0.0
    log_sum = 0.0
    for k in range(1, n + 1):
        p = _smoothed(k, *modified_precision(cand, ref, k))
        if p == 0.0:
            return 0.0
        log_sum += math.log(p)
    return brevity_penalty(len(cand), len(ref)) * math.exp(log_sum / n)


def corpus_bleu(pairs: Sequence[tuple[str, str]], n: int = 4) -> float:
    """Corpus-level aggregation: pooled clipped counts and one brevity penalty."""
    if not pairs:
        raise EmptyInput("no pairs")
    matches, totals = [0] * n, [0] * n
    c_len = r_len = 0
    for candidate, reference in pairs:
        cand, ref = tokenize(candidate), tokenize(reference)
        c_len += len(cand)
        r_len += len(ref)
        for k in range(1, n + 1):
            m, t = modified_precision(cand, ref, k)
            matches[k - 1] += m
            totals[k - 1] += t
    if c_len == 0:
        return 0.0
    log_sum = 0.0
    for k in range(1, n + 1):
        p = _smoothed(k, matches[k - 1], totals[k - 1])
        if p == 0.0:
            return 0.0
        log_sum += math.log(p)
    return brevity_penalty(c_len, r_len) * math.exp(log_sum / n)


# --- ROUGE ----------------------------------------------------------------------------------


def _f1(overlap: int, c_total: int, r_total: int) -> float:
    if overlap == 0 or c_total == 0 or r_total == 0:
        return 0.0
    p, r = overlap / c_total, overlap / r_total
    return 2 * p * r / (p + r)


def rouge_n(candidate: str, reference: str, n: int) -> float:
    cand, ref = tokenize(candidate), tokenize(reference)
    c, r = ngrams(cand, n), ngrams(ref, n)
    if not c and not r:
        # both texts too short for this order: identical non-empty texts still agree fully
        return 1.0 if cand and cand == ref else 0.0
    overlap = sum(min(cnt, r[g]) for g, cnt in c.items())
    return _f1(overlap, sum(c.values()), sum(r.values()))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> float:
    cand, ref = tokenize(candidate), tokenize(reference)
    return _f1(lcs_length(cand, ref), len(cand), len(ref))


# --- METEOR (exact match) ----------------------------------------------------------------------


def count_chunks(alignment: Iterable[tuple[int, int]]) -> int:
    """Chunks in an alignment of (candidate_pos, reference_pos) pairs: maximal runs adjacent in both."""
    pairs = sorted(alignment)
    chunks = 0
    prev: tuple[int, int] | None = None
    for i, j in pairs:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def _type_options(cand: Sequence[str], ref: Sequence[str]) -> list[list[list[tuple[int, int]]]]:
    """Per shared word type, every maximal injective matching of its positions."""
    c_pos: dict[str, list[int]] = {}
    r_pos: dict[str, list[int]] = {}
    for i, w in enumerate(cand):
        c_pos.setdefault(w, []).append(i)
    for j, w in enumerate(ref):
        r_pos.setdefault(w, []).append(j)
    options = []
    for w in sorted(set(c_pos) & set(r_pos)):
        cs, rs = c_pos[w], r_pos[w]
        if len(cs) <= len(rs):
            opts = [list(zip(cs, perm)) for perm in itertools.permutations(rs, len(cs))]
        else:
            opts = [list(zip(perm, rs)) for perm in itertools.permutations(cs, len(rs))]
        options.append(opts)
    return options


def _greedy_alignment(cand: Sequence[str], ref: Sequence[str]) -> list[tuple[int, int]]:
    """Repeatedly align the longest unaligned common block (leftmost first)."""
    used_c: set[int] = set()
    used_r: set[int] = set()
    alignment: list[tuple[int, int]] = []
    while True:
        best = (0, 0, 0)
        for i in range(len(cand)):
            if i in used_c:
                continue
            for j in range(len(ref)):
                if j in used_r or cand[i] != ref[j]:
                    continue
                k = 0
                while (
                    i + k < len(cand) and j + k < len(ref) and i + k not in used_c and j + k not in used_r
                    and cand[i + k] == ref[j + k]
                ):
                    k += 1
                if k > best[0]:
                    best = (k, i, j)
        k, i, j = best
        if k == 0:
            return alignment
        for d in range(k):
            used_c.add(i + d)
            used_r.add(j + d)
            alignment.append((i + d, j + d))


def align(cand: Sequence[str], ref: Sequence[str], budget: int = 50_000) -> tuple[int, int]:
    """(matches, chunks) for a maximum-match alignment with the fewest chunks.

    Searches every maximum alignment when their number is within ``budget``;
    otherwise falls back to greedy longest-block alignment, which still
    achieves the maximum match count.
    """
    options = _type_options(cand, ref)
    if not options:
        return 0, 0
    matches = len(options[0][0]) + sum(len(o[0]) for o in options[1:])
    total = math.prod(len(o) for o in options)
    if total > budget:
        return matches, count_chunks(_greedy_alignment(cand, ref))
    best = min(count_chunks(itertools.chain.from_iterable(combo)) for combo in itertools.product(*options))
    return matches, best


def meteor_score(candidate: str, reference: str, penalize_identity: bool = False, budget: int = 50_000) -> float:
    """Exact-match METEOR: F_mean = 10PR/(R+9P), penalty = 0.5 (chunks/matches)^3.

    An identical pair forms a single chunk and would still pay 0.5/m^3; by
    default it scores exactly 1 so identity reads as a perfect score like the
    other metrics. ``penalize_identity=True`` applies the raw formula.
    """
    cand, ref = tokenize(candidate), tokenize(reference)
    if not cand or not ref:
        return 0.0
    if cand == ref and not penalize_identity:
        return 1.0
    m, chunks = align(cand, ref, budget)
    if m == 0:
        return 0.0
    p, r = m / len(cand), m / len(ref)
    fmean = 10 * p * r / (r + 9 * p)
    penalty = 0.5 * (chunks / m) ** 3
    return fmean * (1 - penalty)


# --- corpus level -------------------------------------------------------------------------------


@dataclass(frozen=True)
class ResponsePair:
    context_id: str
    gold_strategy: str
    gold_text: str
    pred_strategy: str
    pred_text: str


def load_pairs(path: str | Path) -> list[ResponsePair]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out.append(
                    ResponsePair(
                        str(d["context_id"]), str(d.get("gold_strategy", "")), str(d.get("gold_text", "")),
                        str(d.get("pred_strategy", "")), str(d.get("pred_text", "")),
                    )
                )
    return out


def _require(pairs: Sequence[Any]) -> None:
    if not pairs:
        raise EmptyInput("no response pairs")


def _canon_strategy(label: str, taxonomy: Taxonomy) -> str | None:
    try:
        return taxonomy.validate("strategy", label.strip().strip("[]"))
    except UnknownLabel:
        return None


def strategy_accuracy(pairs: Sequence[ResponsePair], taxonomy: Taxonomy = DEFAULT) -> float:
    """Percent of pairs whose predicted strategy equals the gold one (unknown labels never match)."""
    _require(pairs)
    hits = 0
    for p in pairs:
        gold = _canon_strategy(p.gold_strategy, taxonomy)
        hits += gold is not None and gold == _canon_strategy(p.pred_strategy, taxonomy)
    return 100 * hits / len(pairs)


def bleu_n(pairs: Sequence[ResponsePair], n: int, mode: Literal["sentence", "corpus"] = "sentence") -> float:
    _require(pairs)
    if mode == "corpus":
        return 100 * corpus_bleu([(p.pred_text, p.gold_text) for p in pairs], n)
    return 100 * sum(sentence_bleu(p.pred_text, p.gold_text, n) for p in pairs) / len(pairs)


def rouge(pairs: Sequence[ResponsePair], variant: int | str) -> float:
    _require(pairs)
    if str(variant).upper() == "L":
        vals = [rouge_l(p.pred_text, p.gold_text) for p in pairs]
    elif str(variant) in ("1", "2"):
        vals = [rouge_n(p.pred_text, p.gold_text, int(variant)) for p in pairs]
    else:
        raise ValueError(f"unknown ROUGE variant {variant!r}")
    return 100 * sum(vals) / len(vals)


def meteor(pairs: Sequence[ResponsePair], penalize_identity: bool = False) -> float:
    _require(pairs)
    return 100 * sum(meteor_score(p.pred_text, p.gold_text, penalize_identity) for p in pairs) / len(pairs)


COLUMNS = ("ACC", "B-1", "B-2", "B-4", "R-1", "R-2", "R-L", "METEOR-exact")


@dataclass(frozen=True)
class PairScores:
    context_id: str
    strategy_match: bool
    bleu: dict[str, float]
    rouge: dict[str, float]
    meteor: float


@dataclass(frozen=True)
class MetricsReport:
    acc: float
    bleu: dict[str, float]
    rouge: dict[str, float]
    meteor: float
    n: int
    per_pair: tuple[PairScores, ...] = field(default=(), repr=False)
    bertscore: float | None = None

    def row(self) -> dict[str, float]:
        return {
            "ACC": self.acc,
            "B-1": self.bleu["1"],
            "B-2": self.bleu["2"],
            "B-4": self.bleu["4"],
            "R-1": self.rouge["1"],
            "R-2": self.rouge["2"],
            "R-L": self.rouge["L"],
            "METEOR-exact": self.meteor,
        }

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["per_pair"] = [asdict(p) for p in self.per_pair]
        return d

    def table(self, label: str = "model") -> str:
        cols = ["Method", *COLUMNS, "BERTScore"]
        cells = [label, *(f"{v:.2f}" for v in self.row().values())]
        cells.append("n/a" if self.bertscore is None else f"{self.bertscore:.2f}")
        widths = [max(len(c), len(v)) for c, v in zip(cols, cells)]
        fmt = lambda xs: "  ".join(x.rjust(w) for x, w in zip(xs, widths))  # noqa: E731
        return f"{fmt(cols)}\n{fmt(cells)}\n(n = {self.n})"


def evaluate_pairs(
    pairs: Sequence[ResponsePair],
    taxonomy: Taxonomy = DEFAULT,
    bertscore: TextScorer | None = None,
    penalize_identity: bool = False,
) -> MetricsReport:
    _require(pairs)
    per_pair = []
    for p in pairs:
        gold = _canon_strategy(p.gold_strategy, taxonomy)
        per_pair.append(
            PairScores(
                context_id=p.context_id,
                strategy_match=gold is not None and gold == _canon_strategy(p.pred_strategy, taxonomy),
                bleu={str(n): 100 * sentence_bleu(p.pred_text, p.gold_text, n) for n in (1, 2, 4)},
                rouge={
                    "1": 100 * rouge_n(p.pred_text, p.gold_text, 1),
                    "2": 100 * rouge_n(p.pred_text, p.gold_text, 2),
                    "L": 100 * rouge_l(p.pred_text, p.gold_text),
                },
                meteor=100 * meteor_score(p.pred_text, p.gold_text, penalize_identity),
            )
        )
    n = len(pairs)
    mean = lambda xs: sum(xs) / n  # noqa: E731
    bert = None
    if bertscore is not None:
        bert = 100 * mean([bertscore(p.pred_text, p.gold_text) for p in pairs])
    return MetricsReport(
        acc=100 * sum(s.strategy_match for s in per_pair) / n,
        bleu={k: mean([s.bleu[k] for s in per_pair]) for k in ("1", "2", "4")},
        rouge={k: mean([s.rouge[k] for s in per_pair]) for k in ("1", "2", "L")},
        meteor=mean([s.meteor for s in per_pair]),
        n=n,
        per_pair=tuple(per_pair),
        bertscore=bert,
    )
