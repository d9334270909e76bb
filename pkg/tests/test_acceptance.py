"""End-to-end acceptance checks, one marked group per criterion.

Run with ``pytest tests/test_acceptance.py``; the terminal summary prints one
PASS/FAIL line per criterion.
"""
from __future__ import annotations

import itertools
import json
import random
import time
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import HealthCheck, given, settings

from builders import (
    BANK_STAR,
    N_VERIFY,
    UPDATED_NAMES,
    analysis_json,
    bank_skill,
    census_from_prototypes,
    created_skill,
    evolution_fixture,
    scripted_batch,
    skills,
    synthetic_corpus,
    write_ndjson,
)
from metric_cases import PAIRS, expected_means
from supportskills.agreement import cohen_kappa_weighted, confusion_matrix, fleiss_counts, fleiss_kappa
from supportskills.backend.port import ScriptedBackend
from supportskills.backend.prompts import TEMPLATE_IDS, load_template
from supportskills.backend.replies import parse_agent_reply, parse_analysis_report
from supportskills.bank import SkillBank, save_bank
from supportskills.errors import BadStrategy, InconsistentReport, Unparseable
from supportskills.evolution import Backends, EvolutionAudit, EvolveConfig, FixedClock, decide, evolve, replay_audit
from supportskills.iu import corpus_stats, ingest_corpus, parse_lines
from supportskills.metrics import ResponsePair, evaluate_pairs
from supportskills.prototype import group_prototypes, render_percent
from supportskills.simulation import SimConfig, batch_simulate
from supportskills.skill import parse_skill, serialize_skill
from supportskills.taxonomy import SEEKER_STATES, SUPPORT_ACTIONS

GOLDEN = Path(__file__).parent / "golden"
TOL = 1e-9


# --- 1. corpus counts --------------------------------------------------------------------------


@pytest.mark.criterion(1, "corpus counts at 1/10 scale")
def test_corpus_counts(tmp_path):
    records, truth = synthetic_corpus(total=1786, key_positive=970, key_negative=48)
    path = tmp_path / "corpus.ndjson"
    write_ndjson(path, records)
    started = time.perf_counter()
    units, report = ingest_corpus(path, strict=True)
    stats = corpus_stats(units)
    prototypes = group_prototypes(units, min_support=5)
    elapsed = time.perf_counter() - started
    assert (stats.total, stats.key_total, stats.key_positive, stats.key_negative) == (1786, 1018, 970, 48)
    assert report.accepted == 1786 and not report.issues
    assert census_from_prototypes(prototypes) == truth.groups(5)
    assert elapsed < 5.0, f"took {elapsed:.2f}s"


# --- 2. effectiveness ------------------------------------------------------------------------


def _iu(i, states, actions, direction):
    change = {"positive": "Emotional relief", "negative": "Perceived offense", "neutral": "Indeterminable"}[direction]
    return {
        "dialog_id": f"g{i // 50}", "outcome": "success", "turn_id": i % 50,
        "pre_seeker_states": states, "counselor_actions": actions,
        "supporter_text": "s", "pre_seeker_text": "a", "post_seeker_text": "b",
        "response_change": change, "change_direction": direction,
    }


@pytest.mark.criterion(2, "exact effectiveness")
def test_effectiveness_matches_rational_recount():
    rng = random.Random(2024)
    pairs = list(itertools.product(SEEKER_STATES, SUPPORT_ACTIONS))
    checked = 0
    for batch in range(4):
        chosen = rng.sample(pairs, 250)
        records = []
        for state, action in chosen:
            for direction in ["positive"] * rng.randint(0, 9) + ["negative"] * rng.randint(0, 9) + ["neutral"] * rng.randint(0, 3):
                records.append(_iu(len(records), [state], [action], direction))
            if rng.random() < 0.2:  # a multi-label IU counts toward every pair in its cross product
                extra = rng.choice(SEEKER_STATES)
                if extra != state:
                    records.append(_iu(len(records), [state, extra], [action], rng.choice(["positive", "negative"])))
        units, _ = parse_lines([json.dumps(r) for r in records], strict=True)
        got = {(p.state, p.action): p.effectiveness for p in group_prototypes(units, min_support=1)}
        recount: dict[tuple[str, str], list[int]] = {}
        for r in records:
            if r["change_direction"] == "neutral":
                continue
            for s in r["pre_seeker_states"]:
                for a in r["counselor_actions"]:
                    counts = recount.setdefault((s, a), [0, 0])
                    counts[0] += r["change_direction"] == "positive"
                    counts[1] += 1
        expected = {k: Fraction(pos, n) for k, (pos, n) in recount.items()}
        assert got == expected
        checked += sum(1 for k in chosen if k in expected)
    assert checked >= 1000 - 4 * 5  # groups with no key IUs at all are not groups


@pytest.mark.criterion(2, "exact effectiveness")
@pytest.mark.parametrize("n_pos, n_total, shown", [(3, 7, "42.9%"), (10, 21, "47.6%"), (1, 2, "50.0%"), (4, 7, "57.1%")])
def test_effectiveness_rendering(n_pos, n_total, shown):
    assert render_percent(Fraction(n_pos, n_total)) == shown


# --- 3. SKILL.md round trip ------------------------------------------------------------------


@pytest.mark.criterion(3, "SKILL.md round trip")
def test_golden_round_trip():
    text = (GOLDEN / "esc-strategy-switching.md").read_text(encoding="utf-8")
    assert serialize_skill(parse_skill(text)) == text


@pytest.mark.criterion(3, "SKILL.md round trip")
def test_table_of_34_round_trips():
    assert len(BANK_STAR) == 34
    for name, origin, category in BANK_STAR:
        skill = created_skill(name) if origin == "added" else bank_skill(name, category)
        text = serialize_skill(skill)
        assert parse_skill(text) == skill
        assert serialize_skill(parse_skill(text)) == text


@pytest.mark.criterion(3, "SKILL.md round trip")
@settings(max_examples=10_000, deadline=None, database=None, suppress_health_check=[HealthCheck.too_slow])
@given(skills())
def test_round_trip_10k(skill):
    text = serialize_skill(skill)
    assert parse_skill(text) == skill
    assert serialize_skill(parse_skill(text)) == text


# --- 4. evolution ------------------------------------------------------------------------------

CONFIG = EvolveConfig(n_verify=N_VERIFY, sim=SimConfig(max_turns=1))


def _bank_bytes(bank: SkillBank, directory: Path) -> dict[str, bytes]:
    save_bank(bank, directory)
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


@pytest.mark.criterion(4, "scripted evolution")
def test_scripted_evolution(tmp_path):
    fx = evolution_fixture()
    assert len(fx.bank) == 27
    result = evolve(fx.bank, fx.profiles, Backends.single(ScriptedBackend(fx.script)), CONFIG, clock=FixedClock())
    assert result.plan.sizes == (9, 12)
    finals = [r for r in result.audit.records if r["phase"] == "final"]
    assert sum(r["decision"] == "accept" and r["kind"] == "update" for r in finals) == 9
    assert sum(r["decision"] == "accept" and r["kind"] == "add" for r in finals) == 7
    assert len(result.bank) == 34
    bumped = [n for n in fx.bank.names if result.bank.get(n).version != fx.bank.get(n).version]
    assert sorted(bumped) == sorted(UPDATED_NAMES) and len(bumped) == 9

    result.audit.write(tmp_path / "audit.ndjson")
    replayed = replay_audit(fx.bank, EvolutionAudit.read(tmp_path / "audit.ndjson"))
    assert _bank_bytes(replayed, tmp_path / "replayed") == _bank_bytes(result.bank, tmp_path / "evolved")


@pytest.mark.criterion(4, "scripted evolution")
def test_all_reject_is_byte_identical(tmp_path):
    fx = evolution_fixture(all_reject=True)
    result = evolve(fx.bank, fx.profiles, Backends.single(ScriptedBackend(fx.script)), CONFIG, clock=FixedClock())
    assert _bank_bytes(result.bank, tmp_path / "after") == _bank_bytes(fx.bank, tmp_path / "before")


# --- 5. acceptance rule ---------------------------------------------------------------------------

TRUTH_TABLE = {
    # (all_success, relation to baseline): decisions at attempts 1, 2, 3
    (False, "<"): ("retry", "retry", "reject"),
    (False, "="): ("retry", "retry", "reject"),
    (False, ">"): ("accept", "accept", "accept"),
    (True, "<"): ("accept", "accept", "accept"),
    (True, "="): ("accept", "accept", "accept"),
    (True, ">"): ("accept", "accept", "accept"),
}


@pytest.mark.criterion(5, "acceptance rule truth table")
def test_acceptance_truth_table():
    baseline = 41.5
    offsets = {"<": -0.5, "=": 0.0, ">": 1e-9}
    for (all_success, rel), expected in TRUTH_TABLE.items():
        got = tuple(decide(all_success, baseline + offsets[rel], baseline, attempt, 3) for attempt in (1, 2, 3))
        assert got == expected, (all_success, rel)
    for attempt in (1, 2, 3):
        assert decide(False, baseline, baseline, attempt, 3) != "accept"


# --- 6. metrics -------------------------------------------------------------------------------------


@pytest.mark.criterion(6, "response metrics")
def test_metrics_fixture():
    row = evaluate_pairs(PAIRS).row()
    expected = expected_means()
    assert len(PAIRS) == 20
    for col, value in row.items():
        assert abs(value - expected[col]) <= TOL, col


@pytest.mark.criterion(6, "response metrics")
def test_metric_identity_and_disjoint():
    same = evaluate_pairs([ResponsePair("x", "Question", "so how are you holding up?", "Question", "so how are you holding up?")])
    assert set(same.row().values()) == {100.0}
    apart = evaluate_pairs([ResponsePair("x", "Question", "so how are you", "Information", "call me tomorrow")])
    assert set(apart.row().values()) == {0.0}


# --- 7. agreement ---------------------------------------------------------------------------------


def _weighted_from_matrix(m):
    k = len(m)
    n = sum(map(sum, m))
    rows = [sum(r) for r in m]
    cols = [sum(m[i][j] for i in range(k)) for j in range(k)]
    num = sum(Fraction((i - j) ** 2) * m[i][j] for i in range(k) for j in range(k)) * n
    den = sum(Fraction((i - j) ** 2) * rows[i] * cols[j] for i in range(k) for j in range(k))
    return 1 - num / den


def _fleiss_from_table(t):
    n_items, n = len(t), sum(t[0])
    p_bar = sum(Fraction(sum(c * c for c in row) - n, n * (n - 1)) for row in t) / n_items
    p_e = sum(Fraction(sum(row[j] for row in t), n_items * n) ** 2 for j in range(len(t[0])))
    return (p_bar - p_e) / (1 - p_e)


@pytest.mark.criterion(7, "agreement statistics")
def test_agreement_brute_force():
    rng = random.Random(77)
    done = 0
    while done < 100:
        n = rng.randint(3, 50)
        a = [rng.randint(1, 5) for _ in range(n)]
        b = [min(5, max(1, x + rng.choice([-1, 0, 0, 1]))) for x in a]
        raters = [a, b, [min(5, max(1, x + rng.choice([-2, 0, 1]))) for x in a]]
        m = confusion_matrix(a, b, (1, 2, 3, 4, 5)).tolist()
        table = fleiss_counts(list(zip(*raters)), categories=(1, 2, 3, 4, 5)).tolist()
        if len({*a, *b}) < 2 or sum(1 for j in range(5) if any(r[j] for r in table)) < 2:
            continue
        assert abs(cohen_kappa_weighted(a, b) - float(_weighted_from_matrix(m))) <= TOL
        assert abs(fleiss_kappa(list(zip(*raters)), categories=(1, 2, 3, 4, 5)) - float(_fleiss_from_table(table))) <= TOL
        done += 1


@pytest.mark.criterion(7, "agreement statistics")
def test_perfect_agreement_exactly_one():
    a = [1, 3, 5, 2, 4, 4]
    assert cohen_kappa_weighted(a, a) == 1.0
    assert fleiss_kappa([[x] * 4 for x in a]) == 1.0


# --- 8. simulation -------------------------------------------------------------------------------


@pytest.mark.criterion(8, "parallel simulation determinism")
def test_simulation_batch_determinism():
    batch, script = scripted_batch(100, seed=0)
    runs = {}
    for parallelism in (1, 8):
        backend = ScriptedBackend(script)
        report = batch_simulate(batch, SkillBank(), backend, backend, backend, parallelism=parallelism)
        runs[parallelism] = report
    blob = {p: "\n".join(t.to_json() for t in r.transcripts) + json.dumps(r.summary(), sort_keys=True) for p, r in runs.items()}
    assert blob[1] == blob[8]
    report = runs[8]
    assert report.n == 100 and report.aborted_count == 0
    assert report.success_count == report.grade_histogram["S"]
    assert report.failure_count == report.grade_histogram["F"]
    assert report.success_count and report.failure_count and report.neutral_count
    for t in report.transcripts:
        assert all(0 <= s <= 100 for s in t.trajectory)


# --- 9. prompts and parsers ------------------------------------------------------------------------


@pytest.mark.criterion(9, "prompt templates and reply parsers")
def test_templates_match_checksums():
    import hashlib

    sums = dict(reversed(line.split()) for line in (GOLDEN / "templates.sha256").read_text().splitlines())
    assert len(TEMPLATE_IDS) == 6
    for tid in TEMPLATE_IDS:
        assert hashlib.sha256(load_template(tid).body.encode()).hexdigest() == sums[f"{tid}.txt"]


@pytest.mark.criterion(9, "prompt templates and reply parsers")
def test_parsers_accept_and_reject():
    assert parse_agent_reply('{"strategy": "Question", "text": "What happened next?"}').strategy == "Question"
    assert parse_agent_reply('Sure.\n```json\n{"strategy": "Others", "text": "Mm."}\n```').text == "Mm."
    agent_violations = [
        ("not json at all", Unparseable),
        ('{"strategy": "Question"}', Unparseable),
        ('{"strategy": "Question", "text": ""}', Unparseable),
        ('{"strategy": "Mind reading", "text": "x"}', BadStrategy),
    ]
    for raw, exc in agent_violations:
        with pytest.raises(exc):
            parse_agent_reply(raw, strict=True)

    for fields in (
        dict(recommendation="no_action"),
        dict(recommendation="update_existing", target_skill="esc-x", update_reason="r"),
        dict(recommendation="add_new", new_skill_name="esc-y", new_skill_description="d"),
    ):
        assert parse_analysis_report(analysis_json(**fields)).recommendation == fields["recommendation"]
    report_violations = [
        ("{}", Unparseable),
        ("no object", Unparseable),
        (analysis_json(recommendation="retrain"), Unparseable),
        (analysis_json(avg_score="n/a?"), Unparseable),
        (analysis_json(skill_gaps={"a": 1}), Unparseable),
        (analysis_json(recommendation="update_existing"), InconsistentReport),
        (analysis_json(recommendation="add_new"), InconsistentReport),
    ]
    for raw, exc in report_violations:
        with pytest.raises(exc):
            parse_analysis_report(raw)
