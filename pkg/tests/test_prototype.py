from __future__ import annotations

import json
import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from builders import census_from_prototypes, synthetic_corpus
from supportskills.backend.port import ScriptedBackend
from supportskills.errors import BackendError, EmptyGroup
from supportskills.iu import parse_lines
from supportskills.prototype import (
    BackendClusterer,
    cluster_prototypes,
    effectiveness_rate,
    flag_risk,
    group_prototypes,
    read_clusters,
    read_prototypes,
    render_percent,
    state_clusterer,
    summary_table,
    write_clusters,
    write_prototypes,
)


def units_from(records):
    units, report = parse_lines([json.dumps(r) for r in records], strict=True)
    return units


def iu(i, state, action, direction, change=None):
    change = change or {"positive": "Emotional relief", "negative": "Increased withdrawal", "neutral": "Indeterminable"}[direction]
    return {
        "dialog_id": f"d{i}",
        "outcome": "success",
        "turn_id": 1,
        "pre_seeker_states": [state] if isinstance(state, str) else state,
        "counselor_actions": [action] if isinstance(action, str) else action,
        "supporter_text": f"s{i}",
        "pre_seeker_text": f"pre{i}",
        "post_seeker_text": f"post{i}",
        "response_change": change,
        "change_direction": direction,
    }


def group(state, action, n_pos, n_neg, start=0, neg_change="Increased withdrawal"):
    out = [iu(start + i, state, action, "positive") for i in range(n_pos)]
    out += [iu(start + n_pos + i, state, action, "negative", neg_change) for i in range(n_neg)]
    return out


@pytest.mark.parametrize(
    "n_pos, n_total, shown",
    [(3, 7, "42.9%"), (10, 21, "47.6%"), (1, 2, "50.0%"), (4, 7, "57.1%"), (3, 5, "60.0%"), (1, 8, "12.5%"), (1, 3, "33.3%")],
)
def test_render_percent(n_pos, n_total, shown):
    assert render_percent(effectiveness_rate(n_pos, n_total)) == shown


def test_render_percent_rounds_half_up():
    assert render_percent(Fraction(1, 16)) == "6.3%"  # 6.25
    assert render_percent(Fraction(1, 80)) == "1.3%"  # 1.25
    assert render_percent(Fraction(1)) == "100.0%"
    assert render_percent(Fraction(0)) == "0.0%"


def test_effectiveness_rate_errors():
    with pytest.raises(EmptyGroup):
        effectiveness_rate(0, 0)
    with pytest.raises(ValueError):
        effectiveness_rate(4, 3)


@given(st.integers(1, 500).flatmap(lambda n: st.tuples(st.integers(0, n), st.just(n))))
def test_effectiveness_is_exact(pair):
    n_pos, n = pair
    rate = effectiveness_rate(n_pos, n)
    assert rate == Fraction(n_pos, n) and 0 <= rate <= 1


def test_min_support_and_non_key_exclusion():
    recs = group("Rumination", "Normalization", 4, 1)  # 5 key -> kept
    recs += group("Self-blame", "Normalization", 3, 1, start=100)  # 4 key -> dropped
    recs += [iu(200 + i, "Self-blame", "Normalization", "neutral") for i in range(5)]  # non-key never count
    protos = group_prototypes(units_from(recs))
    assert census_from_prototypes(protos) == {("Rumination", "Normalization"): (4, 5)}
    assert census_from_prototypes(group_prototypes(units_from(recs), min_support=4)) == {
        ("Rumination", "Normalization"): (4, 5),
        ("Self-blame", "Normalization"): (3, 4),
    }


def test_multi_label_ius_count_in_every_pair():
    recs = [iu(i, ["Rumination", "Avoidance"], "Normalization", "positive") for i in range(5)]
    protos = group_prototypes(units_from(recs))
    assert census_from_prototypes(protos) == {("Avoidance", "Normalization"): (5, 5), ("Rumination", "Normalization"): (5, 5)}
    first = group_prototypes(units_from(recs), expand="first")
    assert census_from_prototypes(first) == {("Rumination", "Normalization"): (5, 5)}


def test_risk_flag_boundary():
    recs = group("Rumination", "Normalization", 3, 2)  # exactly 60%
    recs += group("Avoidance", "Gentle challenge", 4, 3, start=100, neg_change="Perceived offense")  # 57.1%
    protos = group_prototypes(units_from(recs))
    recommended, risk = flag_risk(protos)
    assert [p.state for p in recommended] == ["Rumination"]
    assert [p.state for p in risk] == ["Avoidance"]
    assert risk[0].flagged_risk and risk[0].dominant_negative == "Perceived offense"
    assert render_percent(risk[0].effectiveness) == "57.1%"
    with pytest.raises(ValueError):
        flag_risk(protos, 0)


def test_dominant_negative_tie_uses_label_order():
    recs = group("Rumination", "Normalization", 5, 0)
    recs += [iu(50, "Rumination", "Normalization", "negative", "Perceived offense")]
    recs += [iu(51, "Rumination", "Normalization", "negative", "Increased confusion")]
    (p,) = group_prototypes(units_from(recs))
    assert p.dominant_negative == "Increased confusion"


def test_synthetic_census_matches_generator():
    records, truth = synthetic_corpus(total=400, key_positive=200, key_negative=30, seed=11)
    protos = group_prototypes(units_from(records), min_support=5)
    assert census_from_prototypes(protos) == truth.groups(5)


def test_state_clusterer_partitions_and_folds_singletons():
    recs = group("Rumination", "Normalization", 5, 0)
    recs += group("Rumination", "Emotion labeling", 5, 0, start=100)
    recs += group("Avoidance", "Normalization", 5, 0, start=200)
    recs += group("Helplessness", "Gentle challenge", 5, 0, start=300)
    protos = group_prototypes(units_from(recs))
    clusters = state_clusterer(protos)
    members = sorted((p.state, p.action) for _, _, ms in clusters for p in ms)
    assert members == sorted((p.state, p.action) for p in protos)
    by_id = {cid: [(p.state, p.action) for p in ms] for cid, _, ms in clusters}
    # Avoidance is a singleton sharing an action with the Rumination group, so it folds in
    assert ("Avoidance", "Normalization") in by_id["rumination"]
    assert by_id["helplessness"] == [("Helplessness", "Gentle challenge")]


def test_cluster_snippets_are_reproducible():
    recs = group("Rumination", "Normalization", 8, 0)
    units = units_from(recs)
    protos = group_prototypes(units)
    a = cluster_prototypes(protos, ius=units, snippets_per_cluster=3, seed=5)
    b = cluster_prototypes(protos, ius=units, snippets_per_cluster=3, seed=5)
    assert a == b
    assert len(a[0].sample_snippets) == 3
    pre, said, post = a[0].sample_snippets[0]
    assert pre.startswith("pre") and said.startswith("s") and post.startswith("post")


def test_backend_clusterer_validates_partition():
    recs = group("Rumination", "Normalization", 5, 0) + group("Avoidance", "Normalization", 5, 0, start=100)
    protos = group_prototypes(units_from(recs))
    good = ScriptedBackend({"cluster": [json.dumps({"clusters": [{"theme": "Stuck loops", "members": [1, 0]}]})]})
    ((cid, theme, members),) = BackendClusterer(good)(protos)
    assert cid == "00-stuck-loops" and theme == "Stuck loops" and len(members) == 2
    for answer in ('{"clusters": [{"theme": "x", "members": [0]}]}', "no json", '{"clusters": [{"members": [0, 5]}]}'):
        with pytest.raises(BackendError):
            BackendClusterer(ScriptedBackend({"cluster": [answer]}))(protos)


def test_prototype_and_cluster_files_round_trip(tmp_path):
    recs = group("Rumination", "Normalization", 3, 4)
    units = units_from(recs)
    protos = group_prototypes(units)
    write_prototypes(protos, tmp_path / "p.ndjson")
    assert read_prototypes(tmp_path / "p.ndjson") == protos
    clusters = cluster_prototypes(protos, ius=units)
    write_clusters(clusters, tmp_path / "c.ndjson")
    assert read_clusters(tmp_path / "c.ndjson") == clusters


def test_summary_table_sorts_by_effectiveness():
    recs = group("Rumination", "Normalization", 3, 4) + group("Avoidance", "Normalization", 5, 0, start=100)
    table = summary_table(group_prototypes(units_from(recs)), min_support=5)
    rows = table.splitlines()
    assert rows[0] == "# min_support=5"
    assert rows[3].startswith("Avoidance") and "100.0%" in rows[3]
    assert rows[4].startswith("Rumination") and "42.9%" in rows[4] and "Increased withdrawal" in rows[4]


def test_random_groups_match_brute_force():
    rng = random.Random(0)
    for _ in range(50):
        n_pos, n_neg = rng.randint(0, 9), rng.randint(0, 9)
        if n_pos + n_neg == 0:
            continue
        (p,) = group_prototypes(units_from(group("Rumination", "Normalization", n_pos, n_neg)), min_support=1)
        assert p.effectiveness == Fraction(n_pos, n_pos + n_neg)
