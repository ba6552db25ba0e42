from __future__ import annotations

import csv
import hashlib
import json
from collections import defaultdict
from datetime import date
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eventflow.errors import ConfigInvalid
from eventflow.features import FEATURE_TYPES, WOM_TYPES, read_flows
from eventflow.pipeline import load_corpus
from eventflow.popularity import compute_metrics, wom_popularity_exact
from eventflow.synth import SEGMENTS, SynthConfig, apportion, generate, write_corpus


@pytest.fixture(scope="module")
def corpus():
    return generate(SynthConfig(n_days=150, seed=5))


@pytest.fixture(scope="module")
def corpus_dir(corpus, tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    write_corpus(corpus, d)
    return d


def _truth(corpus):
    return json.loads(corpus["ground_truth.json"])


def test_same_seed_same_bytes(corpus, tmp_path):
    again = write_corpus(generate(SynthConfig(n_days=150, seed=5)), tmp_path)
    assert again == {k: hashlib.sha256(v.encode()).hexdigest() for k, v in corpus.items()}


def test_different_seed_differs(corpus):
    assert generate(SynthConfig(n_days=150, seed=6))["flows.csv"] != corpus["flows.csv"]


def test_components_add_up_exactly(corpus, corpus_dir):
    flows = read_flows(corpus_dir / "flows.csv")
    for day in _truth(corpus)["days"]:
        assert sum(day["components"].values()) == day["flow"]
        assert sum(day["segments"][s]["flow"] for s in SEGMENTS) == day["flow"]
        for name, total in day["components"].items():
            assert sum(day["segments"][s][name] for s in SEGMENTS) == total
        assert flows[date.fromisoformat(day["date"])] == day["flow"]


def test_planted_popularity_recomputed_from_files(corpus, corpus_dir):
    loaded = load_corpus(corpus_dir)
    planted = _truth(corpus)["planted"]
    assert {e.event_id for e in loaded.events} == set(planted)
    for ev in loaded.events:
        m = compute_metrics(ev, loaded.related_posts[ev.event_id])
        info = planted[ev.event_id]
        assert m.promotional == info["promotional"]
        assert m.overall == info["overall"]
        assert list(m.wom_raw) == info["wom_raw"]
        assert wom_popularity_exact(info["wom_raw"], ev.n_sessions) == [Fraction(v) for v in info["womp"]]


def test_event_components_follow_recomputed_popularity(corpus, corpus_dir):
    truth = _truth(corpus)
    loaded = load_corpus(corpus_dir)
    promo = defaultdict(lambda: defaultdict(int))
    womp = defaultdict(lambda: defaultdict(Fraction))
    for ev in loaded.events:
        m = compute_metrics(ev, loaded.related_posts[ev.event_id])
        exact = wom_popularity_exact([int(v) for v in m.wom_raw], ev.n_sessions)
        for k, s in enumerate(ev.sessions):
            promo[s.day.isoformat()][ev.event_type] += int(m.promotional)
            if ev.event_type in WOM_TYPES:
                womp[s.day.isoformat()][ev.event_type] += exact[k]
    active = 0
    for day in truth["days"]:
        comp = day["components"]
        for t in FEATURE_TYPES:
            want = round(truth["promo_betas"][t] * promo[day["date"]][t])
            assert comp[f"promo_{t}"] == want
            active += want != 0
        for t in WOM_TYPES:
            assert comp[f"wom_{t}"] == round(truth["wom_betas"][t] * float(womp[day["date"]][t]))
    assert active > 20


def test_null_effects_give_constant_flow():
    corpus = generate(SynthConfig.null_effects(n_days=60, weekly_base=(80_000.0,) * 7))
    flows = [int(r["arrivals"]) for r in csv.DictReader(corpus["flows.csv"].splitlines())]
    per_day = [sum(flows[i:i + 3]) for i in range(0, len(flows), 3)]
    assert set(per_day) == {80_000}


def test_single_concert_lift_over_counterfactual():
    betas = {"concert": 5.0, "fireworks": 3.0, "exhibition": 0.8, "sports": 0.4}
    with_effect = generate(SynthConfig(n_days=120, seed=2, promo_betas=betas))
    without = generate(SynthConfig(n_days=120, seed=2, promo_betas=dict(betas, concert=0.0)))
    truth, base = _truth(with_effect), _truth(without)
    concerts_by_day = defaultdict(list)
    for ev in json.loads(with_effect["events.json"]):
        if ev["event_type"] == "concert":
            for s in ev["sessions"]:
                concerts_by_day[s["start"][:10]].append(ev["event_id"])
    checked = 0
    for a, b in zip(truth["days"], base["days"]):
        ids = concerts_by_day.get(a["date"], [])
        if len(ids) != 1:
            continue
        promotional = truth["planted"][ids[0]]["promotional"]
        assert a["flow"] - b["flow"] == 5 * promotional
        checked += 1
    assert checked >= 5


def test_raising_a_beta_never_lowers_flow():
    lo = _truth(generate(SynthConfig(n_days=90, seed=4)))["days"]
    hi = _truth(generate(SynthConfig(n_days=90, seed=4, promo_betas={
        "concert": 8.0, "fireworks": 3.0, "exhibition": 0.8, "sports": 0.4})))["days"]
    diffs = [b["flow"] - a["flow"] for a, b in zip(lo, hi)]
    assert min(diffs) >= 0 and max(diffs) > 0
    for a, b in zip(lo, hi):
        assert b["flow"] - a["flow"] == b["components"]["promo_concert"] - a["components"]["promo_concert"]


def test_long_exhibition_is_filtered(corpus):
    raw = [json.loads(line) for line in corpus["events_raw.jsonl"].splitlines()]
    kept = {e["event_id"] for e in json.loads(corpus["events.json"])}
    assert len(raw) > len(kept)
    assert all(e["event_type"] in FEATURE_TYPES for e in json.loads(corpus["events.json"]))


@settings(max_examples=200, deadline=None)
@given(st.integers(-10**7, 10**7))
def test_apportion_is_exact(total):
    parts = apportion(total, {"metro": 0.5, "hsr": 0.3, "airport": 0.2})
    assert sum(parts.values()) == total
    assert all(abs(parts[s] - total * share) < 1 for s, share in (("metro", 0.5), ("hsr", 0.3), ("airport", 0.2)))


@pytest.mark.parametrize("kw", [{"n_days": 10}, {"start": date(2022, 6, 1)}, {"sigma": -1.0},
                                {"segment_shares": {"metro": 1.0}}, {"n_days": 800}])
def test_invalid_configs(kw):
    with pytest.raises(ConfigInvalid):
        SynthConfig(**kw)
