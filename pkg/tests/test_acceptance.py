"""Acceptance criteria; each test carries a ``criterion`` marker and a pass/fail line is printed at the end."""

from __future__ import annotations

import itertools
import json
import math
import time
from datetime import date, datetime, timedelta
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from eventflow.attribution import export_summary, tree_shap
from eventflow.cli import main as cli_main
from eventflow.events import Event, EventSession
from eventflow.features import (FeatureMatrix, assemble, changing_rate, read_calendar, read_flows, read_weather,
                                wma)
from eventflow.gateway import Gateway, GatewayConfig, relevance_check
from eventflow.models import (GbdtParams, ModelSpec, fit_arima, fit_gbdt, fit_linear,
                              sample_weights)
from eventflow.pipeline import load_corpus
from eventflow.popularity import Post, compute_metrics, split_pre_post, wom_popularity_exact
from eventflow.rolling import (GRID_COLUMNS, GridSpec, RollingConfig, ablation, grid_rank_key, grid_search,
                               raw_forecasts, read_grid_csv, run_rolling, table_to_csv)
from eventflow.synth import SynthConfig, generate, write_corpus

FIXTURES = Path(__file__).parent / "fixtures"
DELTA_AXIS = (0.0, 0.001, 0.002, 0.003, 0.004, 0.005, 0.006)


def criterion(number: int, title: str):
    return pytest.mark.criterion(number, title)


# 1 ---------------------------------------------------------------------------

def _random_event(rng, idx):
    n = int(rng.integers(1, 7))
    day = datetime(2024, 3, 1) + timedelta(days=int(rng.integers(0, 60)))
    sessions = []
    for k in range(n):
        start = day.replace(hour=int(rng.integers(9, 20)))
        sessions.append(EventSession(start, start + timedelta(hours=int(rng.integers(1, 4))), k + 1, f"E{idx}"))
        day += timedelta(days=int(rng.integers(1, 4)))
    return Event(f"E{idx}", "t", "concert", "s", "v", tuple(sessions))


def _window_oracle(event, posts):
    """Redistribute each post's engagement over the sessions after its window, one post at a time."""
    n = event.n_sessions
    womp = [Fraction(0)] * n
    total = 0
    for p in posts:
        for k in range(n - 1):
            if event.sessions[k].end <= p.created_at < event.sessions[k + 1].start:
                e = p.likes + p.collects
                total += e
                for later in range(k + 1, n):
                    womp[later] += Fraction(e, n - 1 - k)
                break
    return womp, total


@criterion(1, "WOMP oracle equivalence and mass conservation")
def test_womp_matches_window_oracle():
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    for i in range(200):
        ev = _random_event(rng, i)
        lo = ev.sessions[0].start - timedelta(days=70)
        span = (ev.sessions[-1].end + timedelta(days=5) - lo).total_seconds()
        posts = [Post(f"p{j}", "u", "t", "c", lo + timedelta(seconds=int(rng.integers(0, span))),
                      int(rng.integers(0, 500)), int(rng.integers(0, 100)))
                 for j in range(int(rng.integers(0, 51)))]
        _, windows = split_pre_post(posts, ev.sessions)
        wom = [sum(p.likes + p.collects for p in windows[k]) for k in sorted(windows)]
        got = wom_popularity_exact(wom, ev.n_sessions)
        want, total = _window_oracle(ev, posts)
        assert got == want
        assert sum(got) == total == sum(wom)
        floats = compute_metrics(ev, posts).wom_per_session
        assert list(floats) == [float(v) for v in got]
    assert time.perf_counter() - t0 < 1.0


# 2 ---------------------------------------------------------------------------

def _wma_oracle(x, t, P):
    # M_t = sum_p (P - p) x_{t-p} / sum_p (P - p)
    num = sum((P - p) * x[t - p] for p in range(P))
    return num / sum(P - p for p in range(P))


@criterion(2, "WMA and changing-rate correctness")
def test_wma_and_trend_match_formula():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        P = int(rng.integers(1, 15))
        n = int(rng.integers(P + 2, P + 40))
        x = rng.lognormal(0.0, 0.5, n)
        t = int(rng.integers(P + 1, n + 1))  # row t uses values up to t-1
        assert abs(wma(x[:t], P) - _wma_oracle(x, t - 1, P)) <= 1e-12
        m1, m2 = _wma_oracle(x, t - 1, P), _wma_oracle(x, t - 2, P)
        assert abs(changing_rate(x, t, P) - (m1 - m2) / m2) <= 1e-12
    for _ in range(200):
        P = int(rng.integers(1, 15))
        c = float(rng.uniform(1, 1e6))
        x = np.full(P + 5, c)
        assert changing_rate(x, P + 3, P) == 0.0


# 3 ---------------------------------------------------------------------------

@criterion(3, "Boosting training loss is non-increasing")
def test_boosting_loss_monotone():
    rng = np.random.default_rng(3)
    for _ in range(20):
        X = rng.normal(size=(400, 10))
        y = np.sin(X[:, 0]) * 3 + X[:, 1] * X[:, 2] + rng.normal(0, 0.5, 400)
        w = sample_weights(400, float(rng.choice(DELTA_AXIS)))
        model = fit_gbdt(X, y, GbdtParams(n_estimators=500), w)
        staged = model.staged_predict(X, range(501))
        loss = np.array([np.sum(w * (y - staged[k]) ** 2) / np.sum(w) for k in range(501)])
        assert np.all(np.diff(loss) <= 1e-9)
        np.testing.assert_allclose(model.train_loss, loss, rtol=1e-9, atol=1e-9)


# 4 ---------------------------------------------------------------------------

@criterion(4, "Zero-weight rows are inert; weight schedule matches the decay formula")
def test_zero_weight_rows_equal_deleted_rows():
    rng = np.random.default_rng(4)
    grid = rng.normal(size=(300, 6))
    for trial in range(5):
        X = rng.normal(size=(250, 6))
        y = X[:, 0] * 2 - X[:, 3] + rng.normal(0, 0.3, 250)
        w = sample_weights(250, 0.006)  # oldest 83 rows weigh zero
        assert np.sum(w == 0) > 0
        keep = w > 0
        a = fit_gbdt(X, y, GbdtParams(n_estimators=200, max_depth=3 + trial % 3), w)
        b = fit_gbdt(X[keep], y[keep], GbdtParams(n_estimators=200, max_depth=3 + trial % 3), w[keep])
        assert np.max(np.abs(a.predict(grid) - b.predict(grid))) < 1e-9
        la, lb = fit_linear(X, y, w), fit_linear(X[keep], y[keep], w[keep])
        assert np.max(np.abs(la.predict(grid) - lb.predict(grid))) < 1e-9


@criterion(4, "Zero-weight rows are inert; weight schedule matches the decay formula")
def test_sample_weights_formula_on_grid_axis():
    for delta in DELTA_AXIS:
        for T in (1, 2, 50, 180, 400, 1000):
            got = sample_weights(T, delta)
            want = np.array([max(1 - (T - t) * delta, 0) for t in range(1, T + 1)])
            assert np.array_equal(got, want)


# 5 ---------------------------------------------------------------------------

def _cond_exp(tree, x, subset, k=0):
    if tree.feature[k] < 0:
        return tree.value[k]
    f, l, r = tree.feature[k], tree.left[k], tree.right[k]
    if f in subset:
        return _cond_exp(tree, x, subset, l if x[f] <= tree.threshold[k] else r)
    return (tree.cover[l] * _cond_exp(tree, x, subset, l)
            + tree.cover[r] * _cond_exp(tree, x, subset, r)) / tree.cover[k]


def _exhaustive_shapley(tree, x, p):
    values = {}
    for size in range(p + 1):
        for s in itertools.combinations(range(p), size):
            values[frozenset(s)] = _cond_exp(tree, x, frozenset(s))
    phi = np.zeros(p)
    for j in range(p):
        others = [i for i in range(p) if i != j]
        for size in range(p):
            weight = math.factorial(size) * math.factorial(p - size - 1) / math.factorial(p)
            for s in itertools.combinations(others, size):
                s = frozenset(s)
                phi[j] += weight * (values[s | {j}] - values[s])
    return phi


@criterion(5, "Tree SHAP local accuracy and exhaustive-subset agreement")
def test_shap_exactness():
    rng = np.random.default_rng(8)
    t0 = time.perf_counter()
    checked_trees = 0
    for _ in range(50):
        p = int(rng.integers(2, 6))
        depth = int(rng.integers(1, 4))
        X = rng.normal(size=(120, p))
        X[:, 0] = np.round(X[:, 0])  # some ties
        y = X @ rng.normal(size=p) + np.where(X[:, -1] > 0, 2.0, -1.0) + rng.normal(0, 0.2, 120)
        model = fit_gbdt(X, y, GbdtParams(n_estimators=15, max_depth=depth, min_samples_leaf=3),
                         sample_weights(120, float(rng.choice(DELTA_AXIS))))
        sample = X[rng.choice(120, 8, replace=False)]
        res = tree_shap(model, sample)
        assert np.max(np.abs(res.total() - model.predict(sample))) <= 1e-6
        for tree in model.trees:
            single = tree_shap(tree, sample)
            for i, x in enumerate(sample):
                assert np.max(np.abs(single.values[i] - _exhaustive_shapley(tree, x, p))) <= 1e-6
            checked_trees += 1
    assert checked_trees == 50 * 15
    assert time.perf_counter() - t0 < 30.0


# 6 ---------------------------------------------------------------------------

def _toy_matrix(n=40, seed=0, p=4):
    rng = np.random.default_rng(seed)
    dates = [date(2024, 1, 1) + timedelta(days=k) for k in range(n)]
    cols = tuple(f"x{j}" for j in range(p - 1)) + ("wma_change_rate",)
    X = rng.normal(size=(n, p))
    y = 100 + 10 * X[:, 0] - 5 * X[:, 1] + rng.normal(0, 1, n)
    return FeatureMatrix(dates, cols, X, y, "custom")


_SMALL_GBDT = ModelSpec("gbdt", GbdtParams(n_estimators=30, max_depth=2, min_samples_leaf=2))


@criterion(6, "Rolling harness fidelity")
def test_rolling_one_step_equals_raw_forecasts():
    fm = _toy_matrix()
    cfg = RollingConfig(first_origin=20, horizon=1, model=_SMALL_GBDT)
    rep = run_rolling(fm, cfg)
    assert np.array_equal(rep.predicted, rep.forecasts)
    for i, t in enumerate(range(20, len(fm) - 1)):
        m = fit_gbdt(fm.values[:t + 1], fm.target[:t + 1], _SMALL_GBDT.params,
                     sample_weights(t + 1, _SMALL_GBDT.weight_decay))
        assert m.predict(fm.values[t + 1:t + 2])[0] == rep.predicted[i]


@criterion(6, "Rolling harness fidelity")
def test_rolling_two_step_schedule_by_hand():
    fm = _toy_matrix(n=26, seed=1)  # origins 20..24, five scored days 21..25
    cfg = RollingConfig(first_origin=20, horizon=2, model=_SMALL_GBDT)
    rep = run_rolling(fm, cfg)
    trend = fm.columns.index("wma_change_rate")
    issued: dict[int, list[float]] = {}
    for t in (20, 21, 22, 23, 24):
        m = fit_gbdt(fm.values[:t + 1], fm.target[:t + 1], _SMALL_GBDT.params,
                     sample_weights(t + 1, _SMALL_GBDT.weight_decay))
        rows = fm.values[t + 1:t + 3].copy()
        if len(rows) == 2:
            rows[1, trend] = rows[0, trend]
        for j, v in enumerate(m.predict(rows)):
            issued.setdefault(t + 1 + j, []).append(v)
    want = [math.fsum(issued[s]) / len(issued[s]) for s in range(21, 26)]
    assert [len(issued[s]) for s in range(21, 26)] == [1, 2, 2, 2, 2]
    assert list(rep.predicted) == want
    assert rep.dates == fm.dates[21:]


@criterion(6, "Rolling harness fidelity")
def test_rolling_ignores_data_after_origin(small_corpus):
    flows = read_flows(small_corpus / "flows.csv")
    weather = read_weather(small_corpus / "weather.csv")
    cal = read_calendar(small_corpus / "holidays.csv")
    days = sorted(flows)
    start, end = days[11], days[-1]
    cfg = RollingConfig(first_origin=150, horizon=3, model=_SMALL_GBDT)
    base_fm = assemble(start, end, flows, weather, cal, "FS1")
    o, tg, _, v = raw_forecasts(base_fm, cfg)
    rng = np.random.default_rng(2)
    for origin in (150, 160, 175):
        cut = base_fm.dates[origin]
        perturbed = {d: (f * rng.uniform(0.2, 5.0) if d > cut else f) for d, f in flows.items()}
        fm = assemble(start, end, perturbed, weather, cal, "FS1")
        o2, tg2, _, v2 = raw_forecasts(fm, cfg)
        sel = o == origin
        assert np.array_equal(tg[sel], tg2[o2 == origin])
        assert np.array_equal(v[sel], v2[o2 == origin])
        later = o > origin
        assert not np.array_equal(v[later], v2[o2 > origin])


# 7 / 8 -----------------------------------------------------------------------

@pytest.fixture(scope="module")
def default_matrices(default_corpus):
    corpus = load_corpus(default_corpus)
    return {fs: corpus.matrix(fs, popularity_lag=1) for fs in ("FS1", "FS3", "FS4", "FS5")}


@criterion(7, "Ablation ordering on the default synthetic corpus")
def test_ablation_ordering(default_matrices):
    t0 = time.perf_counter()
    rows, _ = ablation(default_matrices, RollingConfig(first_origin=180, horizon=1))
    elapsed = time.perf_counter() - t0
    r2 = {r["feature_set"]: r["r2"] for r in rows}
    print("ablation R2:", {k: round(100 * v, 2) for k, v in r2.items()}, f"{elapsed:.1f}s")
    assert r2["FS5"] >= r2["FS1"] + 0.03
    assert r2["FS5"] >= r2["FS3"]
    assert r2["FS5"] >= r2["FS4"]
    assert elapsed < 60.0


@criterion(8, "SHAP top-5 recovers the planted drivers")
def test_shap_recovers_planted_drivers(default_matrices, default_corpus):
    truth = json.loads((default_corpus / "ground_truth.json").read_text())
    top_type = max(truth["promo_betas"], key=truth["promo_betas"].get)
    fm = default_matrices["FS5"]
    model = fit_gbdt(fm.values, fm.target, GbdtParams(), sample_weights(len(fm), GbdtParams().weight_decay),
                     fm.columns)
    summary = export_summary(tree_shap(model, fm.values, fm.columns), fm.values, top_k=5)
    print("SHAP top-5:", summary.ranking)
    assert "holidays_remaining" in summary.ranking
    assert f"promo_{top_type}" in summary.ranking


# 9 ---------------------------------------------------------------------------

@criterion(9, "ARIMA recovers an AR(1) coefficient")
def test_arima_ar1_recovery():
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        e = rng.normal(size=600)
        x = np.zeros(600)
        for t in range(1, 600):
            x[t] = 0.7 * x[t - 1] + e[t]
        model = fit_arima(x[100:], p=1, d=0, q=0)
        hits += abs(model.ar[0] - 0.7) <= 0.1
    assert hits >= 18


# 10 --------------------------------------------------------------------------

@criterion(10, "Mock relevance agrees with hand labels")
def test_mock_relevance_agreement():
    pairs = json.loads((FIXTURES / "relevance_pairs.json").read_text())
    assert len(pairs) == 30
    gw = Gateway(GatewayConfig(mode="mock"))
    agree = 0
    for pair in pairs:
        e, p = pair["event"], pair["post"]
        event = Event(e["event_id"], e["title"], e["event_type"], e["summary"], "",
                      (EventSession(datetime(2024, 1, 1), datetime(2024, 1, 1, 2)),))
        post = Post(p["post_id"], "u", p["title"], p["content"], datetime(2024, 1, 1), 0, 0,
                    tuple(p["hashtags"]), tuple(p["geotags"]))
        agree += relevance_check(event, post, gw) == bool(pair["related"])
    print(f"mock agrees on {agree}/30 pairs")
    assert agree >= 27


# 11 --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def grid_run(tmp_path_factory):
    directory = tmp_path_factory.mktemp("grid")
    write_corpus(generate(SynthConfig(n_days=120)), directory)
    fm = load_corpus(directory).matrix("FS5", popularity_lag=1)
    grid = GridSpec()
    best, table = grid_search(fm, RollingConfig(first_origin=len(fm) - 15), grid)
    path = directory / "grid_results.csv"
    path.write_text(table_to_csv(table, GRID_COLUMNS))
    return grid, best, table, read_grid_csv(path)


@criterion(11, "Full grid search on a 120-day corpus")
def test_grid_search_evaluates_84_combinations(grid_run):
    grid, _, table, emitted = grid_run
    assert len(grid) == 84
    assert len(table) == 84
    assert len(emitted) == 84


@criterion(11, "Full grid search on a 120-day corpus")
def test_grid_search_table_complete_and_argmax_recomputes(grid_run):
    grid, best, table, emitted = grid_run
    combos = {(r["learning_rate"], r["max_depth"], r["n_estimators"], r["weight_decay"]) for r in table}
    assert combos == set(itertools.product(grid.learning_rates, grid.max_depths, grid.n_estimators,
                                           grid.weight_decays))
    assert len(table) == len(combos) == len(emitted)
    assert min(emitted, key=grid_rank_key) == best
    assert best["r2"] == max(r["r2"] for r in emitted)


# 12 --------------------------------------------------------------------------

@criterion(12, "End-to-end runs are byte-identical")
def test_end_to_end_determinism(tmp_path):
    config = tmp_path / "run.toml"
    config.write_text(
        'seed = 11\n[synth]\nn_days = 160\n[rolling]\nfirst_origin = 130\nhorizon = 2\n'
        '[model.params]\nn_estimators = 200\n'
    )
    outputs = []
    for run in ("a", "b"):
        d, o = tmp_path / run / "data", tmp_path / run / "out"
        common = ["--config", str(config), "--data-dir", str(d), "--out-dir", str(o)]
        for cmd in (["synth"], ["features", "--set", "FS5"], ["rolling"], ["explain"]):
            assert cli_main(cmd + common) == 0
        outputs.append({p.relative_to(tmp_path / run): p.read_bytes()
                        for p in sorted((tmp_path / run).rglob("*")) if p.is_file()})
    a, b = outputs
    assert set(a) == set(b)
    for name in ("out/rolling_report.json", "out/shap_values.csv", "out/importance.json",
                 "out/summary_points.csv", "out/features_FS5.csv", "data/flows.csv"):
        assert Path(name) in a
    assert all(a[k] == b[k] for k in a)
