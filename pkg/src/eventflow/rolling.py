"""Expanding-window rolling forecasts, horizon averaging, scoring, grid search and ablation.

At every origin ``t`` the model is refit on rows ``0..t`` with linearly
decaying sample weights and forecasts rows ``t+1..t+h``.  The prediction
scored for day ``s`` is the plain mean of every forecast that targets it,
issued from origins ``max(first_origin, s-h)..s-1``.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .errors import InsufficientHistory, ZeroVariance
from .features import FeatureMatrix
from .models import GbdtParams, ModelSpec, sample_weights

MAX_HORIZON = 7


def check_horizon(h: int) -> int:
    if not isinstance(h, (int, np.integer)) or not 1 <= h <= MAX_HORIZON:
        raise ValueError(f"horizon must be an integer in 1..{MAX_HORIZON}, got {h!r}")
    return int(h)


@dataclass(frozen=True)
class RollingConfig:
    first_origin: int = 180
    horizon: int = 1
    model: ModelSpec = field(default_factory=ModelSpec)
    persist_trend: bool = True
    segment: str | None = None

    def __post_init__(self):
        check_horizon(self.horizon)
        if self.first_origin < 1:
            raise ValueError("first_origin must be >= 1")

    def to_dict(self) -> dict:
        return {"first_origin": self.first_origin, "horizon": self.horizon, "model": self.model.to_dict(),
                "persist_trend": self.persist_trend, "segment": self.segment}


def score(y, yhat) -> tuple[float, float]:
    """``(MAE, R2)``; raises :class:`ZeroVariance` (carrying the MAE) for a constant target."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.ndim != 1:
        raise ValueError("y and yhat must be 1-D and equally long")
    if len(y) < 2:
        raise ValueError("need at least two scored points")
    mae = math.fsum(np.abs(y - yhat)) / len(y)
    ybar = math.fsum(y) / len(y)
    sst = math.fsum((y - ybar) ** 2)
    if sst == 0:
        raise ZeroVariance(mae)
    sse = math.fsum((y - yhat) ** 2)
    return mae, 1.0 - sse / sst


@dataclass
class RollingReport:
    dates: list
    actual: np.ndarray
    predicted: np.ndarray
    mae: float
    r2: float | None
    origins: np.ndarray
    targets: np.ndarray
    leads: np.ndarray
    forecasts: np.ndarray
    per_lead: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    feature_set: str = ""

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "feature_set": self.feature_set,
            "metrics": {"mae": self.mae, "r2": self.r2, "n_scored": len(self.dates)},
            "per_lead": {str(k): v for k, v in sorted(self.per_lead.items())},
            "days": [{"date": d.isoformat(), "actual": float(a), "predicted": float(p)}
                     for d, a, p in zip(self.dates, self.actual, self.predicted)],
        }

    def raw_table(self) -> list[dict]:
        return [{"origin": int(o), "target": int(t), "lead": int(l), "forecast": float(v)}
                for o, t, l, v in zip(self.origins, self.targets, self.leads, self.forecasts)]


def _future_rows(values: np.ndarray, t: int, h: int, trend_idx: Sequence[int], persist: bool) -> np.ndarray:
    X = values[t + 1:t + 1 + h].copy()
    if persist and trend_idx and len(X) > 1:
        # the trend of day t+1 is the latest one computable from flows through day t
        X[1:, trend_idx] = values[t + 1, trend_idx]
    return X


def raw_forecasts(fm: FeatureMatrix, cfg: RollingConfig, stages: Sequence[int] | None = None):
    """Run every origin once.

    Returns ``(origins, targets, leads, values)`` where ``values`` is a dict
    ``stage -> array`` when ``stages`` is given (boosted models only) and a
    plain array otherwise.
    """
    n = len(fm)
    h = cfg.horizon
    if cfg.first_origin > n - 2:
        raise InsufficientHistory(f"first_origin={cfg.first_origin} leaves nothing to forecast in {n} rows")
    trend_idx = fm.trend_index
    origins, targets, leads = [], [], []
    out: dict[int, list] | list = {k: [] for k in stages} if stages is not None else []
    delta = cfg.model.weight_decay
    for t in range(cfg.first_origin, n - 1):
        try:
            model = cfg.model.build()
            model.fit(fm.values[:t + 1], fm.target[:t + 1], sample_weights(t + 1, delta), fm.columns)
            Xf = _future_rows(fm.values, t, h, trend_idx, cfg.persist_trend)
            if stages is not None:
                staged = model.model_.staged_predict(Xf, stages)
                for k in stages:
                    out[k].extend(staged[k])
            else:
                out.extend(model.predict(Xf))
        except Exception as exc:
            exc.origin = t
            raise
        for j in range(len(Xf)):
            origins.append(t)
            targets.append(t + 1 + j)
            leads.append(j + 1)
    arr = lambda a, dt=np.int64: np.asarray(a, dtype=dt)
    values = {k: arr(v, float) for k, v in out.items()} if stages is not None else arr(out, float)
    return arr(origins), arr(targets), arr(leads), values


def average_forecasts(targets: np.ndarray, values: np.ndarray, first_target: int, n: int) -> np.ndarray:
    """Mean of all forecasts per target row ``first_target..n-1``.

    The mean is computed in exact rational arithmetic and rounded once, so
    identical forecasts average to themselves and order does not matter.
    """
    buckets: list[list[Fraction]] = [[] for _ in range(n - first_target)]
    for t, v in zip(targets, values):
        buckets[t - first_target].append(Fraction(float(v)))
    return np.array([float(sum(b) / len(b)) for b in buckets])


def _score_or_none(y, yhat):
    try:
        return score(y, yhat)
    except ZeroVariance as exc:
        return exc.mae, None


def build_report(fm: FeatureMatrix, cfg: RollingConfig, origins, targets, leads, values) -> RollingReport:
    n = len(fm)
    first_target = cfg.first_origin + 1
    pred = average_forecasts(targets, values, first_target, n)
    actual = fm.target[first_target:]
    mae, r2 = _score_or_none(actual, pred)
    per_lead = {}
    for lead in range(1, cfg.horizon + 1):
        sel = leads == lead
        if sel.sum() >= 2:
            m, r = _score_or_none(fm.target[targets[sel]], values[sel])
            per_lead[lead] = {"mae": m, "r2": r, "n": int(sel.sum())}
    return RollingReport(list(fm.dates[first_target:]), actual.copy(), pred, mae, r2, origins, targets,
                         leads, values, per_lead, cfg.to_dict(), fm.feature_set)


def run_rolling(fm: FeatureMatrix, cfg: RollingConfig = RollingConfig()) -> RollingReport:
    origins, targets, leads, values = raw_forecasts(fm, cfg)
    return build_report(fm, cfg, origins, targets, leads, values)


# grid search

@dataclass(frozen=True)
class GridSpec:
    learning_rates: tuple[float, ...] = (0.01, 0.05, 0.1)
    max_depths: tuple[int, ...] = (3, 5, 7)
    n_estimators: tuple[int, ...] = (100, 200, 500, 1000)
    weight_decays: tuple[float, ...] = (0.0, 0.001, 0.002, 0.003, 0.004, 0.005, 0.006)

    def __post_init__(self):
        for name in ("learning_rates", "max_depths", "n_estimators", "weight_decays"):
            axis = tuple(sorted(getattr(self, name)))
            if not axis:
                raise ValueError(f"grid axis {name} is empty")
            object.__setattr__(self, name, axis)

    def __len__(self):
        return len(self.learning_rates) * len(self.max_depths) * len(self.n_estimators) * len(self.weight_decays)


GRID_COLUMNS = ("learning_rate", "max_depth", "n_estimators", "weight_decay", "r2", "mae")


def grid_rank_key(row: Mapping) -> tuple:
    """Sort key whose minimum is the best row: highest R2, then lower I, d, gamma, delta."""
    r2 = row["r2"]
    return (-(r2 if r2 is not None else -math.inf), row["n_estimators"], row["max_depth"],
            row["learning_rate"], row["weight_decay"])


def _grid_cell(args) -> list[dict]:
    fm, base_cfg, lr, depth, delta, stages, min_leaf = args
    params = GbdtParams(learning_rate=lr, max_depth=depth, n_estimators=max(stages), weight_decay=delta,
                        min_samples_leaf=min_leaf)
    cfg = replace(base_cfg, horizon=1, model=ModelSpec("gbdt", params))
    origins, targets, leads, values = raw_forecasts(fm, cfg, stages)
    rows = []
    for k in stages:
        rep = build_report(fm, cfg, origins, targets, leads, values[k])
        rows.append({"learning_rate": lr, "max_depth": depth, "n_estimators": k, "weight_decay": delta,
                     "r2": rep.r2, "mae": rep.mae})
    return rows


def grid_search(fm: FeatureMatrix, cfg: RollingConfig, grid: GridSpec = GridSpec(),
                jobs: int = 1) -> tuple[dict, list[dict]]:
    """Evaluate every grid combination at horizon 1; returns ``(best_row, table)``.

    For each (learning rate, depth, decay) one ensemble with the largest
    tree count is fit per origin, and smaller tree counts are read off its
    staged predictions, which equal separate fits exactly.
    """
    min_leaf = cfg.model.params.min_samples_leaf if cfg.model.kind == "gbdt" else GbdtParams().min_samples_leaf
    tasks = [(fm, cfg, lr, d, delta, grid.n_estimators, min_leaf)
             for lr, d, delta in itertools.product(grid.learning_rates, grid.max_depths, grid.weight_decays)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_grid_cell, tasks))
    else:
        chunks = [_grid_cell(t) for t in tasks]
    table = sorted(itertools.chain.from_iterable(chunks),
                   key=lambda r: (r["learning_rate"], r["max_depth"], r["n_estimators"], r["weight_decay"]))
    return min(table, key=grid_rank_key), table


def table_to_csv(rows: Sequence[Mapping], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(["" if r[c] is None else repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns])
    return buf.getvalue()


def read_grid_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append({"learning_rate": float(rec["learning_rate"]), "max_depth": int(rec["max_depth"]),
                         "n_estimators": int(rec["n_estimators"]),
                         "weight_decay": float(rec["weight_decay"]),
                         "r2": float(rec["r2"]) if rec["r2"] else None, "mae": float(rec["mae"])})
    return rows


# ablation

ABLATION_COLUMNS = ("feature_set", "n_features", "r2", "mae")


def ablation(matrices: Mapping[str, FeatureMatrix], cfg: RollingConfig,
             jobs: int = 1) -> tuple[list[dict], dict[str, RollingReport]]:
    names = sorted(matrices)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = dict(zip(names, pool.map(run_rolling, [matrices[k] for k in names],
                                               itertools.repeat(cfg))))
    else:
        reports = {k: run_rolling(matrices[k], cfg) for k in names}
    rows = [{"feature_set": k, "n_features": len(matrices[k].columns), "r2": reports[k].r2,
             "mae": reports[k].mae} for k in names]
    return rows, reports
