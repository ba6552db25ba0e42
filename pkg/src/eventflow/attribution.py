"""Exact path-dependent tree SHAP, permutation importance and ranked exports.

For a single tree the cover-weighted value of a coalition ``S`` is::

    v(S) = sum over leaves L of  value_L * prod_{j on path(L)} (o_Lj(x) if j in S else z_Lj)

where ``z_Lj`` is the product of cover ratios along the path's splits on
feature ``j`` and ``o_Lj(x)`` is 1 when ``x`` satisfies all of them.  Each
leaf term is a product game over the ``k`` distinct path features, whose
Shapley values have the closed form::

    phi_j = value_L * (o_j - z_j) * sum_s c_s * s! (k-1-s)! / k!

with ``c_s`` the coefficients of ``prod_{i != j} (z_i + o_i t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .errors import SchemaMismatch
from .models.forest import Forest
from .models.gbdt import Ensemble, RegressionTree


@dataclass
class ShapResult:
    base_value: float
    values: np.ndarray  # (n_samples, n_features)
    feature_names: tuple[str, ...]
    predictions: np.ndarray | None = None

    def total(self) -> np.ndarray:
        return self.base_value + self.values.sum(axis=1)


@dataclass
class ImportanceReport:
    features: tuple[str, ...]
    importance: np.ndarray  # aligned with features
    ranking: list[str] = field(default_factory=list)
    points: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if not self.ranking:
            order = sorted(range(len(self.features)), key=lambda j: (-self.importance[j], j))
            self.ranking = [self.features[j] for j in order]

    def top(self, k: int) -> list[tuple[str, float]]:
        idx = {f: j for j, f in enumerate(self.features)}
        return [(f, float(self.importance[idx[f]])) for f in self.ranking[:k]]

    def to_dict(self, k: int | None = None) -> dict:
        rows = self.top(len(self.ranking) if k is None else k)
        return {"ranking": [{"rank": i + 1, "feature": f, "importance": v} for i, (f, v) in enumerate(rows)]}


def leaf_paths(tree: RegressionTree, max_path: int):
    """Per-leaf path summaries as padded arrays for the compiled kernel."""
    leaves = []
    stack = [(0, [])]  # (node, [(feature, threshold, went_left, ratio)])
    while stack:
        k, path = stack.pop()
        f = int(tree.feature[k])
        if f < 0:
            leaves.append((k, path))
            continue
        cov = tree.cover[k]
        l, r = int(tree.left[k]), int(tree.right[k])
        stack.append((r, path + [(f, tree.threshold[k], False, tree.cover[r] / cov)]))
        stack.append((l, path + [(f, tree.threshold[k], True, tree.cover[l] / cov)]))
    L = len(leaves)
    value = np.zeros(L)
    n_feat = np.zeros(L, dtype=np.int64)
    feats = np.zeros((L, max_path), dtype=np.int64)
    z = np.ones((L, max_path))
    n_cond = np.zeros(L, dtype=np.int64)
    cond_slot = np.zeros((L, max_path), dtype=np.int64)
    cond_thr = np.zeros((L, max_path))
    cond_left = np.zeros((L, max_path), dtype=np.bool_)
    for i, (k, path) in enumerate(leaves):
        value[i] = tree.value[k]
        slots: dict[int, int] = {}
        for c, (f, thr, went_left, ratio) in enumerate(path):
            if f not in slots:
                slots[f] = len(slots)
                feats[i, slots[f]] = f
            z[i, slots[f]] *= ratio
            cond_slot[i, c], cond_thr[i, c], cond_left[i, c] = slots[f], thr, went_left
        n_feat[i] = len(slots)
        n_cond[i] = len(path)
    return value, n_feat, feats, z, n_cond, cond_slot, cond_thr, cond_left


@njit(cache=True)
def _shapley_weights(max_k):
    # wts[k, s] = s! (k-1-s)! / k!
    wts = np.zeros((max_k + 1, max_k + 1))
    for k in range(1, max_k + 1):
        for s in range(k):
            wts[k, s] = math.gamma(s + 1) * math.gamma(k - s) / math.gamma(k + 1)
    return wts


@njit(cache=True)
def _tree_shap(X, value, n_feat, feats, z, n_cond, cond_slot, cond_thr, cond_left, wts, scale, out):
    n = X.shape[0]
    D = feats.shape[1]
    o = np.empty(D)
    coef = np.empty(D + 1)
    for row in range(n):
        x = X[row]
        for L in range(value.shape[0]):
            k = n_feat[L]
            if k == 0:
                continue
            for j in range(k):
                o[j] = 1.0
            for c in range(n_cond[L]):
                s = cond_slot[L, c]
                xv = x[feats[L, s]]
                ok = xv <= cond_thr[L, c]
                if ok != cond_left[L, c]:
                    o[s] = 0.0
            v = value[L] * scale
            for j in range(k):
                d = o[j] - z[L, j]
                if d == 0.0:
                    continue
                # coefficients of prod_{i != j} (z_i + o_i t)
                coef[0] = 1.0
                m = 0
                for i in range(k):
                    if i == j:
                        continue
                    coef[m + 1] = 0.0
                    for s in range(m + 1, 0, -1):
                        coef[s] = coef[s] * z[L, i] + coef[s - 1] * o[i]
                    coef[0] = coef[0] * z[L, i]
                    m += 1
                acc = 0.0
                for s in range(k):
                    acc += coef[s] * wts[k, s]
                out[row, feats[L, j]] += v * d * acc


def _tree_list(model):
    if isinstance(model, Ensemble):
        return model.trees, model.learning_rate, model.base_score, model.n_features
    if isinstance(model, Forest):
        return model.trees, 1.0 / len(model.trees), 0.0, model.n_features
    if isinstance(model, RegressionTree):
        return [model], 1.0, 0.0, None
    raise TypeError(f"tree SHAP needs a tree model, got {type(model).__name__}")


def tree_shap(model, X, feature_names: Sequence[str] | None = None) -> ShapResult:
    """SHAP values of a boosted ensemble, forest or single tree, in target units."""
    trees, scale, base, n_features = _tree_list(model)
    X = np.ascontiguousarray(np.asarray(X, dtype=float))
    if X.ndim != 2:
        raise SchemaMismatch("X must be 2-D")
    if n_features is None:
        n_features = X.shape[1]
    if X.shape[1] != n_features:
        raise SchemaMismatch(f"X has {X.shape[1]} columns, model was trained on {n_features}")
    model_names = getattr(model, "feature_names", None)
    if feature_names is not None and model_names is not None and tuple(feature_names) != tuple(model_names):
        raise SchemaMismatch("feature names differ from the training schema")
    names = tuple(feature_names or model_names or (f"x{j}" for j in range(n_features)))
    out = np.zeros((X.shape[0], n_features))
    max_path = max((t.depth for t in trees), default=0) or 1
    wts = _shapley_weights(max_path)
    expected = 0.0
    for t in trees:
        paths = leaf_paths(t, max_path)
        _tree_shap(X, *paths, wts, scale, out)
        expected += t.expected_value()
    base_value = base + scale * expected
    preds = model.predict(X)
    return ShapResult(base_value, out, names, preds)


def mean_abs(values: np.ndarray) -> np.ndarray:
    """Order-independent mean of |values| per column."""
    return np.array([math.fsum(np.abs(values[:, j])) / values.shape[0] for j in range(values.shape[1])])


def mae_metric(y, yhat) -> float:
    return float(np.mean(np.abs(np.asarray(y) - np.asarray(yhat))))


def permutation_importance(model, X, y, metric: Callable = mae_metric, repeats: int = 5, seed: int = 0,
                           feature_names: Sequence[str] | None = None) -> ImportanceReport:
    """Mean increase of ``metric`` (a loss) when one column is shuffled."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rng = np.random.default_rng(seed)
    baseline = metric(y, model.predict(X))
    imp = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        deltas = []
        for _ in range(repeats):
            Xp = X.copy()
            Xp[:, j] = Xp[rng.permutation(X.shape[0]), j]
            deltas.append(metric(y, model.predict(Xp)) - baseline)
        imp[j] = math.fsum(deltas) / repeats
    names = tuple(feature_names or (f"x{j}" for j in range(X.shape[1])))
    return ImportanceReport(names, imp)


def export_summary(shap: ShapResult, X, top_k: int = 10, dates: Sequence | None = None) -> ImportanceReport:
    """Ranking by mean |SHAP| plus (feature value, contribution) scatter rows of the top ``top_k``."""
    X = np.asarray(getattr(X, "values", X), dtype=float)
    if X.shape != shap.values.shape:
        raise SchemaMismatch("feature values and SHAP values differ in shape")
    imp = mean_abs(shap.values)
    full = ImportanceReport(shap.feature_names, imp)
    keep = full.ranking[:max(0, top_k)]
    points = []
    for f in keep:
        j = shap.feature_names.index(f)
        for i in range(X.shape[0]):
            rec = {"feature": f, "value": float(X[i, j]), "shap": float(shap.values[i, j])}
            if dates is not None:
                rec = {"date": str(dates[i]), **rec}
            points.append(rec)
    return ImportanceReport(shap.feature_names, imp, keep, points)
