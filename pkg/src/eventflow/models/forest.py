"""Random forest on the shared tree kernel.

Bootstrap samples are drawn with probability proportional to the sample
weights; the resulting draw counts become the tree's training weights, so
rows never drawn are absent from that tree.  Each node considers a random
subset of the features.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import _tree
from .base import check_fit_inputs, check_X
from .gbdt import RegressionTree, _stack


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 100
    max_depth: int = 8
    min_samples_leaf: int = 2
    max_features: int | float | None = 1 / 3
    bootstrap: bool = True
    weight_decay: float = 0.005
    random_seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")

    def n_split_features(self, p: int) -> int:
        m = self.max_features
        if m is None:
            return p
        if isinstance(m, float):
            return max(1, min(p, int(m * p)))
        return max(1, min(p, int(m)))

    def to_dict(self) -> dict:
        return asdict(self)


class Forest:
    """Unweighted mean of independently grown trees."""

    def __init__(self, trees: list[RegressionTree], n_features: int):
        self.trees = trees
        self.n_features = n_features
        self._arrays = _stack(trees)

    def predict(self, X) -> np.ndarray:
        X = check_X(X, self.n_features)
        T = len(self.trees)
        return _tree.sum_trees(X, *self._arrays[:5], np.array([T], dtype=np.int64))[0] / T


def fit_tree(X, y, sample_weight=None, max_depth: int = 8, min_samples_leaf: int = 1,
             feature_mask: np.ndarray | None = None) -> RegressionTree:
    """One weighted regression tree on ``y``; zero-weight rows are dropped."""
    X, y, w = check_fit_inputs(X, y, sample_weight, min_rows=1)
    keep = w > 0
    X, y, w = np.ascontiguousarray(X[keep]), y[keep], w[keep]
    order = _tree.presort(X)
    return _grow(X, y, w, order, max_depth, min_samples_leaf, feature_mask)


def _grow(X, y, w, order, max_depth, min_leaf, mask):
    cap = _tree.max_nodes(max_depth, X.shape[0])
    arrays = [np.empty(cap, dtype=np.int64), np.empty(cap), np.empty(cap, dtype=np.int64),
              np.empty(cap, dtype=np.int64), np.empty(cap), np.empty(cap)]
    node_of = np.empty(X.shape[0], dtype=np.int64)
    use_mask = mask is not None
    if mask is None:
        mask = np.ones((1, 1), dtype=np.bool_)
    else:
        mask = np.ascontiguousarray(mask[:cap], dtype=np.bool_)
        if mask.shape[0] < cap:
            raise ValueError(f"feature mask needs {cap} rows")
    xs = _tree.sorted_values(X, order)
    m = _tree.grow_tree(X, order, xs, y, w, max_depth, min_leaf, mask, use_mask, *arrays, node_of)
    return RegressionTree(*(a[:m].copy() for a in arrays))


def node_feature_masks(rng: np.random.Generator, n_nodes: int, p: int, k: int) -> np.ndarray:
    mask = np.zeros((n_nodes, p), dtype=np.bool_)
    for node in range(n_nodes):
        mask[node, rng.choice(p, size=k, replace=False)] = True
    return mask


def fit_rf(X, y, sample_weight=None, params: ForestParams = ForestParams()) -> Forest:
    X, y, w = check_fit_inputs(X, y, sample_weight)
    keep = w > 0
    X, y, w = np.ascontiguousarray(X[keep]), y[keep], w[keep]
    n, p = X.shape
    rng = np.random.default_rng(params.random_seed)
    k = params.n_split_features(p)
    cap = _tree.max_nodes(params.max_depth, n)
    order = _tree.presort(X)
    trees = []
    for _ in range(params.n_estimators):
        if params.bootstrap:
            counts = rng.multinomial(n, w / w.sum()).astype(float)
            drawn = counts > 0
            tw = counts[drawn]
            Xt, yt = np.ascontiguousarray(X[drawn]), y[drawn]
            ot = _tree.filter_order(order, drawn)
        else:
            Xt, yt, tw, ot = X, y, w, order
        mask = None if k == p else node_feature_masks(rng, cap, p, k)
        trees.append(_grow(Xt, yt, tw, ot, params.max_depth, params.min_samples_leaf, mask))
    return Forest(trees, p)


class ForestRegressor:
    kind = "rf"

    def __init__(self, params: ForestParams | None = None, **kwargs):
        self.params = params or ForestParams(**kwargs)
        self.model_: Forest | None = None

    def fit(self, X, y, sample_weight=None, feature_names=None) -> "ForestRegressor":
        self.model_ = fit_rf(X, y, sample_weight, self.params)
        return self

    def predict(self, X) -> np.ndarray:
        if self.model_ is None:
            raise RuntimeError("model is not fitted")
        return self.model_.predict(X)
