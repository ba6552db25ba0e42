"""Sample-weighted gradient-boosted regression trees with squared-error loss.

Each stage fits a tree to the current residuals ``y - F`` (the negative
gradient of squared error) using weighted variance reduction, and the
ensemble predicts ``base_score + learning_rate * sum(tree(x))``.  Model
complexity is controlled by ``max_depth`` and ``min_samples_leaf`` rather
than an explicit penalty term.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import _tree
from .base import check_fit_inputs, check_X


@dataclass(frozen=True)
class GbdtParams:
    learning_rate: float = 0.05
    max_depth: int = 3
    n_estimators: int = 500
    weight_decay: float = 0.005
    min_samples_leaf: int = 5
    random_seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RegressionTree:
    """One fitted tree; leaves have ``feature == -1``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        def walk(k):
            return 0 if self.feature[k] < 0 else 1 + max(walk(self.left[k]), walk(self.right[k]))
        return walk(0)

    def predict(self, X) -> np.ndarray:
        X = check_X(X)
        return np.array([_tree.tree_value(x, self.feature, self.threshold, self.left, self.right, self.value)
                         for x in X])

    def expected_value(self) -> float:
        """Cover-weighted mean of the leaf values."""
        leaves = self.feature < 0
        return float(np.sum(self.value[leaves] * self.cover[leaves]) / self.cover[0])


def _stack(trees: Sequence[RegressionTree]):
    cap = max((t.n_nodes for t in trees), default=1)
    T = len(trees)
    feature = np.full((T, cap), _tree.LEAF, dtype=np.int64)
    left = np.full((T, cap), -1, dtype=np.int64)
    right = np.full((T, cap), -1, dtype=np.int64)
    threshold, value, cover = np.zeros((T, cap)), np.zeros((T, cap)), np.zeros((T, cap))
    for i, t in enumerate(trees):
        m = t.n_nodes
        feature[i, :m], threshold[i, :m], left[i, :m] = t.feature, t.threshold, t.left
        right[i, :m], value[i, :m], cover[i, :m] = t.right, t.value, t.cover
    return feature, threshold, left, right, value, cover


class Ensemble:
    """``base_score + learning_rate * sum(tree(x))`` over an ordered list of trees.

    Trees are held as padded node arrays of shape ``(n_trees, max_nodes)``;
    ``trees`` gives per-tree views.
    """

    def __init__(self, base_score: float, learning_rate: float, trees: Sequence[RegressionTree],
                 n_features: int, feature_names: Sequence[str] | None = None, train_loss=None):
        self.base_score = float(base_score)
        self.learning_rate = float(learning_rate)
        self.n_features = int(n_features)
        self.feature_names = tuple(feature_names) if feature_names is not None else None
        self.train_loss = train_loss
        self._arrays = _stack(list(trees))
        self._n_nodes = np.array([t.n_nodes for t in trees], dtype=np.int64)
        self._trees = list(trees)

    @classmethod
    def from_arrays(cls, base_score, learning_rate, arrays, n_nodes, n_features, feature_names=None,
                    train_loss=None) -> "Ensemble":
        self = cls.__new__(cls)
        self.base_score = float(base_score)
        self.learning_rate = float(learning_rate)
        self.n_features = int(n_features)
        self.feature_names = tuple(feature_names) if feature_names is not None else None
        self.train_loss = train_loss
        self._arrays = tuple(arrays)
        self._n_nodes = np.asarray(n_nodes, dtype=np.int64)
        self._trees = None
        return self

    @property
    def trees(self) -> list[RegressionTree]:
        if self._trees is None:
            f, t, l, r, v, c = self._arrays
            self._trees = [RegressionTree(f[i, :m].copy(), t[i, :m].copy(), l[i, :m].copy(),
                                          r[i, :m].copy(), v[i, :m].copy(), c[i, :m].copy())
                           for i, m in enumerate(self._n_nodes)]
        return self._trees

    @property
    def n_estimators(self) -> int:
        return len(self._n_nodes)

    def tree_sums(self, X, stages: Sequence[int]) -> np.ndarray:
        X = check_X(X, self.n_features)
        stages = np.asarray(sorted(stages), dtype=np.int64)
        if len(stages) and (stages[0] < 0 or stages[-1] > self.n_estimators):
            raise ValueError(f"stages must lie in 0..{self.n_estimators}")
        if self.n_estimators == 0:
            return np.zeros((len(stages), X.shape[0]))
        return _tree.sum_trees(X, *self._arrays[:5], stages)

    def predict(self, X) -> np.ndarray:
        return self.base_score + self.learning_rate * self.tree_sums(X, [self.n_estimators])[0]

    def staged_predict(self, X, stages: Sequence[int]) -> dict[int, np.ndarray]:
        """Predictions of the first ``k`` trees for each ``k`` in ``stages``.

        Bit-identical to refitting with ``n_estimators=k`` because growth of
        tree ``i`` never depends on how many trees follow it.
        """
        sums = self.tree_sums(X, stages)
        return {int(k): self.base_score + self.learning_rate * s for k, s in zip(sorted(stages), sums)}

    def truncated(self, k: int) -> "Ensemble":
        loss = None if self.train_loss is None else self.train_loss[:k + 1]
        return Ensemble.from_arrays(self.base_score, self.learning_rate, [a[:k] for a in self._arrays],
                                    self._n_nodes[:k], self.n_features, self.feature_names, loss)

    def per_tree_predictions(self, X) -> np.ndarray:
        X = check_X(X, self.n_features)
        if self.n_estimators == 0:
            return np.zeros((0, X.shape[0]))
        return _tree.per_tree_values(X, *self._arrays[:5])

    @property
    def arrays(self):
        """``(feature, threshold, left, right, value, cover)`` padded node arrays."""
        return self._arrays


def fit_gbdt(X, y, params: GbdtParams = GbdtParams(), sample_weight=None,
             feature_names: Sequence[str] | None = None) -> Ensemble:
    """Fit a boosted ensemble; rows with zero weight are removed before anything else."""
    X, y, w = check_fit_inputs(X, y, sample_weight)
    keep = w > 0
    if not keep.all():
        X, y, w = np.ascontiguousarray(X[keep]), y[keep], w[keep]
    base = float(np.sum(w * y) / np.sum(w))
    order = _tree.presort(X)
    cap = _tree.max_nodes(params.max_depth, X.shape[0])
    *arrays, n_nodes, loss = _tree.fit_boosting(
        X, y, w, order, base, float(params.learning_rate), int(params.max_depth),
        int(params.n_estimators), int(params.min_samples_leaf), cap)
    return Ensemble.from_arrays(base, params.learning_rate, arrays, n_nodes, X.shape[1], feature_names, loss)


def predict_gbdt(model: Ensemble, X) -> np.ndarray:
    return model.predict(X)


class GbdtRegressor:
    """fit/predict wrapper around :func:`fit_gbdt`."""

    kind = "gbdt"

    def __init__(self, params: GbdtParams | None = None, **kwargs):
        self.params = params or GbdtParams(**kwargs)
        self.model_: Ensemble | None = None

    def fit(self, X, y, sample_weight=None, feature_names=None) -> "GbdtRegressor":
        self.model_ = fit_gbdt(X, y, self.params, sample_weight, feature_names)
        return self

    def predict(self, X) -> np.ndarray:
        if self.model_ is None:
            raise RuntimeError("model is not fitted")
        return self.model_.predict(X)
