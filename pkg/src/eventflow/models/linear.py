"""Weighted least squares with an intercept."""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np

from ..errors import SingularSystem
from .base import check_fit_inputs, check_X

RIDGE_SCALE = 1e-8


@dataclass(frozen=True)
class LinearParams:
    weight_decay: float = 0.005


@dataclass(frozen=True)
class LinearModel:
    coef: np.ndarray
    intercept: float
    ridge: float = 0.0

    def predict(self, X) -> np.ndarray:
        X = check_X(X, len(self.coef))
        # row by row, so a prediction never depends on which other rows share the call
        return np.array([math.fsum(row) + self.intercept for row in X * self.coef])


def fit_linear(X, y, sample_weight=None) -> LinearModel:
    """Minimise ``sum w_t (y_t - x_t . beta - beta0)^2``.

    Falls back to a tiny ridge penalty (scaled by the Gram trace) on the
    slopes when the weighted normal equations are singular.
    """
    X, y, w = check_fit_inputs(X, y, sample_weight)
    A = np.hstack([np.ones((X.shape[0], 1)), X])
    G = A.T @ (A * w[:, None])
    b = A.T @ (w * y)
    ridge = 0.0
    if np.linalg.matrix_rank(G) < G.shape[0]:
        ridge = RIDGE_SCALE * np.trace(G) / G.shape[0]
        G = G.copy()
        G[1:, 1:] += ridge * np.eye(G.shape[0] - 1)
        # an all-zero weighted design can stay singular
        if np.linalg.matrix_rank(G) < G.shape[0]:
            raise SingularSystem("weighted normal equations are singular even with ridge fallback")
    try:
        beta = np.linalg.solve(G, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(beta)):
        raise SingularSystem("non-finite coefficients")
    return LinearModel(beta[1:], float(beta[0]), ridge)


class LinearRegressor:
    kind = "linear"

    def __init__(self, params: LinearParams | None = None, **kwargs):
        self.params = params or LinearParams(**kwargs)
        self.model_: LinearModel | None = None

    def fit(self, X, y, sample_weight=None, feature_names=None) -> "LinearRegressor":
        self.model_ = fit_linear(X, y, sample_weight)
        return self

    def predict(self, X) -> np.ndarray:
        if self.model_ is None:
            raise RuntimeError("model is not fitted")
        return self.model_.predict(X)
