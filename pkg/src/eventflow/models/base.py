"""Shared input validation and the sample-weight schedule."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionMismatch, NonFiniteInput


def sample_weights(T: int, delta: float) -> np.ndarray:
    """Linearly decaying training weights ``w_t = max(1 - (T - t) * delta, 0)`` for t = 1..T."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    age = np.arange(T - 1, -1, -1, dtype=float)
    return np.maximum(1.0 - age * delta, 0.0)


def check_X(X, n_features: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch(f"X must be 2-D, got shape {X.shape}")
    if n_features is not None and X.shape[1] != n_features:
        raise DimensionMismatch(f"X has {X.shape[1]} columns, model expects {n_features}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("X contains NaN or infinite values")
    return np.ascontiguousarray(X)


def check_fit_inputs(X, y, sample_weight=None, min_rows: int = 2):
    X = check_X(X)
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"y has shape {y.shape}, X has {X.shape[0]} rows")
    if X.shape[0] < min_rows:
        raise DimensionMismatch(f"need at least {min_rows} rows, got {X.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise NonFiniteInput("y contains NaN or infinite values")
    if sample_weight is None:
        w = np.ones_like(y)
    else:
        w = np.asarray(sample_weight, dtype=float)
        if w.shape != y.shape:
            raise DimensionMismatch(f"sample_weight has shape {w.shape}, expected {y.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise NonFiniteInput("sample weights must be finite and non-negative")
        if not np.any(w > 0):
            raise ValueError("at least one sample weight must be positive")
    return X, y, np.ascontiguousarray(w)


def weighted_mse(y, yhat, w=None) -> float:
    y, yhat = np.asarray(y, float), np.asarray(yhat, float)
    w = np.ones_like(y) if w is None else np.asarray(w, float)
    return float(np.sum(w * (y - yhat) ** 2) / np.sum(w))
