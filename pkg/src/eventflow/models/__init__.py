"""Regressors sharing a ``fit(X, y, sample_weight)`` / ``predict(X)`` contract."""

from __future__ import annotations

from dataclasses import dataclass, field

from .arima import ArimaForecaster, ArimaModel, ArimaParams, fit_arima, forecast
from .base import sample_weights
from .forest import Forest, ForestParams, ForestRegressor, fit_rf, fit_tree
from .gbdt import Ensemble, GbdtParams, GbdtRegressor, RegressionTree, fit_gbdt, predict_gbdt
from .linear import LinearModel, LinearParams, LinearRegressor, fit_linear

MODEL_KINDS = {
    "gbdt": (GbdtRegressor, GbdtParams),
    "rf": (ForestRegressor, ForestParams),
    "linear": (LinearRegressor, LinearParams),
    "arima": (ArimaForecaster, ArimaParams),
}


@dataclass(frozen=True)
class ModelSpec:
    """Model kind plus its parameter record."""

    kind: str = "gbdt"
    params: object = field(default_factory=GbdtParams)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {sorted(MODEL_KINDS)}")
        cls = MODEL_KINDS[self.kind][1]
        if isinstance(self.params, dict):
            object.__setattr__(self, "params", cls(**self.params))
        elif not isinstance(self.params, cls):
            raise TypeError(f"{self.kind} expects {cls.__name__}, got {type(self.params).__name__}")

    @property
    def weight_decay(self) -> float:
        return getattr(self.params, "weight_decay", 0.0)

    def build(self):
        return MODEL_KINDS[self.kind][0](self.params)

    def to_dict(self) -> dict:
        from dataclasses import asdict
        return {"kind": self.kind, "params": asdict(self.params)}


__all__ = [
    "ArimaForecaster", "ArimaModel", "ArimaParams", "Ensemble", "Forest", "ForestParams",
    "ForestRegressor", "GbdtParams", "GbdtRegressor", "LinearModel", "LinearParams",
    "LinearRegressor", "ModelSpec", "RegressionTree", "fit_arima", "fit_gbdt", "fit_linear",
    "fit_rf", "fit_tree", "forecast", "predict_gbdt", "sample_weights",
]
