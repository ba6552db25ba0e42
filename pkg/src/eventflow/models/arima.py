"""ARIMA(p, d, q) estimated by conditional sum of squares.

The series is differenced ``d`` times.  One-step residuals follow the
recursion ``e_t = z_t - c - sum(phi_i z_{t-i}) - sum(theta_j e_{t-j})`` for
``t >= p`` with pre-sample residuals set to zero, and the coefficients
minimise ``sum(e_t^2)``.  The minimiser is a derivative-free compass search
started from the least-squares AR fit and from a few perturbed points.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from ..errors import InsufficientHistory, NonStationaryEstimate
from .base import check_X


@dataclass(frozen=True)
class ArimaParams:
    p: int = 1
    d: int = 0
    q: int = 0
    include_intercept: bool | None = None  # default: only when d == 0
    restarts: int = 3
    tol: float = 1e-7
    max_sweeps: int = 2000
    random_seed: int = 0

    def __post_init__(self):
        if min(self.p, self.d, self.q) < 0:
            raise ValueError("ARIMA orders must be non-negative")

    @property
    def intercept(self) -> bool:
        return self.d == 0 if self.include_intercept is None else self.include_intercept


@dataclass(frozen=True)
class ArimaModel:
    order: tuple[int, int, int]
    ar: np.ndarray
    ma: np.ndarray
    intercept: float
    sigma2: float
    tail: tuple[np.ndarray, ...]  # last values of each differencing level 0..d
    residuals: np.ndarray
    stationary: bool = True

    def forecast(self, h: int) -> np.ndarray:
        return forecast(self, h)


def difference(series: np.ndarray, d: int) -> list[np.ndarray]:
    """``[x, diff(x), diff(diff(x)), ...]`` up to order ``d``."""
    levels = [np.asarray(series, dtype=float)]
    for _ in range(d):
        levels.append(np.diff(levels[-1]))
    return levels


def css_residuals(z: np.ndarray, c: float, ar: np.ndarray, ma: np.ndarray) -> np.ndarray:
    p = len(ar)
    u = z[p:] - c
    for i in range(1, p + 1):
        u = u - ar[i - 1] * z[p - i:len(z) - i]
    if len(ma):
        return lfilter([1.0], np.r_[1.0, ma], u)
    return u


def _css(theta: np.ndarray, z: np.ndarray, p: int, q: int, with_c: bool) -> float:
    c = theta[0] if with_c else 0.0
    off = int(with_c)
    e = css_residuals(z, c, theta[off:off + p], theta[off + p:off + p + q])
    val = float(e @ e)
    return val if np.isfinite(val) else np.inf


def _ols_ar(z: np.ndarray, p: int, with_c: bool) -> np.ndarray:
    cols = [z[p - i:len(z) - i] for i in range(1, p + 1)]
    if with_c:
        cols.insert(0, np.ones(len(z) - p))
    if not cols:
        return np.zeros(0)
    A = np.column_stack(cols)
    beta, *_ = np.linalg.lstsq(A, z[p:], rcond=None)
    return beta


def compass_search(f, x0: np.ndarray, step: float = 0.1, tol: float = 1e-7, max_sweeps: int = 2000):
    """Coordinate-wise pattern search: try +/- step on each coordinate, halve the step when stuck."""
    x = np.array(x0, dtype=float)
    fx = f(x)
    sweeps = 0
    while step > tol and sweeps < max_sweeps:
        sweeps += 1
        improved = False
        for j in range(len(x)):
            for sign in (1.0, -1.0):
                cand = x.copy()
                cand[j] += sign * step * max(1.0, abs(x[j]))
                fc = f(cand)
                if fc < fx:
                    x, fx, improved = cand, fc, True
                    break
        if not improved:
            step *= 0.5
    return x, fx


def ar_is_stationary(ar: np.ndarray) -> bool:
    if len(ar) == 0:
        return True
    # roots of 1 - phi_1 z - ... - phi_p z^p must lie outside the unit circle
    roots = np.roots(np.r_[-ar[::-1], 1.0])
    return bool(np.all(np.abs(roots) > 1.0))


def fit_arima(series, p: int = 1, d: int = 0, q: int = 0, params: ArimaParams | None = None) -> ArimaModel:
    params = params or ArimaParams(p, d, q)
    p, d, q = params.p, params.d, params.q
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or not np.all(np.isfinite(x)):
        raise ValueError("series must be a finite 1-D array")
    if len(x) <= p + q + d + 10:
        raise InsufficientHistory(f"ARIMA({p},{d},{q}) needs more than {p + q + d + 10} observations")
    levels = difference(x, d)
    z = levels[-1]
    with_c = params.intercept
    n_par = int(with_c) + p + q
    if n_par:
        start = np.r_[_ols_ar(z, p, with_c), np.zeros(q)]
        rng = np.random.default_rng(params.random_seed)
        starts = [start] + [start + rng.normal(0, 0.2, n_par) * np.r_[np.zeros(int(with_c)), np.ones(p + q)]
                            for _ in range(params.restarts)]
        best_x, best_f = start, np.inf
        for s in starts:
            xs, fs = compass_search(lambda t: _css(t, z, p, q, with_c), s, tol=params.tol,
                                    max_sweeps=params.max_sweeps)
            if fs < best_f:
                best_x, best_f = xs, fs
    else:
        best_x = np.zeros(0)
    c = float(best_x[0]) if with_c else 0.0
    off = int(with_c)
    ar, ma = best_x[off:off + p].copy(), best_x[off + p:off + p + q].copy()
    resid = css_residuals(z, c, ar, ma)
    stationary = ar_is_stationary(ar)
    if not stationary:
        warnings.warn(f"AR({p}) estimate {ar} has roots inside the unit circle", NonStationaryEstimate,
                      stacklevel=2)
    keep = max(p, q, 1)
    tail = tuple(lv[-keep:].copy() for lv in levels)
    return ArimaModel((p, d, q), ar, ma, c, float(resid @ resid / max(len(resid), 1)), tail,
                      resid, stationary)


def forecast(model: ArimaModel, h: int) -> np.ndarray:
    """``h``-step level forecasts; future shocks are zero."""
    if h < 1:
        raise ValueError("h must be >= 1")
    p, d, q = model.order
    z_hist = list(model.tail[-1][-p:]) if p else []
    e_hist = list(model.residuals[-q:]) if q else []
    zf = []
    for _ in range(h):
        val = model.intercept
        for i in range(1, p + 1):
            val += model.ar[i - 1] * z_hist[-i]
        for j in range(1, q + 1):
            val += model.ma[j - 1] * e_hist[-j] if j <= len(e_hist) else 0.0
        zf.append(val)
        z_hist.append(val)
        e_hist.append(0.0)
    out = np.array(zf)
    for level in range(d - 1, -1, -1):
        out = model.tail[level][-1] + np.cumsum(out)
    return out


class ArimaForecaster:
    """Univariate wrapper with the shared fit/predict contract.

    ``X`` is ignored except for its row count, which sets the forecast
    horizon; sample weights are ignored because the CSS objective is
    unweighted.
    """

    kind = "arima"

    def __init__(self, params: ArimaParams | None = None, **kwargs):
        self.params = params or ArimaParams(**kwargs)
        self.model_: ArimaModel | None = None

    def fit(self, X, y, sample_weight=None, feature_names=None) -> "ArimaForecaster":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonStationaryEstimate)
            self.model_ = fit_arima(y, params=self.params)
        return self

    def predict(self, X) -> np.ndarray:
        if self.model_ is None:
            raise RuntimeError("model is not fitted")
        return forecast(self.model_, len(check_X(X)))
