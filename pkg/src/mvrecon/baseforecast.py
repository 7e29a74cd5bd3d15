"""Deterministic least-squares base forecasters and external-forecast import.

Each forecaster follows the scikit-learn estimator protocol: ``fit`` takes a
panel of shape (T, n, m) and ``predict(H)`` returns (H, n, m). After fitting,
``residuals_`` holds the in-sample one-step errors starting at ``warmup_``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_forecast_cube, check_panel_array, check_positive_int
from .covariance import ResidualPanel
from .hierarchy import MultiPanel
from .reconcile import BaseForecastSet

__all__ = [
    "FitError",
    "SeasonalMeanForecaster",
    "ARXForecaster",
    "VAR1Forecaster",
    "ForecasterSpec",
    "ExternalForecastBundle",
    "fit_forecast",
    "import_external",
    "FORECASTER_KINDS",
]

FORECASTER_KINDS = ("seasonal-mean", "arx", "var1")


class FitError(ValueError):
    pass


def _season_dummies(idx: np.ndarray, period: int) -> np.ndarray:
    """Columns for seasons 1..period-1 (season 0 is the baseline)."""
    return (idx[:, None] % period == np.arange(1, period)[None, :]).astype(float)


def _series_name(names, i, j):
    if names is None:
        return f"(node {i}, variable {j})"
    nodes, variables = names
    return f"{nodes[i]}:{variables[j]}"


class _PanelForecaster(BaseEstimator):
    def _prepare(self, X, min_length):
        if isinstance(X, MultiPanel):
            self.series_names_ = (X.node_order, X.var_order)
            X = X.data
        else:
            self.series_names_ = None
        try:
            return check_panel_array(X, min_length, name="training panel")
        except ValueError as exc:
            raise FitError(str(exc)) from None

    def residual_panel(self) -> ResidualPanel:
        check_is_fitted(self, "residuals_")
        nodes, variables = self.series_names_ or ((), ())
        return ResidualPanel.from_cube(self.residuals_, nodes, variables)


class SeasonalMeanForecaster(_PanelForecaster):
    """Forecast each season by its in-sample mean."""

    def __init__(self, period=4):
        self.period = period

    def fit(self, X, y=None):
        p = check_positive_int(self.period, "period", 1)
        Y = self._prepare(X, 2 * p)
        T = Y.shape[0]
        season = np.arange(T) % p
        self.means_ = np.stack([Y[season == s].mean(axis=0) for s in range(p)])
        self.fitted_ = self.means_[season]
        self.residuals_ = Y - self.fitted_
        self.warmup_ = 0
        self.n_obs_ = T
        return self

    def predict(self, H):
        check_is_fitted(self, "means_")
        idx = (self.n_obs_ + np.arange(check_positive_int(H, "H"))) % self.period
        return self.means_[idx].copy()


class ARXForecaster(_PanelForecaster):
    """Per-series OLS autoregression with intercept and optional seasonal dummies.

    ``y_t = c + sum_k phi_k y_{t-k} + sum_s delta_s D_s(t) + e_t``; forecasts
    are iterated. Every series (node, variable) is fitted independently.
    """

    def __init__(self, p_ar=1, seasonal=True, period=4):
        self.p_ar = p_ar
        self.seasonal = seasonal
        self.period = period

    def _n_regressors(self):
        return 1 + self.p_ar + (self.period - 1 if self.seasonal else 0)

    def fit(self, X, y=None):
        p_ar = check_positive_int(self.p_ar, "p_ar", 0)
        if self.seasonal:
            period = check_positive_int(self.period, "period", 2)
            min_len = max(2 * period, p_ar + period + 2)
        else:
            min_len = p_ar + 3
        Y = self._prepare(X, min_len)
        T, n, m = Y.shape
        k = self._n_regressors()
        if T - p_ar <= k:
            raise FitError(f"{T} observations are too few for {k} regressors")
        idx = np.arange(p_ar, T)
        det = [np.ones((T - p_ar, 1))]
        if self.seasonal:
            det.append(_season_dummies(idx, self.period))
        det = np.hstack(det)

        self.coef_ = np.empty((n, m, k))
        self.residuals_ = np.empty((T - p_ar, n, m))
        for i in range(n):
            for j in range(m):
                s = Y[:, i, j]
                lags = np.column_stack([s[p_ar - l:T - l] for l in range(1, p_ar + 1)]) if p_ar else np.empty((T - p_ar, 0))
                D = np.hstack([det[:, :1], lags, det[:, 1:]])
                beta, _, rank, _ = np.linalg.lstsq(D, s[p_ar:], rcond=None)
                if rank < k:
                    raise FitError(f"collinear regression design for series {_series_name(self.series_names_, i, j)}")
                self.coef_[i, j] = beta
                self.residuals_[:, i, j] = s[p_ar:] - D @ beta
        self.warmup_ = p_ar
        self.n_obs_ = T
        self._tail = Y[T - p_ar:] if p_ar else Y[:0]
        return self

    def predict(self, H):
        check_is_fitted(self, "coef_")
        H = check_positive_int(H, "H")
        p_ar = self.p_ar
        hist = list(self._tail)
        out = np.empty((H,) + self.coef_.shape[:2])
        for step in range(H):
            t = self.n_obs_ + step
            pred = self.coef_[:, :, 0].copy()
            for l in range(1, p_ar + 1):
                pred += self.coef_[:, :, l] * hist[-l]
            if self.seasonal and t % self.period:
                pred += self.coef_[:, :, p_ar + t % self.period]
            out[step] = pred
            hist.append(pred)
        return out


class VAR1Forecaster(_PanelForecaster):
    """Per-node VAR(1) across the m variables, fitted by multivariate least squares.

    ``y_t = c + Phi y_{t-1} + sum_s delta_s D_s(t) + e_t`` with ``y_t`` the
    m-vector of one node. ``coef_[i]`` is Phi for node ``i``.
    """

    def __init__(self, seasonal=True, period=4):
        self.seasonal = seasonal
        self.period = period

    def fit(self, X, y=None):
        if self.seasonal:
            period = check_positive_int(self.period, "period", 2)
            min_len = max(2 * period, period + 3)
        else:
            min_len = 3
        Y = self._prepare(X, min_len)
        T, n, m = Y.shape
        k = 1 + m + (self.period - 1 if self.seasonal else 0)
        if T - 1 <= k:
            raise FitError(f"{T} observations are too few for {k} regressors per equation")
        idx = np.arange(1, T)
        det = [np.ones((T - 1, 1))]
        if self.seasonal:
            det.append(_season_dummies(idx, self.period))
        det = np.hstack(det)

        self.intercept_ = np.empty((n, m))
        self.coef_ = np.empty((n, m, m))
        self.seasonal_coef_ = np.zeros((n, max(self.period - 1, 0) if self.seasonal else 0, m))
        self.residuals_ = np.empty((T - 1, n, m))
        for i in range(n):
            D = np.hstack([det[:, :1], Y[:-1, i, :], det[:, 1:]])
            B, _, rank, _ = np.linalg.lstsq(D, Y[1:, i, :], rcond=None)
            if rank < k:
                raise FitError(f"collinear VAR design for node {self._node(i)}")
            self.intercept_[i] = B[0]
            self.coef_[i] = B[1:1 + m].T
            self.seasonal_coef_[i] = B[1 + m:]
            self.residuals_[:, i, :] = Y[1:, i, :] - D @ B
            radius = np.abs(np.linalg.eigvals(self.coef_[i])).max()
            if radius >= 1:
                warnings.warn(f"VAR(1) for node {self._node(i)} is non-stationary (spectral radius {radius:.3f})")
        self.warmup_ = 1
        self.n_obs_ = T
        self._last = Y[-1].copy()
        return self

    def _node(self, i):
        return self.series_names_[0][i] if self.series_names_ else str(i)

    def predict(self, H):
        check_is_fitted(self, "coef_")
        H = check_positive_int(H, "H")
        prev = self._last
        out = np.empty((H,) + prev.shape)
        for step in range(H):
            t = self.n_obs_ + step
            pred = self.intercept_ + np.einsum("ijk,ik->ij", self.coef_, prev)
            if self.seasonal and t % self.period:
                pred = pred + self.seasonal_coef_[:, t % self.period - 1, :]
            out[step] = pred
            prev = pred
        return out


@dataclass(frozen=True)
class ForecasterSpec:
    kind: Literal["seasonal-mean", "arx", "var1"] = "arx"
    p_ar: int = 1
    seasonal: bool = True
    period: int = 4

    def __post_init__(self):
        if self.kind not in FORECASTER_KINDS:
            raise ValueError(f"unknown forecaster {self.kind!r}; expected one of {FORECASTER_KINDS}")
        if self.p_ar < 0:
            raise ValueError("p_ar must be >= 0")
        if (self.seasonal or self.kind == "seasonal-mean") and self.period < 2:
            raise ValueError("period must be >= 2 when seasonal terms are used")

    @property
    def label(self) -> str:
        return self.kind

    def build(self) -> _PanelForecaster:
        if self.kind == "seasonal-mean":
            return SeasonalMeanForecaster(period=self.period)
        if self.kind == "arx":
            return ARXForecaster(p_ar=self.p_ar, seasonal=self.seasonal, period=self.period)
        return VAR1Forecaster(seasonal=self.seasonal, period=self.period)


def fit_forecast(spec: ForecasterSpec, train: MultiPanel | np.ndarray, H: int) -> BaseForecastSet:
    """Fit ``spec`` on ``train`` and return H-step forecasts with one-step residuals."""
    model = spec.build().fit(train)
    return BaseForecastSet(model.predict(H), model.residual_panel(), origin=model.n_obs_)


@dataclass(frozen=True, eq=False)
class ExternalForecastBundle:
    yhat: np.ndarray
    residuals: ResidualPanel
    provenance: str = ""
    origin: int = 0


def import_external(bundle: ExternalForecastBundle) -> BaseForecastSet:
    """Validate externally produced forecasts; non-finite values are rejected by position."""
    yhat = check_forecast_cube(bundle.yhat, name="external forecast")
    return BaseForecastSet(yhat, bundle.residuals, origin=bundle.origin)
