"""Accuracy metrics, error cubes and rolling-origin evaluation.

Undefined values (empty cells, zero denominators) are carried as NaN in
arrays and written as empty fields by :mod:`mvrecon.io`.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .baseforecast import ForecasterSpec, fit_forecast
from .covariance import ResidualPanel, estimate_covariance
from .hierarchy import Hierarchy, MultiPanel
from .reconcile import reconcile

__all__ = [
    "ErrorCube",
    "MetricTable",
    "RMSSEResult",
    "Summary",
    "rmse",
    "rel_rmse",
    "rmsse",
    "summarize",
    "best_method_flags",
    "method_label",
    "evaluate_split",
    "rolling_origin_cv",
    "default_origins",
]


def method_label(kind: str, estimator: str | None = None) -> str:
    """``base``, ``multivariate:<estimator>`` or ``univariate:<estimator>``."""
    return kind if estimator is None else f"{kind}:{estimator}"


@dataclass(eq=False)
class ErrorCube:
    """Squared errors per method, each of shape (K, n, m, H); NaN marks a missing cell.

    ``index`` names the K slices (replicate numbers or forecast origins).
    """

    sq_errors: dict[str, np.ndarray]
    index: tuple[int, ...] = ()
    nodes: tuple[str, ...] = ()
    variables: tuple[str, ...] = ()

    def __post_init__(self):
        shapes = {k: np.shape(v) for k, v in self.sq_errors.items()}
        if len(set(shapes.values())) > 1:
            raise ValueError(f"misaligned error arrays: {shapes}")
        for k, v in self.sq_errors.items():
            v = np.asarray(v, dtype=float)
            if v.ndim != 4:
                raise ValueError(f"errors for {k!r} must be 4-d (K, n, m, H)")
            if (v[~np.isnan(v)] < 0).any():
                raise ValueError(f"negative squared error for {k!r}")
            self.sq_errors[k] = v
        if self.sq_errors and not self.index:
            self.index = tuple(range(self.shape[0]))

    @property
    def methods(self) -> list[str]:
        return list(self.sq_errors)

    @property
    def shape(self) -> tuple[int, ...]:
        return next(iter(self.sq_errors.values())).shape

    def counts(self, method: str) -> np.ndarray:
        return (~np.isnan(self.sq_errors[method])).sum(axis=0)


def rmse(cube: ErrorCube, method: str) -> np.ndarray:
    """Root mean squared error over the first axis; (n, m, H), NaN where no data."""
    e = cube.sq_errors[method]
    count = cube.counts(method)
    total = np.nansum(e, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.sqrt(total / count)
    out[count == 0] = np.nan
    return out


@dataclass(eq=False)
class MetricTable:
    """Per-series metric values of shape (n, m, H)."""

    values: np.ndarray
    kind: str
    nodes: tuple[str, ...] = ()
    variables: tuple[str, ...] = ()
    aggregation: str = "per-series"


def _skill(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.full(np.broadcast(num, den).shape, np.nan)
    pos = den > 0
    out[pos] = 1.0 - num[pos] / den[pos]
    # two exactly-perfect methods tie
    out[(den == 0) & (num == 0)] = 0.0
    return out


def rel_rmse(cube: ErrorCube, numerator: str, denominator: str, kind: str | None = None) -> MetricTable:
    """Skill score ``1 - RMSE_num / RMSE_den`` per (node, variable, h).

    Negative values mean the denominator method was more accurate. A zero
    denominator gives NaN, except that 0/0 is scored 0.
    """
    for meth in (numerator, denominator):
        if meth not in cube.sq_errors:
            raise KeyError(f"method {meth!r} not in error cube (have {cube.methods})")
    vals = _skill(rmse(cube, numerator), rmse(cube, denominator))
    return MetricTable(vals, kind or f"relrmse[{numerator}|{denominator}]", cube.nodes, cube.variables)


@dataclass(eq=False)
class RMSSEResult:
    per_h: np.ndarray          # (H,)
    q2: np.ndarray             # (H, n, m)
    undefined: list[str] = field(default_factory=list)


def rmsse(forecast_errors: np.ndarray, train, period: int, names: tuple[Sequence[str], Sequence[str]] | None = None) -> RMSSEResult:
    """Seasonal RMSSE.

    ``forecast_errors`` is (H, n, m) of ``y_{T+h} - forecast``; ``train`` is
    the (T, n, m) training panel used for the seasonal-naive scale
    ``mean_{t>p} (y_t - y_{t-p})**2``. Series with a zero scale are undefined
    (NaN) and listed in ``undefined``; any undefined series makes every
    ``per_h`` entry NaN.
    """
    if isinstance(train, MultiPanel):
        names = names or (train.node_order, train.var_order)
        train = train.data
    train = np.asarray(train, dtype=float)
    err = np.asarray(forecast_errors, dtype=float)
    T = train.shape[0]
    if T <= period:
        raise ValueError(f"training length {T} must exceed the period {period}")
    scale = ((train[period:] - train[:-period]) ** 2).mean(axis=0)
    undefined = []
    for i, j in np.argwhere(scale == 0):
        undefined.append(f"{names[0][i]}:{names[1][j]}" if names else f"(node {i}, variable {j})")
    with np.errstate(divide="ignore", invalid="ignore"):
        q2 = np.where(scale > 0, err**2 / np.where(scale > 0, scale, 1.0), np.nan)
    per_h = np.sqrt(q2.mean(axis=(1, 2)))
    if undefined:
        warnings.warn(f"RMSSE undefined for constant seasonal series: {', '.join(undefined)}")
    return RMSSEResult(per_h, q2, undefined)


@dataclass(eq=False)
class Summary:
    mean_per_h: np.ndarray      # (H,) mean over all n*m series
    pct_nonneg: float           # share of defined cells >= 0, in percent
    negative: np.ndarray        # (n, m, H) boolean flags
    n_defined: int


def summarize(table: MetricTable) -> Summary:
    v = table.values
    defined = ~np.isnan(v)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean_h = np.nanmean(v.reshape(-1, v.shape[-1]), axis=0)
    n_def = int(defined.sum())
    pct = 100.0 * float((v[defined] >= 0).sum()) / n_def if n_def else float("nan")
    return Summary(mean_h, pct, defined & (np.nan_to_num(v, nan=0.0) < 0), n_def)


def best_method_flags(per_h: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Flag, per horizon, the method(s) with the lowest value (ties all flagged)."""
    labels = list(per_h)
    stack = np.vstack([np.asarray(per_h[k], dtype=float) for k in labels])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        best = np.nanmin(stack, axis=0)
    return {k: stack[i] == best for i, k in enumerate(labels)}


def _univariate_reconcile(yhat: np.ndarray, res: ResidualPanel, h: Hierarchy, estimator: str, method: str) -> np.ndarray:
    n, m = h.n, yhat.shape[2]
    out = np.empty_like(yhat)
    for j in range(m):
        cov = estimate_covariance(res.select(range(j * n, (j + 1) * n)), estimator)
        out[:, :, j:j + 1] = reconcile(yhat[:, :, j:j + 1], cov, h, 1, method).ytilde
    return out


def evaluate_split(
    train: np.ndarray,
    test: np.ndarray,
    h: Hierarchy,
    forecasters: Sequence[ForecasterSpec],
    estimators: Sequence[str],
    method: str = "proj-m",
    period: int | None = None,
) -> dict[str, dict[str, tuple[np.ndarray, np.ndarray | None]]]:
    """Forecast, reconcile and score one train/test split.

    Returns ``{forecaster: {method_label: (sq_errors (n, m, H), rmsse_per_h or None)}}``.
    Univariate reconciliation estimates one covariance per variable from that
    variable's residual columns.
    """
    H = test.shape[0]
    out: dict[str, dict[str, tuple[np.ndarray, np.ndarray | None]]] = {}
    for spec in forecasters:
        base = fit_forecast(spec, train, H)
        preds = {method_label("base"): base.yhat}
        for est in estimators:
            cov = estimate_covariance(base.residuals, est)
            m = train.shape[2]
            preds[method_label("multivariate", est)] = reconcile(base.yhat, cov, h, m, method).ytilde
            preds[method_label("univariate", est)] = _univariate_reconcile(base.yhat, base.residuals, h, est, method)
        scored = {}
        for label, pred in preds.items():
            err = test - pred
            scale = rmsse(err, train, period).per_h if period else None
            scored[label] = (np.moveaxis(err**2, 0, -1), scale)
        out[spec.label] = scored
    return out


def default_origins(T: int, H: int, K: int) -> list[int]:
    """The last K training lengths whose H-step test window still fits in T observations."""
    return list(range(T - H - K + 1, T - H + 1))


def rolling_origin_cv(
    panel: MultiPanel,
    spec: ForecasterSpec,
    estimators: Sequence[str],
    origins: Iterable[int],
    H: int,
    hierarchy: Hierarchy,
    method: str = "proj-m",
) -> ErrorCube:
    """Expanding-window evaluation; an origin is the number of training observations.

    Origins that leave fewer than H test points, or that the forecaster cannot
    fit, are skipped with a warning.
    """
    slices: list[dict[str, np.ndarray]] = []
    kept: list[int] = []
    for t in origins:
        t = int(t)
        if t < 1 or t + H > panel.T:
            warnings.warn(f"origin {t} infeasible for panel length {panel.T} and H={H}; skipped")
            continue
        try:
            res = evaluate_split(panel.data[:t], panel.data[t:t + H], hierarchy, [spec], estimators, method)
        except ValueError as exc:
            warnings.warn(f"origin {t} skipped: {exc}")
            continue
        slices.append({k: v[0] for k, v in res[spec.label].items()})
        kept.append(t)
    if not slices:
        raise ValueError("no feasible forecast origins")
    cube = {k: np.stack([s[k] for s in slices]) for k in slices[0]}
    return ErrorCube(cube, tuple(kept), panel.node_order, panel.var_order)
