"""Minimum-trace reconciliation of multivariate hierarchical base forecasts.

Three algebraically equivalent operators are provided; all work on the
vec-ordered stack of a forecast slice (see :mod:`mvrecon.hierarchy`):

``direct``   ``S* (S*' W^-1 S*)^-1 S*' W^-1``
``proj-j``   ``S* (J* - J* W C*' (C* W C*')^-1 C*)``
``proj-m``   ``I - W C*' (C* W C*')^-1 C*``

Every solve goes through a Cholesky factorisation; no inverse is formed.
``proj-m`` is the default since it only factorises the (n_a m) square system.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.linalg import LinAlgError, block_diag, cho_factor, cho_solve
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .covariance import CovarianceEstimate, ResidualPanel, estimate_covariance
from .hierarchy import Hierarchy, kron_extend, unvec, vec, coherence_violation
from ._validation import check_forecast_cube

__all__ = [
    "ReconciliationError",
    "BaseForecastSet",
    "ReconciledForecastSet",
    "reconcile",
    "reconcile_direct",
    "reconcile_projection_J",
    "reconcile_projection_M",
    "reconcile_univariate",
    "MinTReconciler",
    "METHODS",
]

METHODS = ("direct", "proj-j", "proj-m", "univariate")
Method = Literal["direct", "proj-j", "proj-m", "univariate"]

# condition-number ceiling for C* W C*'
MAX_CONDITION = 1e12


class ReconciliationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BaseForecastSet:
    """``yhat`` has shape (H, n, m); ``residuals`` are the in-sample one-step errors."""

    yhat: np.ndarray
    residuals: ResidualPanel
    origin: int = 0

    def __post_init__(self):
        yhat = check_forecast_cube(self.yhat)
        yhat.setflags(write=False)
        object.__setattr__(self, "yhat", yhat)
        n, m = yhat.shape[1:]
        if self.residuals.n_cols != n * m:
            raise ValueError(
                f"residual panel has {self.residuals.n_cols} columns, forecasts need {n * m}"
            )

    @property
    def H(self) -> int:
        return self.yhat.shape[0]


@dataclass(frozen=True, eq=False)
class ReconciledForecastSet:
    ytilde: np.ndarray
    method: str
    w_kind: str
    max_violation: float = 0.0


def _as_cube(yhat) -> np.ndarray:
    if isinstance(yhat, BaseForecastSet):
        return yhat.yhat
    return check_forecast_cube(yhat)


def _as_W(W) -> tuple[np.ndarray, str]:
    if isinstance(W, CovarianceEstimate):
        return W.W, W.kind
    W = np.asarray(W, dtype=float)
    return W, "custom"


def _check_shapes(Y: np.ndarray, W: np.ndarray, h: Hierarchy, m: int) -> None:
    if Y.shape[1:] != (h.n, m):
        raise ReconciliationError(f"forecast shape {Y.shape} does not match (H, {h.n}, {m})")
    if W.shape != (h.n * m, h.n * m):
        raise ReconciliationError(f"W has shape {W.shape}, expected {(h.n * m,) * 2}")


def _chol(M: np.ndarray, what: str, hint: str):
    try:
        return cho_factor(M, lower=True, check_finite=True)
    except LinAlgError as exc:
        raise ReconciliationError(f"{what} is not positive definite; {hint}") from exc


def _finish(Y: np.ndarray, flat: np.ndarray, h: Hierarchy, method: str, kind: str) -> ReconciledForecastSet:
    ytilde = unvec(flat, h.n)
    viol = coherence_violation(h, ytilde)
    worst = float(viol.max(initial=0.0))
    if worst > 1e-8 * (1.0 + float(np.abs(ytilde).max(initial=0.0))):
        raise ReconciliationError(f"reconciled forecasts incoherent (violation {worst:.3g}); W badly conditioned")
    return ReconciledForecastSet(ytilde, method, kind, worst)


def _factor_CWC(W: np.ndarray, C: np.ndarray):
    WCt = W @ C.T
    K = C @ WCt
    K = (K + K.T) / 2
    factor = _chol(K, "C* W C*'", "check that W is positive definite on the constraint space")
    if np.linalg.cond(K) > MAX_CONDITION:
        raise ReconciliationError("C* W C*' is numerically singular (condition number > 1e12)")
    return WCt, factor


def reconcile_direct(yhat, W, h: Hierarchy, m: int) -> ReconciledForecastSet:
    """GLS form: needs ``W`` itself to be positive definite."""
    Y = _as_cube(yhat)
    Wm, kind = _as_W(W)
    _check_shapes(Y, Wm, h, m)
    S, _, _ = kron_extend(h, m)
    S = S.astype(float)
    Wf = _chol(Wm, "W", "use the shrinkage estimator or a projection method")
    WinvS = cho_solve(Wf, S)
    G = S.T @ WinvS
    Gf = _chol((G + G.T) / 2, "S*' W^-1 S*", "W is ill-conditioned")
    b = cho_solve(Gf, WinvS.T @ vec(Y).T)
    return _finish(Y, (S @ b).T, h, "direct", kind)


def reconcile_projection_J(yhat, W, h: Hierarchy, m: int) -> ReconciledForecastSet:
    """Bottom-level projection form; only ``C* W C*'`` is factorised."""
    Y = _as_cube(yhat)
    Wm, kind = _as_W(W)
    _check_shapes(Y, Wm, h, m)
    S, C, J = (x.astype(float) for x in kron_extend(h, m))
    WCt, factor = _factor_CWC(Wm, C)
    y = vec(Y).T
    b = J @ y - J @ WCt @ cho_solve(factor, C @ y)
    return _finish(Y, (S @ b).T, h, "proj-j", kind)


def reconcile_projection_M(yhat, W, h: Hierarchy, m: int) -> ReconciledForecastSet:
    """Zero-constrained form ``y - W C*' (C* W C*')^-1 C* y``."""
    Y = _as_cube(yhat)
    Wm, kind = _as_W(W)
    _check_shapes(Y, Wm, h, m)
    _, C, _ = kron_extend(h, m)
    C = C.astype(float)
    WCt, factor = _factor_CWC(Wm, C)
    y = vec(Y).T
    flat = y - WCt @ cho_solve(factor, C @ y)
    return _finish(Y, flat.T, h, "proj-m", kind)


def reconcile_univariate(yhat_j, W_j, h: Hierarchy) -> np.ndarray:
    """Reconcile one variable: ``yhat_j`` is (H, n) or (n,), ``W_j`` is n x n.

    Uses the GLS form with ``m = 1``.
    """
    yj = np.asarray(yhat_j, dtype=float)
    squeeze = yj.ndim == 1
    Y = np.atleast_2d(yj)[:, :, None]
    out = reconcile_direct(Y, W_j, h, 1).ytilde[:, :, 0]
    return out[0] if squeeze else out


def _blocks(W: np.ndarray, n: int, m: int):
    return [W[j * n:(j + 1) * n, j * n:(j + 1) * n] for j in range(m)]


_DISPATCH = {
    "direct": reconcile_direct,
    "proj-j": reconcile_projection_J,
    "proj-m": reconcile_projection_M,
}


def reconcile(yhat, W, h: Hierarchy, m: int, method: Method = "proj-m") -> ReconciledForecastSet:
    """Reconcile with the chosen operator.

    ``method="univariate"`` ignores all cross-variable entries of ``W`` and
    reconciles each variable on its own diagonal block.
    """
    if method == "univariate":
        Y = _as_cube(yhat)
        Wm, kind = _as_W(W)
        _check_shapes(Y, Wm, h, m)
        out = np.stack(
            [reconcile_univariate(Y[:, :, j], Wj, h) for j, Wj in enumerate(_blocks(Wm, h.n, m))],
            axis=2,
        )
        return _finish(Y, vec(out), h, "univariate", kind)
    try:
        fn = _DISPATCH[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}") from None
    return fn(yhat, W, h, m)


class MinTReconciler(BaseEstimator, TransformerMixin):
    """Estimate ``W`` from residuals in ``fit`` and reconcile base forecasts in ``transform``.

    Parameters
    ----------
    hierarchy : Hierarchy
    n_variables : int
    estimator : {"shrinkage", "sample", "identity", "diagonal"}
    method : {"proj-m", "proj-j", "direct", "univariate"}
        ``"univariate"`` estimates one covariance per variable from that
        variable's residual columns only.

    Attributes
    ----------
    covariance_ : CovarianceEstimate or list of CovarianceEstimate
    """

    def __init__(self, hierarchy=None, n_variables=1, estimator="shrinkage", method="proj-m"):
        self.hierarchy = hierarchy
        self.n_variables = n_variables
        self.estimator = estimator
        self.method = method

    def fit(self, X, y=None):
        """``X``: a ResidualPanel or an array of vec-ordered residual rows (R, n*m)."""
        if self.hierarchy is None:
            raise ValueError("MinTReconciler needs a hierarchy")
        panel = X if isinstance(X, ResidualPanel) else ResidualPanel(X)
        n, m = self.hierarchy.n, self.n_variables
        if panel.n_cols != n * m:
            raise ValueError(f"residuals have {panel.n_cols} columns, expected {n * m}")
        if self.method == "univariate":
            self.covariance_ = [
                estimate_covariance(panel.select(range(j * n, (j + 1) * n)), self.estimator)
                for j in range(m)
            ]
        else:
            self.covariance_ = estimate_covariance(panel, self.estimator)
        return self

    def _full_W(self) -> np.ndarray:
        if isinstance(self.covariance_, list):
            return block_diag(*(c.W for c in self.covariance_))
        return self.covariance_.W

    def transform(self, X):
        """``X``: base forecasts of shape (H, n, m). Returns reconciled array of the same shape."""
        check_is_fitted(self, "covariance_")
        kind = self.covariance_[0].kind if isinstance(self.covariance_, list) else self.covariance_.kind
        W = CovarianceEstimate(self._full_W(), kind)
        return reconcile(X, W, self.hierarchy, self.n_variables, self.method).ytilde
