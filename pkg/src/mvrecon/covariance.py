"""Estimators of the one-step base-forecast-error covariance ``W``.

All estimators centre the residual columns first. ``W_1`` uses the 1/R
(maximum-likelihood) denominator; the correlation-variance estimate inside the
shrinkage intensity uses unbiased standard deviations. Any positive rescaling
of ``W`` leaves the reconciled forecasts unchanged, so ``k_h`` is always 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

__all__ = [
    "InsufficientDataError",
    "CovarianceError",
    "ResidualPanel",
    "CovarianceEstimate",
    "sample_covariance",
    "shrinkage_covariance",
    "variance_of_correlations",
    "diagonal_covariance",
    "identity_covariance",
    "estimate_covariance",
    "KINDS",
]

KINDS = ("sample", "shrinkage", "identity", "diagonal")
Kind = Literal["sample", "shrinkage", "identity", "diagonal"]


class InsufficientDataError(ValueError):
    pass


class CovarianceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ResidualPanel:
    """In-sample one-step residuals, one vec-ordered row per time point.

    Rows containing any non-finite entry are dropped on construction.
    """

    residuals: np.ndarray
    labels: tuple[str, ...] = ()
    n_dropped: int = field(default=0, init=False)

    def __post_init__(self):
        r = np.array(self.residuals, dtype=float, ndmin=2)
        if r.ndim != 2:
            raise ValueError(f"residuals must be 2-d (rows, n*m), got shape {r.shape}")
        keep = np.isfinite(r).all(axis=1)
        r = r[keep]
        r.setflags(write=False)
        object.__setattr__(self, "residuals", r)
        object.__setattr__(self, "n_dropped", int((~keep).sum()))
        labels = tuple(self.labels) or tuple(f"c{i}" for i in range(r.shape[1]))
        if len(labels) != r.shape[1]:
            raise ValueError(f"{len(labels)} labels for {r.shape[1]} residual columns")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_cube(cls, res: np.ndarray, nodes: Sequence[str] = (), variables: Sequence[str] = ()) -> "ResidualPanel":
        """From residuals shaped (R, n, m); columns come out variable-major."""
        res = np.asarray(res, dtype=float)
        R, n, m = res.shape
        nodes = list(nodes) or [f"n{i}" for i in range(n)]
        variables = list(variables) or [f"v{j + 1}" for j in range(m)]
        labels = tuple(f"{node}:{var}" for var in variables for node in nodes)
        return cls(np.swapaxes(res, 1, 2).reshape(R, m * n), labels)

    @property
    def n_rows(self) -> int:
        return self.residuals.shape[0]

    @property
    def n_cols(self) -> int:
        return self.residuals.shape[1]

    def select(self, cols: Sequence[int]) -> "ResidualPanel":
        cols = list(cols)
        return ResidualPanel(self.residuals[:, cols], tuple(self.labels[c] for c in cols))


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    W: np.ndarray
    kind: Kind
    lambda_D: float | None = None
    k_h: float = 1.0
    rank_deficient_possible: bool = False

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise CovarianceError(f"W must be square, got shape {W.shape}")
        scale = max(1.0, float(np.abs(W).max(initial=0.0)))
        if np.abs(W - W.T).max(initial=0.0) > 1e-12 * scale:
            raise CovarianceError("W is not symmetric")
        if self.lambda_D is not None and not 0.0 <= self.lambda_D <= 1.0:
            raise CovarianceError(f"shrinkage intensity {self.lambda_D} outside [0, 1]")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)

    @property
    def size(self) -> int:
        return self.W.shape[0]


def _centered(r: ResidualPanel, min_rows: int) -> np.ndarray:
    if r.n_rows < min_rows:
        raise InsufficientDataError(
            f"need at least {min_rows} residual rows, got {r.n_rows}"
        )
    X = r.residuals
    return X - X.mean(axis=0)


def _sample_W(X: np.ndarray) -> np.ndarray:
    W = X.T @ X / X.shape[0]
    return (W + W.T) / 2


def sample_covariance(r: ResidualPanel) -> CovarianceEstimate:
    """Centred sample covariance with the 1/R denominator."""
    X = _centered(r, 2)
    return CovarianceEstimate(
        _sample_W(X), "sample", rank_deficient_possible=r.n_rows < r.n_cols
    )


def variance_of_correlations(r: ResidualPanel) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(var_r, r)``: estimated variances of the sample correlations and the correlations.

    With ``z`` the columns standardised by their unbiased standard deviation
    and ``w_ij,t = z_i,t * z_j,t``::

        var_r[i, j] = R / (R - 1)**3 * sum_t (w_ij,t - mean_t w_ij)**2
    """
    X = _centered(r, 3)
    R = X.shape[0]
    sd = X.std(axis=0, ddof=1)
    zero = np.flatnonzero(sd == 0)
    if zero.size:
        names = ", ".join(r.labels[i] for i in zero)
        raise CovarianceError(f"zero-variance residual column(s): {names}; correlation undefined")
    Z = X / sd
    w = Z[:, :, None] * Z[:, None, :]
    dev = w - w.mean(axis=0)
    var_r = R / (R - 1) ** 3 * np.einsum("tij,tij->ij", dev, dev)
    corr = Z.T @ Z / (R - 1)
    corr = (corr + corr.T) / 2
    np.fill_diagonal(corr, 1.0)
    return var_r, corr


def shrinkage_covariance(r: ResidualPanel, lambda_D: float | None = None) -> CovarianceEstimate:
    """Shrink the sample covariance towards its diagonal.

    The intensity is ``sum_{i!=j} var(r_ij) / sum_{i!=j} r_ij**2`` clipped to
    [0, 1], unless ``lambda_D`` is given explicitly.
    """
    if r.n_rows < 3:
        raise InsufficientDataError(
            f"shrinkage estimator needs at least 3 residual rows, got {r.n_rows}"
        )
    var_r, corr = variance_of_correlations(r)
    if lambda_D is None:
        off = ~np.eye(r.n_cols, dtype=bool)
        denom = float((corr[off] ** 2).sum())
        num = float(var_r[off].sum())
        lam = 1.0 if denom == 0.0 else num / denom
        lambda_D = min(max(lam, 0.0), 1.0)
    elif not 0.0 <= lambda_D <= 1.0:
        raise ValueError(f"lambda_D must lie in [0, 1], got {lambda_D}")

    S = _sample_W(r.residuals - r.residuals.mean(axis=0))
    W = (1.0 - lambda_D) * S
    np.fill_diagonal(W, np.diag(S))
    return CovarianceEstimate(W, "shrinkage", lambda_D=float(lambda_D))


def diagonal_covariance(r: ResidualPanel) -> CovarianceEstimate:
    X = _centered(r, 2)
    return CovarianceEstimate(np.diag((X**2).mean(axis=0)), "diagonal")


def identity_covariance(size: int) -> CovarianceEstimate:
    return CovarianceEstimate(np.eye(size), "identity")


def estimate_covariance(r: ResidualPanel, kind: Kind) -> CovarianceEstimate:
    if kind == "sample":
        return sample_covariance(r)
    if kind == "shrinkage":
        return shrinkage_covariance(r)
    if kind == "identity":
        return identity_covariance(r.n_cols)
    if kind == "diagonal":
        return diagonal_covariance(r)
    raise ValueError(f"unknown covariance kind {kind!r}; expected one of {KINDS}")
