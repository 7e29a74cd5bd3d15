"""Input checks shared by the estimators."""
from __future__ import annotations

import numpy as np


def check_forecast_cube(X, name: str = "forecasts") -> np.ndarray:
    """Return ``X`` as a float (H, n, m) array, rejecting non-finite entries by position."""
    X = np.array(X, dtype=float)
    if X.ndim != 3:
        raise ValueError(f"{name} must be 3-d (H, n, m), got shape {X.shape}")
    if X.shape[0] < 1:
        raise ValueError(f"{name} must cover at least one horizon")
    bad = np.argwhere(~np.isfinite(X))
    if bad.size:
        h, i, j = bad[0]
        raise ValueError(f"non-finite {name} value at horizon {h + 1}, node index {i}, variable index {j}")
    return X


def check_panel_array(Y, min_length: int = 1, name: str = "panel") -> np.ndarray:
    """Return ``Y`` as a finite float (T, n, m) array with at least ``min_length`` rows."""
    Y = np.array(Y, dtype=float)
    if Y.ndim == 2:
        Y = Y[:, :, None]
    if Y.ndim != 3:
        raise ValueError(f"{name} must be (T, n, m), got shape {Y.shape}")
    if Y.shape[0] < min_length:
        raise ValueError(f"{name} has {Y.shape[0]} observations, need at least {min_length}")
    if not np.isfinite(Y).all():
        raise ValueError(f"{name} contains non-finite values")
    return Y


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
