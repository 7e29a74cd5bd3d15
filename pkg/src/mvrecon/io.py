"""CSV and manifest formats.

Panel CSV (long format)
    ``time,node,variable,value``; ``time`` is an integer index or an ISO
    month (``2004-01``). Every (time, node, variable) cell must be present.

Residual CSV (wide)
    one column per vec-ordered series, header ``node:variable``.

Forecast bundle
    ``manifest.json`` with keys ``forecasts``, ``residuals`` (paths relative
    to the manifest), optional ``provenance``. ``forecasts`` is
    ``origin,horizon,node,variable,value`` (one origin); ``residuals`` is
    ``time,node,variable,value``; residual time points with any missing cell
    are dropped.

Reconciled CSV
    ``origin,horizon,node,variable,base,reconciled``.

Undefined metric values are written as empty fields.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .baseforecast import ExternalForecastBundle
from .covariance import ResidualPanel
from .hierarchy import Hierarchy, MultiPanel

__all__ = [
    "DataError",
    "fmt",
    "read_panel_csv",
    "write_panel_csv",
    "read_residuals_csv",
    "write_residuals_csv",
    "read_bundle",
    "write_bundle",
    "write_reconciled_csv",
    "write_rows",
    "markdown_table",
]

PANEL_COLUMNS = ["time", "node", "variable", "value"]
FORECAST_COLUMNS = ["origin", "horizon", "node", "variable", "value"]
RECONCILED_COLUMNS = ["origin", "horizon", "node", "variable", "base", "reconciled"]


class DataError(ValueError):
    """Malformed or inconsistent input files."""


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer, str)):
        return str(x)
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def write_rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _read_long(path, columns: list[str]) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise DataError(f"{path}: missing column(s) {missing}; expected header {','.join(columns)}")
    return df


def _parse_times(values: pd.Series, path) -> tuple[list, str]:
    uniq = list(dict.fromkeys(values))
    try:
        return sorted(int(v) for v in uniq), "index"
    except ValueError:
        pass
    try:
        months = sorted(np.datetime64(v, "M") for v in uniq)
    except ValueError:
        raise DataError(f"{path}: time values must be integers or ISO months (YYYY-MM)") from None
    return months, "M"


def _check_nodes(found: Iterable[str], h: Hierarchy, path) -> None:
    found = set(found)
    expected = set(h.nodes)
    if found != expected:
        extra = sorted(found - expected)
        absent = sorted(expected - found)
        parts = []
        if extra:
            parts.append(f"not in hierarchy: {', '.join(extra)}")
        if absent:
            parts.append(f"missing from data: {', '.join(absent)}")
        raise DataError(f"{path}: node mismatch ({'; '.join(parts)})")


def _to_float(df: pd.DataFrame, path) -> np.ndarray:
    try:
        return df["value"].replace("", "nan").astype(float).to_numpy()
    except ValueError:
        raise DataError(f"{path}: non-numeric value") from None


def read_panel_csv(path: str | Path, h: Hierarchy) -> MultiPanel:
    df = _read_long(path, PANEL_COLUMNS)
    _check_nodes(df["node"], h, path)
    times, freq = _parse_times(df["time"], path)
    if freq == "M":
        key = df["time"].map(lambda v: np.datetime64(v, "M"))
        expected = np.arange(times[0], times[-1] + 1)
    else:
        key = df["time"].astype(int)
        expected = np.arange(times[0], times[-1] + 1)
    if len(times) != len(expected):
        gap = next(t for t in expected if t not in set(times))
        raise DataError(f"{path}: time index has a gap at {gap}")
    variables = list(dict.fromkeys(df["variable"]))
    dup = df.assign(_t=key).duplicated(["_t", "node", "variable"])
    if dup.any():
        r = df[dup].iloc[0]
        raise DataError(f"{path}: duplicate row for (time={r['time']}, node={r['node']}, variable={r['variable']})")
    values = _to_float(df, path)
    t_pos = {t: i for i, t in enumerate(expected)}
    n_pos = {n: i for i, n in enumerate(h.nodes)}
    v_pos = {v: i for i, v in enumerate(variables)}
    data = np.full((len(expected), h.n, len(variables)), np.nan)
    filled = np.zeros(data.shape, dtype=bool)
    for t, node, var, val in zip(key, df["node"], df["variable"], values):
        idx = (t_pos[t], n_pos[node], v_pos[var])
        data[idx] = val
        filled[idx] = True
    holes = np.argwhere(~filled | ~np.isfinite(data))
    if holes.size:
        ti, ni, vi = holes[0]
        raise DataError(
            f"{path}: missing value for (time={expected[ti]}, node={h.nodes[ni]}, variable={variables[vi]})"
        )
    t0 = str(expected[0]) if freq == "M" else int(expected[0])
    return MultiPanel(data, h.nodes, tuple(variables), t0=t0, frequency=freq)


def write_panel_csv(panel: MultiPanel, path: str | Path) -> None:
    labels = panel.time_labels()
    write_rows(
        path, PANEL_COLUMNS,
        ((labels[t], node, var, panel.data[t, i, j])
         for t in range(panel.T) for i, node in enumerate(panel.node_order)
         for j, var in enumerate(panel.var_order)),
    )


def write_residuals_csv(r: ResidualPanel, path: str | Path) -> None:
    write_rows(path, r.labels, r.residuals.tolist())


def read_residuals_csv(path: str | Path) -> ResidualPanel:
    df = pd.read_csv(path)
    return ResidualPanel(df.to_numpy(dtype=float), tuple(df.columns))


def read_bundle(manifest: str | Path, h: Hierarchy) -> tuple[ExternalForecastBundle, tuple[str, ...]]:
    """Load a forecast bundle; returns the bundle and its variable order."""
    manifest = Path(manifest)
    try:
        meta = json.loads(manifest.read_text())
    except FileNotFoundError:
        raise DataError(f"{manifest}: file not found") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{manifest}: invalid JSON ({exc})") from None
    for key in ("forecasts", "residuals"):
        if key not in meta:
            raise DataError(f"{manifest}: manifest needs a '{key}' entry")
    base = manifest.parent
    fpath, rpath = base / meta["forecasts"], base / meta["residuals"]

    fc = _read_long(fpath, FORECAST_COLUMNS)
    _check_nodes(fc["node"], h, fpath)
    origins = set(fc["origin"])
    if len(origins) != 1:
        raise DataError(f"{fpath}: a bundle holds exactly one forecast origin, found {sorted(origins)}")
    variables = tuple(dict.fromkeys(fc["variable"]))
    horizons = fc["horizon"].astype(int)
    H = int(horizons.max())
    n_pos = {n: i for i, n in enumerate(h.nodes)}
    v_pos = {v: i for i, v in enumerate(variables)}
    yhat = np.full((H, h.n, len(variables)), np.nan)
    seen = np.zeros(yhat.shape, dtype=bool)
    for hz, node, var, val in zip(horizons, fc["node"], fc["variable"], _to_float(fc, fpath)):
        if hz < 1:
            raise DataError(f"{fpath}: horizons start at 1")
        yhat[hz - 1, n_pos[node], v_pos[var]] = val
        seen[hz - 1, n_pos[node], v_pos[var]] = True
    bad = np.argwhere(~seen | ~np.isfinite(yhat))
    if bad.size:
        hz, i, j = bad[0]
        what = "missing" if not seen[hz, i, j] else "non-finite"
        raise DataError(f"{fpath}: {what} forecast for (horizon={hz + 1}, node={h.nodes[i]}, variable={variables[j]})")

    rs = _read_long(rpath, PANEL_COLUMNS)
    _check_nodes(rs["node"], h, rpath)
    extra_vars = set(rs["variable"]) - set(variables)
    if extra_vars:
        raise DataError(f"{rpath}: variables not in forecasts: {sorted(extra_vars)}")
    rs = rs.assign(value=_to_float(rs, rpath))
    wide = rs.pivot_table(index="time", columns=["variable", "node"], values="value", aggfunc="first", dropna=False)
    cols = [(v, n) for v in variables for n in h.nodes]
    wide = wide.reindex(columns=pd.MultiIndex.from_tuples(cols))
    try:
        wide = wide.loc[sorted(wide.index, key=int)]
    except ValueError:
        wide = wide.sort_index()
    labels = tuple(f"{n}:{v}" for v, n in cols)
    residuals = ResidualPanel(wide.to_numpy(dtype=float), labels)
    origin = next(iter(origins))
    bundle = ExternalForecastBundle(
        yhat, residuals, str(meta.get("provenance", "")), int(origin) if origin.lstrip("-").isdigit() else 0
    )
    return bundle, variables


def write_bundle(
    directory: str | Path,
    yhat: np.ndarray,
    residuals: np.ndarray,
    nodes: Sequence[str],
    variables: Sequence[str],
    origin: int = 0,
    provenance: str = "",
) -> Path:
    """Write ``yhat`` (H, n, m) and ``residuals`` (R, n, m) as a bundle; returns the manifest path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_rows(
        d / "forecasts.csv", FORECAST_COLUMNS,
        ((origin, hz + 1, node, var, yhat[hz, i, j])
         for hz in range(yhat.shape[0]) for i, node in enumerate(nodes) for j, var in enumerate(variables)),
    )
    write_rows(
        d / "residuals.csv", PANEL_COLUMNS,
        ((t, node, var, residuals[t, i, j])
         for t in range(residuals.shape[0]) for i, node in enumerate(nodes) for j, var in enumerate(variables)),
    )
    manifest = d / "manifest.json"
    manifest.write_text(json.dumps(
        {"forecasts": "forecasts.csv", "residuals": "residuals.csv", "provenance": provenance}, indent=2
    ) + "\n")
    return manifest


def write_reconciled_csv(path, origin, nodes, variables, base: np.ndarray, rec: np.ndarray) -> None:
    write_rows(
        path, RECONCILED_COLUMNS,
        ((origin, hz + 1, node, var, base[hz, i, j], rec[hz, i, j])
         for hz in range(base.shape[0]) for i, node in enumerate(nodes) for j, var in enumerate(variables)),
    )


def markdown_table(header: Sequence[str], rows: Iterable[Sequence], digits: int = 3) -> str:
    def cell(v):
        if isinstance(v, (float, np.floating)):
            return "" if math.isnan(v) else f"{v:.{digits}f}"
        return str(v)

    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(cell(v) for v in row) + " |" for row in rows]
    return "\n".join(lines) + "\n"
