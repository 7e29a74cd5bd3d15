"""Writers for study and evaluation outputs.

Study directory (``simulate-study``)::

    summary_relrmse_base.csv  scenario,model,estimator,horizon,mean_relrmse,negative
    summary_relrmse_uni.csv   scenario,model,estimator,horizon,mean_relrmse,negative
    summary_pct_nonneg.csv    scenario,model,estimator,comparison,pct_nonneg
    summary_rmsse.csv         scenario,model,estimator,horizon,mean_rmsse,best
    series_relrmse_base.csv   scenario,model,estimator,node,variable,horizon,value,negative
    series_relrmse_uni.csv    (same columns)
    errors_<model>_<method>.csv  replicate,node,variable,horizon,sq_error
    failures.csv              replicate,message
    manifest.json, report.md

Evaluation directory (``evaluate``)::

    relrmse_base.csv       estimator,variable,series,horizon,value,negative
    relrmse_base_wide.csv  estimator,variable,series,h1..hH
    relrmse_uni.csv, relrmse_uni_wide.csv   (same columns)
    rmse.csv               method,variable,series,horizon,rmse
    summary.csv            comparison,estimator,variable,pct_nonneg
    manifest.json, report.md

``negative`` flags values below zero; ``best`` flags the lowest mean RMSSE
across models for a scenario, estimator and horizon.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .evaluate import ErrorCube, best_method_flags, method_label, rel_rmse, rmse, summarize
from .io import markdown_table, write_rows
from .simulate import StudyResult

SUMMARY_RELRMSE_HEADER = ["scenario", "model", "estimator", "horizon", "mean_relrmse", "negative"]
SUMMARY_PCT_HEADER = ["scenario", "model", "estimator", "comparison", "pct_nonneg"]
SUMMARY_RMSSE_HEADER = ["scenario", "model", "estimator", "horizon", "mean_rmsse", "best"]
SERIES_HEADER = ["scenario", "model", "estimator", "node", "variable", "horizon", "value", "negative"]
APP_LONG_HEADER = ["estimator", "variable", "series", "horizon", "value", "negative"]
APP_SUMMARY_HEADER = ["comparison", "estimator", "variable", "pct_nonneg"]

COMPARISONS = {"base": "base", "uni": "univariate"}


def _tables(cube: ErrorCube, estimator: str):
    multi = method_label("multivariate", estimator)
    return {
        key: rel_rmse(cube, multi, method_label(ref) if ref == "base" else method_label(ref, estimator))
        for key, ref in COMPARISONS.items()
    }


def study_summary(results: Sequence[StudyResult]) -> dict[str, list[list]]:
    """Summary rows for one or more scenario runs, keyed by output file stem."""
    out = {k: [] for k in ("summary_relrmse_base", "summary_relrmse_uni", "summary_pct_nonneg",
                           "summary_rmsse", "series_relrmse_base", "series_relrmse_uni")}
    for res in results:
        sid = res.spec.scenario_id
        for est in res.estimators:
            rmsse_means = {}
            for model in res.forecasters:
                cube = res.cubes[model]
                if not cube.sq_errors:
                    continue
                for key, table in _tables(cube, est).items():
                    s = summarize(table)
                    for hz, v in enumerate(s.mean_per_h):
                        out[f"summary_relrmse_{key}"].append([sid, model, est, hz + 1, v, bool(v < 0)])
                    out["summary_pct_nonneg"].append([sid, model, est, key, s.pct_nonneg])
                    vals = table.values
                    for i, node in enumerate(cube.nodes):
                        for j, var in enumerate(cube.variables):
                            for hz in range(vals.shape[2]):
                                v = vals[i, j, hz]
                                out[f"series_relrmse_{key}"].append([sid, model, est, node, var, hz + 1, v, bool(v < 0)])
                rmsse_means[model] = res.rmsse[model][method_label("multivariate", est)].mean(axis=0)
            if rmsse_means:
                best = best_method_flags(rmsse_means)
                for model, per_h in rmsse_means.items():
                    for hz, v in enumerate(per_h):
                        out["summary_rmsse"].append([sid, model, est, hz + 1, v, bool(best[model][hz])])
    return out


_HEADERS = {
    "summary_relrmse_base": SUMMARY_RELRMSE_HEADER,
    "summary_relrmse_uni": SUMMARY_RELRMSE_HEADER,
    "summary_pct_nonneg": SUMMARY_PCT_HEADER,
    "summary_rmsse": SUMMARY_RMSSE_HEADER,
    "series_relrmse_base": SERIES_HEADER,
    "series_relrmse_uni": SERIES_HEADER,
}


def _wide(rows: list[list], key_cols: int, value_col: int, H: int) -> list[list]:
    grouped: dict[tuple, list] = {}
    for r in rows:
        grouped.setdefault(tuple(r[:key_cols]), [np.nan] * H)[r[key_cols] - 1] = r[value_col]
    return [list(k) + v for k, v in grouped.items()]


def write_study(results: Sequence[StudyResult], outdir: str | Path, manifest_extra: dict | None = None) -> Path:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    tables = study_summary(results)
    for stem, rows in tables.items():
        write_rows(outdir / f"{stem}.csv", _HEADERS[stem], rows)

    failures = []
    for res in results:
        for model, cube in res.cubes.items():
            for meth, arr in cube.sq_errors.items():
                name = f"errors_s{res.spec.scenario_id}_{model}_{meth.replace(':', '-')}.csv"
                write_rows(
                    outdir / name, ["replicate", "node", "variable", "horizon", "sq_error"],
                    ((cube.index[k], node, var, hz + 1, arr[k, i, j, hz])
                     for k in range(arr.shape[0]) for i, node in enumerate(cube.nodes)
                     for j, var in enumerate(cube.variables) for hz in range(arr.shape[3])),
                )
        failures += [(res.spec.scenario_id, r, msg) for r, msg in res.failures]
    write_rows(outdir / "failures.csv", ["scenario", "replicate", "message"], failures)

    H = results[0].spec.H if results else 0
    md = ["# Simulation study\n"]
    for key, title in (("base", "Mean RelRMSE vs base forecasts"), ("uni", "Mean RelRMSE vs univariate reconciliation")):
        md.append(f"\n## {title}\n\n")
        md.append(markdown_table(["scenario", "model", "estimator"] + [f"h{k}" for k in range(1, H + 1)],
                                 _wide(tables[f"summary_relrmse_{key}"], 3, 4, H)))
    md.append("\n## Percentage of non-negative RelRMSE cells\n\n")
    md.append(markdown_table(SUMMARY_PCT_HEADER, tables["summary_pct_nonneg"], digits=1))
    md.append("\n## Mean RMSSE of multivariate reconciled forecasts\n\n")
    md.append(markdown_table(["scenario", "model", "estimator"] + [f"h{k}" for k in range(1, H + 1)],
                             _wide(tables["summary_rmsse"], 3, 4, H)))
    (outdir / "report.md").write_text("".join(md))

    manifest = {
        "tool": "mvrecon",
        "version": __version__,
        "scenarios": [
            {"scenario_id": r.spec.scenario_id, "seed": r.spec.seed, "spec_hash": r.spec.spec_hash(),
             "replications": r.spec.replications, "succeeded": r.n_ok, "failed": len(r.failures),
             "forecasters": list(r.forecasters), "estimators": list(r.estimators), "warnings": r.warnings}
            for r in results
        ],
        **(manifest_extra or {}),
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return outdir


def application_tables(cube: ErrorCube, estimators: Sequence[str]) -> dict[str, list[list]]:
    """Per-series RelRMSE tables for a rolling-origin evaluation (long and wide)."""
    H = cube.shape[3]
    out: dict[str, list[list]] = {"summary": [], "rmse": []}
    for key in COMPARISONS:
        out[f"relrmse_{key}"] = []
        out[f"relrmse_{key}_wide"] = []
    for est in estimators:
        for key, table in _tables(cube, est).items():
            vals = table.values
            for j, var in enumerate(cube.variables):
                for i, node in enumerate(cube.nodes):
                    row = vals[i, j]
                    out[f"relrmse_{key}_wide"].append([est, var, node, *row])
                    for hz in range(H):
                        out[f"relrmse_{key}"].append([est, var, node, hz + 1, row[hz], bool(row[hz] < 0)])
                sub = vals[:, j, :]
                defined = ~np.isnan(sub)
                pct = 100.0 * float((sub[defined] >= 0).sum()) / defined.sum() if defined.any() else np.nan
                out["summary"].append([key, est, var, pct])
    for meth in cube.methods:
        r = rmse(cube, meth)
        for j, var in enumerate(cube.variables):
            for i, node in enumerate(cube.nodes):
                for hz in range(H):
                    out["rmse"].append([meth, var, node, hz + 1, r[i, j, hz]])
    return out


def write_application(cube: ErrorCube, estimators: Sequence[str], outdir: str | Path, manifest_extra: dict | None = None) -> Path:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    H = cube.shape[3]
    wide_header = ["estimator", "variable", "series"] + [f"h{k}" for k in range(1, H + 1)]
    tables = application_tables(cube, estimators)
    headers = {
        "relrmse_base": APP_LONG_HEADER, "relrmse_uni": APP_LONG_HEADER,
        "relrmse_base_wide": wide_header, "relrmse_uni_wide": wide_header,
        "rmse": ["method", "variable", "series", "horizon", "rmse"],
        "summary": APP_SUMMARY_HEADER,
    }
    for stem, rows in tables.items():
        write_rows(outdir / f"{stem}.csv", headers[stem], rows)

    md = ["# Rolling-origin evaluation\n"]
    for key, title in (("base", "RelRMSE vs base forecasts"), ("uni", "RelRMSE vs univariate reconciliation")):
        for est in estimators:
            for var in cube.variables:
                rows = [r[2:] for r in tables[f"relrmse_{key}_wide"] if r[0] == est and r[1] == var]
                md.append(f"\n## {title}: {var} ({est})\n\n")
                md.append(markdown_table(["series"] + [f"h{k}" for k in range(1, H + 1)], rows))
    (outdir / "report.md").write_text("".join(md))
    manifest = {"tool": "mvrecon", "version": __version__, "origins": list(cube.index), **(manifest_extra or {})}
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return outdir
