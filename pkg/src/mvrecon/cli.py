"""Command-line entry point: ``mvrecon {simulate-study,reconcile,evaluate,scenario-info}``.

Exit status is 0 on success, 2 for invalid configuration or input data and 1
for unexpected internal errors. Error lines start with ``error:``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import yaml
from scipy.linalg import block_diag

from . import __version__
from .baseforecast import FORECASTER_KINDS, ForecasterSpec, fit_forecast, import_external
from .covariance import estimate_covariance
from .evaluate import default_origins, rolling_origin_cv
from .hierarchy import coherence_violation, load_hierarchy
from .io import read_bundle, read_panel_csv, write_reconciled_csv, write_rows
from .reconcile import METHODS, reconcile
from .report import write_application, write_study
from .simulate import ScenarioSpec, builtin_scenario, run_study

log = logging.getLogger("mvrecon")

ESTIMATORS = ("sample", "shrinkage", "identity")


class ConfigError(ValueError):
    pass


def _csv_list(choices):
    def parse(text: str) -> list[str]:
        items = [s.strip() for s in text.split(",") if s.strip()]
        bad = [s for s in items if s not in choices]
        if bad or not items:
            raise argparse.ArgumentTypeError(f"invalid choice(s) {bad or text!r}; pick from {', '.join(choices)}")
        return list(dict.fromkeys(items))
    return parse


def _int_list(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _forecaster_args(p: argparse.ArgumentParser, multi: bool) -> None:
    if multi:
        p.add_argument("--forecaster", type=_csv_list(FORECASTER_KINDS), default=["arx"],
                       help="comma-separated base models: seasonal-mean, arx, var1")
    else:
        p.add_argument("--forecaster", choices=FORECASTER_KINDS, default="arx")
    p.add_argument("--period", type=int, default=None, help="seasonal period")
    p.add_argument("--p-ar", type=int, default=1, help="autoregressive order for arx")
    p.add_argument("--no-seasonal", action="store_true", help="drop seasonal dummies from arx/var1")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvrecon", description="Multivariate forecast reconciliation for hierarchical time series.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate-study", help="run the sinusoid + VAR(1) replication study")
    src = sim.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", type=_int_list, help="built-in scenario id(s) 1..9, comma-separated")
    src.add_argument("--spec", type=Path, help="scenario YAML file")
    sim.add_argument("--reps", type=int, default=None)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    _forecaster_args(sim, multi=True)
    sim.add_argument("--estimator", type=_csv_list(ESTIMATORS), default=["shrinkage"])
    sim.add_argument("--method", choices=METHODS[:3], default="proj-m")
    sim.add_argument("--horizons", type=int, default=None)
    sim.add_argument("--out", type=Path, required=True)

    rec = sub.add_parser("reconcile", help="reconcile base forecasts for a panel or forecast bundle")
    rec.add_argument("--hierarchy", type=Path, required=True)
    inp = rec.add_mutually_exclusive_group(required=True)
    inp.add_argument("--panel", type=Path)
    inp.add_argument("--bundle", type=Path, help="forecast bundle manifest.json")
    _forecaster_args(rec, multi=False)
    rec.add_argument("--estimator", choices=ESTIMATORS, default="shrinkage")
    rec.add_argument("--method", choices=METHODS, default="proj-m")
    rec.add_argument("--horizons", type=int, default=12)
    rec.add_argument("--out", type=Path, required=True)

    ev = sub.add_parser("evaluate", help="rolling-origin evaluation of base, univariate and multivariate forecasts")
    ev.add_argument("--hierarchy", type=Path, required=True)
    ev.add_argument("--panel", type=Path, required=True)
    _forecaster_args(ev, multi=False)
    ev.add_argument("--estimator", type=_csv_list(ESTIMATORS), default=["shrinkage"])
    ev.add_argument("--method", choices=METHODS[:3], default="proj-m")
    ev.add_argument("--horizons", type=int, default=12)
    ev.add_argument("--origins", type=int, default=12, help="number of expanding-window forecast origins")
    ev.add_argument("--out", type=Path, required=True)

    info = sub.add_parser("scenario-info", help="print a scenario specification as YAML")
    src = info.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", type=int)
    src.add_argument("--spec", type=Path)
    info.add_argument("--out", type=Path, default=None, help="also write the YAML here")
    return parser


def _forecaster(kind: str, args, default_period: int) -> ForecasterSpec:
    period = args.period if args.period is not None else default_period
    return ForecasterSpec(kind=kind, p_ar=args.p_ar, seasonal=not args.no_seasonal, period=period)


def _scenario(sid: int | None, spec_path: Path | None) -> ScenarioSpec:
    if spec_path is not None:
        if not spec_path.exists():
            raise ConfigError(f"scenario file {spec_path} not found")
        return ScenarioSpec.load(spec_path)
    if sid is None or not 1 <= sid <= 9:
        raise ConfigError("scenario id must be 1..9")
    return builtin_scenario(sid)


def cmd_simulate_study(args) -> int:
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    if args.reps is not None and args.reps < 1:
        raise ConfigError("--reps must be >= 1")
    specs = [_scenario(s, None) for s in args.scenario] if args.scenario else [_scenario(None, args.spec)]
    overrides = {k: v for k, v in (("replications", args.reps), ("seed", args.seed), ("H", args.horizons)) if v is not None}
    specs = [s.replace(**overrides) for s in specs]
    results = []
    for spec in specs:
        forecasters = [_forecaster(k, args, spec.period) for k in args.forecaster]
        log.info("scenario %s: %d replications", spec.scenario_id, spec.replications)
        res = run_study(spec, forecasters, args.estimator, args.method, threads=args.threads)
        if res.failures:
            log.warning("scenario %s: %d replicate(s) failed", spec.scenario_id, len(res.failures))
        results.append(res)
    write_study(results, args.out, {"method": args.method})
    return 0


def cmd_reconcile(args) -> int:
    h = load_hierarchy(args.hierarchy)
    if args.bundle is not None:
        bundle, variables = read_bundle(args.bundle, h)
        base = import_external(bundle)
        provenance = {"bundle": str(args.bundle), "provenance": bundle.provenance}
    else:
        if args.horizons < 1:
            raise ConfigError("--horizons must be >= 1")
        panel = read_panel_csv(args.panel, h)
        variables = panel.var_order
        spec = _forecaster(args.forecaster, args, args.period or 12)
        base = fit_forecast(spec, panel, args.horizons)
        provenance = {"panel": str(args.panel), "forecaster": args.forecaster, "period": spec.period}
    m = len(variables)
    if args.method == "univariate":
        n = h.n
        blocks = [estimate_covariance(base.residuals.select(range(j * n, (j + 1) * n)), args.estimator).W for j in range(m)]
        W = block_diag(*blocks)
    else:
        W = estimate_covariance(base.residuals, args.estimator)
    result = reconcile(base, W, h, m, args.method)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_reconciled_csv(out / "reconciled.csv", base.origin, h.nodes, variables, base.yhat, result.ytilde)
    viol = coherence_violation(h, result.ytilde)
    write_rows(out / "coherence_report.csv", ["horizon", "max_violation"],
               ((k + 1, float(v)) for k, v in enumerate(viol)))
    manifest = {"tool": "mvrecon", "version": __version__, "estimator": args.estimator,
                "method": args.method, "max_violation": float(viol.max()), **provenance}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"max coherence violation: {float(viol.max()):.3g}")
    return 0


def cmd_evaluate(args) -> int:
    if args.origins < 1:
        raise ConfigError("--origins must be >= 1")
    if args.horizons < 1:
        raise ConfigError("--horizons must be >= 1")
    h = load_hierarchy(args.hierarchy)
    panel = read_panel_csv(args.panel, h)
    spec = _forecaster(args.forecaster, args, args.period or 12)
    origins = default_origins(panel.T, args.horizons, args.origins)
    if origins[0] < 1:
        raise ConfigError(f"panel of length {panel.T} is too short for {args.origins} origins at H={args.horizons}")
    cube = rolling_origin_cv(panel, spec, args.estimator, origins, args.horizons, h, args.method)
    write_application(cube, args.estimator, args.out, {
        "panel": str(args.panel), "forecaster": args.forecaster, "period": spec.period,
        "estimators": args.estimator, "method": args.method,
    })
    return 0


def cmd_scenario_info(args) -> int:
    spec = _scenario(args.scenario, args.spec)
    text = yaml.safe_dump(spec.to_dict(), sort_keys=False)
    sys.stdout.write(text)
    if args.out is not None:
        Path(args.out).write_text(text)
    return 0


COMMANDS = {
    "simulate-study": cmd_simulate_study,
    "reconcile": cmd_reconcile,
    "evaluate": cmd_evaluate,
    "scenario-info": cmd_scenario_info,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError, yaml.YAMLError) as exc:
        # FitError, DataError, HierarchyError, ReconciliationError etc. all derive from ValueError
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"error: internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
