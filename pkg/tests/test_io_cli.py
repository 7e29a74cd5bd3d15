import csv
import json

import numpy as np
import pytest

from mvrecon.cli import main
from mvrecon.hierarchy import aggregate_bottom, dump_hierarchy
from mvrecon.io import (
    DataError,
    fmt,
    read_bundle,
    read_panel_csv,
    read_residuals_csv,
    write_bundle,
    write_panel_csv,
    write_residuals_csv,
)
from mvrecon.covariance import ResidualPanel


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def files(tmp_path, example_h, rng):
    panel = aggregate_bottom(example_h, 10 + rng.normal(size=(40, 5, 2)), ("x", "y"))
    dump_hierarchy(example_h, tmp_path / "h.yaml")
    write_panel_csv(panel, tmp_path / "panel.csv")
    return tmp_path, panel


def test_fmt():
    assert fmt(float("nan")) == "" and fmt(0.1) == "0.1" and fmt(True) == "true" and fmt(3) == "3"


def test_panel_roundtrip(files, example_h):
    d, panel = files
    back = read_panel_csv(d / "panel.csv", example_h)
    np.testing.assert_array_equal(back.data, panel.data)
    assert back.var_order == ("x", "y")


def test_panel_errors(files, example_h):
    d, _ = files
    lines = (d / "panel.csv").read_text().splitlines()
    header, body = lines[0], lines[1:]

    def write(rows, name):
        p = d / name
        p.write_text("\n".join([header] + rows) + "\n")
        return p

    missing = [r for r in body if not r.startswith("3,BB,y,")]
    with pytest.raises(DataError, match=r"time=3, node=BB, variable=y"):
        read_panel_csv(write(missing, "a.csv"), example_h)
    with pytest.raises(DataError, match="gap at 5"):
        read_panel_csv(write([r for r in body if not r.startswith("5,")], "b.csv"), example_h)
    with pytest.raises(DataError, match="duplicate row"):
        read_panel_csv(write(body + body[:1], "c.csv"), example_h)
    renamed = [r.replace(",BC,", ",ZZ,") for r in body]
    with pytest.raises(DataError, match="not in hierarchy: ZZ; missing from data: BC"):
        read_panel_csv(write(renamed, "d.csv"), example_h)
    (d / "e.csv").write_text("t,node,variable,value\n")
    with pytest.raises(DataError, match="missing column"):
        read_panel_csv(d / "e.csv", example_h)


def test_monthly_panel(tmp_path, example_h):
    (tmp_path / "m.csv").write_text(
        "time,node,variable,value\n" + "".join(
            f"{t},{n},v,1\n" for t in ("2004-11", "2004-12", "2005-01") for n in example_h.nodes)
    )
    p = read_panel_csv(tmp_path / "m.csv", example_h)
    assert p.frequency == "M" and p.t0 == "2004-11" and p.T == 3


def test_residuals_roundtrip(tmp_path):
    r = ResidualPanel(np.arange(6.0).reshape(3, 2), ("A:x", "B:x"))
    write_residuals_csv(r, tmp_path / "r.csv")
    back = read_residuals_csv(tmp_path / "r.csv")
    assert back.labels == r.labels
    np.testing.assert_array_equal(back.residuals, r.residuals)


def test_bundle_roundtrip_and_errors(tmp_path, example_h, rng):
    yhat = rng.normal(size=(3, 8, 2))
    res = rng.normal(size=(20, 8, 2))
    res[4, 2, 1] = np.nan
    man = write_bundle(tmp_path / "b", yhat, res, example_h.nodes, ("x", "y"), origin=7, provenance="test")
    bundle, variables = read_bundle(man, example_h)
    assert variables == ("x", "y") and bundle.origin == 7 and bundle.provenance == "test"
    np.testing.assert_array_equal(bundle.yhat, yhat)
    assert bundle.residuals.n_rows == 19 and bundle.residuals.n_dropped == 1
    assert bundle.residuals.labels[8] == "Total:y"

    fc = tmp_path / "b" / "forecasts.csv"
    lines = [l for l in fc.read_text().splitlines() if not l.startswith("7,2,AB,y,")]
    fc.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match=r"missing forecast for \(horizon=2, node=AB, variable=y\)"):
        read_bundle(man, example_h)
    with pytest.raises(DataError, match="file not found"):
        read_bundle(tmp_path / "nope.json", example_h)


def test_cli_reconcile_panel(files, capsys):
    d, _ = files
    rc = main(["reconcile", "--hierarchy", str(d / "h.yaml"), "--panel", str(d / "panel.csv"),
               "--period", "4", "--horizons", "3", "--out", str(d / "out")])
    assert rc == 0
    rows = _rows(d / "out" / "reconciled.csv")
    assert len(rows) == 3 * 8 * 2
    assert list(rows[0]) == ["origin", "horizon", "node", "variable", "base", "reconciled"]
    viol = _rows(d / "out" / "coherence_report.csv")
    assert max(float(r["max_violation"]) for r in viol) < 1e-8
    man = json.loads((d / "out" / "manifest.json").read_text())
    assert man["method"] == "proj-m" and man["estimator"] == "shrinkage"
    assert "max coherence violation" in capsys.readouterr().out


@pytest.mark.parametrize("method", ["direct", "proj-j", "univariate"])
def test_cli_reconcile_bundle(tmp_path, example_h, rng, method):
    dump_hierarchy(example_h, tmp_path / "h.yaml")
    man = write_bundle(tmp_path / "b", rng.normal(size=(2, 8, 2)), rng.normal(size=(30, 8, 2)),
                       example_h.nodes, ("x", "y"))
    rc = main(["reconcile", "--hierarchy", str(tmp_path / "h.yaml"), "--bundle", str(man),
               "--method", method, "--out", str(tmp_path / "o")])
    assert rc == 0
    assert len(_rows(tmp_path / "o" / "reconciled.csv")) == 32


def test_cli_evaluate(files):
    d, _ = files
    rc = main(["evaluate", "--hierarchy", str(d / "h.yaml"), "--panel", str(d / "panel.csv"),
               "--period", "4", "--horizons", "4", "--origins", "3", "--estimator", "shrinkage,identity",
               "--out", str(d / "ev")])
    assert rc == 0
    wide = _rows(d / "ev" / "relrmse_base_wide.csv")
    assert list(wide[0]) == ["estimator", "variable", "series", "h1", "h2", "h3", "h4"]
    assert len(wide) == 2 * 2 * 8
    assert {r["comparison"] for r in _rows(d / "ev" / "summary.csv")} == {"base", "uni"}
    assert json.loads((d / "ev" / "manifest.json").read_text())["origins"] == [34, 35, 36]


def test_cli_simulate_study_outputs(tmp_path):
    rc = main(["simulate-study", "--scenario", "1", "--reps", "2", "--seed", "1", "--threads", "1",
               "--forecaster", "arx,seasonal-mean", "--out", str(tmp_path / "s")])
    assert rc == 0
    out = tmp_path / "s"
    rows = _rows(out / "summary_relrmse_base.csv")
    assert len(rows) == 2 * 12 and rows[0]["scenario"] == "1"
    best = _rows(out / "summary_rmsse.csv")
    assert {r["best"] for r in best} <= {"true", "false"}
    assert (out / "errors_s1_arx_multivariate-shrinkage.csv").exists()
    man = json.loads((out / "manifest.json").read_text())
    assert man["scenarios"][0]["succeeded"] == 2 and len(man["scenarios"][0]["spec_hash"]) == 64
    assert "Mean RelRMSE" in (out / "report.md").read_text()


def test_cli_scenario_info_and_spec(tmp_path, capsys):
    assert main(["scenario-info", "--scenario", "5", "--out", str(tmp_path / "s.yaml")]) == 0
    assert "scenario_id: 5" in capsys.readouterr().out
    assert main(["simulate-study", "--spec", str(tmp_path / "s.yaml"), "--reps", "1",
                 "--forecaster", "seasonal-mean", "--out", str(tmp_path / "o")]) == 0


@pytest.mark.parametrize("argv, msg", [
    (["simulate-study", "--scenario", "10", "--out", "x"], "scenario id must be 1..9"),
    (["simulate-study", "--scenario", "1", "--reps", "0", "--out", "x"], "--reps"),
    (["simulate-study", "--spec", "missing.yaml", "--out", "x"], "not found"),
    (["scenario-info", "--scenario", "0"], "1..9"),
])
def test_cli_config_errors(argv, msg, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2
    err = capsys.readouterr().err
    assert err.startswith("error:") and msg in err


def test_cli_data_errors(files, capsys):
    d, _ = files
    (d / "bad.csv").write_text("time,node,variable,value\n1,Total,x,1\n")
    rc = main(["reconcile", "--hierarchy", str(d / "h.yaml"), "--panel", str(d / "bad.csv"), "--out", str(d / "o")])
    assert rc == 2 and "node mismatch" in capsys.readouterr().err
    rc = main(["evaluate", "--hierarchy", str(d / "h.yaml"), "--panel", str(d / "panel.csv"),
               "--origins", "0", "--out", str(d / "o")])
    assert rc == 2 and "--origins" in capsys.readouterr().err


def test_cli_argparse_rejects_unknown_choice(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate-study", "--scenario", "1", "--estimator", "ledoit", "--out", "x"])
    assert exc.value.code == 2


def test_bundle_nonfinite_forecast_named(tmp_path, example_h, rng):
    yhat = rng.normal(size=(2, 8, 1))
    yhat[1, 4, 0] = np.inf
    man = write_bundle(tmp_path, yhat, rng.normal(size=(10, 8, 1)), example_h.nodes, ("v",))
    with pytest.raises(DataError, match=r"non-finite forecast for \(horizon=2, node=AB, variable=v\)"):
        read_bundle(man, example_h)
