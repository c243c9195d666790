import csv
import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest
from scipy import stats

from cdediag.cli import main
from cdediag.diagnostics import build_null_ensemble, lct
from cdediag.fileio import load_schema, read_table, write_csv
from cdediag.regression import KNNCoverageRegressor, alpha_grid
from cdediag.statistics import CalibrationSample


def run(*argv):
    return main([str(a) for a in argv])


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def f1_calibration(tmp_path_factory):
    d = tmp_path_factory.mktemp("f1")
    assert run("simulate", "--scenario", "example1", "--n", 2000, "--seed", 0,
               "--out", d / "sim") == 0
    assert run("pit", "--input", d / "sim" / "data.csv", "--model", "example1-f1",
               "--out", d / "pit") == 0
    return d / "pit" / "calibration.csv"


def test_simulate_example1(tmp_path):
    assert run("simulate", "--scenario", "example1", "--n", 15000, "--seed", 5,
               "--out", tmp_path / "a") == 0
    assert len(rows(tmp_path / "a" / "data.csv")) == 15001
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    jsonschema.validate(manifest, load_schema("manifest"))
    assert manifest["parameters"]["rho"] == 0.8
    run("simulate", "--scenario", "example1", "--n", 15000, "--seed", 5, "--out", tmp_path / "b")
    for name in ("data.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_two_population(tmp_path):
    assert run("simulate", "--scenario", "two_population", "--n", 10_000, "--seed", 1,
               "--out", tmp_path) == 0
    t = read_table(tmp_path / "data.csv")
    minority = np.array(t.extra["group"], dtype=int)
    assert minority.mean() == pytest.approx(0.1, abs=0.02)


def test_simulate_transform(tmp_path):
    assert run("simulate", "--scenario", "transform_counterexample", "--transform", "x1",
               "--n", 10, "--out", tmp_path) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["parameters"]["model"]["weight"][0] == pytest.approx(1.8)


def test_unknown_scenario(tmp_path, capsys):
    assert run("simulate", "--scenario", "nope", "--out", tmp_path) == 2
    assert "unknown scenario" in capsys.readouterr().err


def test_pit_passthrough_is_identical(tmp_path, rng):
    src = tmp_path / "in.csv"
    write_csv(src, ["x_1", "x_2", "pit"], ([*rng.normal(size=2), rng.random()] for _ in range(30)))
    assert run("pit", "--input", src, "--out", tmp_path / "o") == 0
    assert (tmp_path / "o" / "calibration.csv").read_bytes() == src.read_bytes()


def test_pit_well_specified_is_uniform(tmp_path):
    run("simulate", "--n", 5000, "--seed", 3, "--out", tmp_path)
    assert run("pit", "--input", tmp_path / "data.csv", "--model", "example1-f2",
               "--out", tmp_path) == 0
    t = read_table(tmp_path / "calibration.csv")
    assert t.statistic_kind == "pit"
    assert stats.kstest(t.statistic, "uniform").pvalue > 0.01


def test_pit_analytic_and_sample_models(tmp_path):
    data = tmp_path / "d.csv"
    write_csv(data, ["x_1", "y"], [[0.0, 0.0], [1.0, 3.0]])
    assert run("pit", "--input", data, "--model", "gaussian:1:0:1", "--out", tmp_path / "g") == 0
    assert float(rows(tmp_path / "g" / "calibration.csv")[1][1]) == pytest.approx(0.5)
    draws = tmp_path / "s.csv"
    write_csv(draws, ["s_1", "s_2", "s_3", "s_4"], [[-1.0, -0.5, 0.5, 1.0], [0, 1, 2, 4]])
    assert run("pit", "--input", data, "--model", f"samples:{draws}", "--out",
               tmp_path / "s") == 0
    assert [r[1] for r in rows(tmp_path / "s" / "calibration.csv")[1:]] == ["0.5", "0.75"]


def test_pit_errors(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("x_1,x_2\n1,2\n")
    assert run("pit", "--input", bad, "--model", "example1-f2", "--out", tmp_path) == 2
    nan = tmp_path / "nan.csv"
    nan.write_text("x_1,x_2,y\n1,2,3\nnan,1,1\n")
    assert run("pit", "--input", nan, "--model", "example1-f2", "--out", tmp_path) == 2
    assert "line 3" in capsys.readouterr().err
    ok = tmp_path / "ok.csv"
    write_csv(ok, ["x_1", "x_2", "y"], [[0.0, 0.0, 0.0]])
    draws = tmp_path / "s.csv"
    write_csv(draws, ["s_1", "s_2"], [[0.0, 1.0]])
    assert run("pit", "--input", ok, "--model", f"samples:{draws}", "--statistic", "hpd",
               "--out", tmp_path) == 3
    one_feature = tmp_path / "one.csv"
    write_csv(one_feature, ["x_1", "y"], [[0.0, 0.0]])
    assert run("pit", "--input", one_feature, "--model", "example1-f2", "--out", tmp_path) == 2


def test_gct_report(f1_calibration, tmp_path, capsys):
    assert run("gct", "--input", f1_calibration, "--B", 100, "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert out.startswith("GCT p-value: ") and out.rstrip().endswith("(B=100)")
    report = json.loads((tmp_path / "gct.json").read_text())
    jsonschema.validate(report, load_schema("gct"))
    assert report["p_value"] < 0.05 and len(report["null_statistics"]) == 100


def test_coarse_null_is_a_config_error(f1_calibration, tmp_path):
    assert run("gct", "--input", f1_calibration, "--B", 10, "--out", tmp_path) == 4
    assert run("alp", "--input", f1_calibration, "--B", 30, "--eta", 0.05, "--points",
               f1_calibration, "--out", tmp_path) == 4


def test_lct_single_point_matches_library(f1_calibration, tmp_path):
    pts = tmp_path / "p.csv"
    write_csv(pts, ["x_1", "x_2"], [[1.0, -1.0]])
    assert run("lct", "--input", f1_calibration, "--points", pts, "--B", 50, "--seed", 4,
               "--out", tmp_path / "a") == 0
    out = rows(tmp_path / "a" / "lct.csv")
    assert out[0] == ["x_1", "x_2", "T", "p_value"] and len(out) == 2
    t = read_table(f1_calibration)
    s = CalibrationSample(t.features, t.statistic)
    reg = KNNCoverageRegressor()
    ens = build_null_ensemble(t.features, alpha_grid(), reg, 50, 4)
    res = lct(s, alpha_grid(), reg, [1.0, -1.0], ens)
    assert float(out[1][2]) == res.statistic and float(out[1][3]) == res.p_value
    jsonschema.validate(json.loads((tmp_path / "a" / "lct.json").read_text()), load_schema("lct"))
    run("lct", "--input", f1_calibration, "--points", pts, "--B", 50, "--seed", 4,
        "--out", tmp_path / "b")
    assert (tmp_path / "a" / "lct.csv").read_bytes() == (tmp_path / "b" / "lct.csv").read_bytes()


def test_lct_map_rejects_off_line(f1_calibration, tmp_path):
    g = np.linspace(-2, 2, 15)
    grid = np.array([[a, b] for a in g for b in g])
    pts = tmp_path / "grid.csv"
    write_csv(pts, ["x_1", "x_2"], grid)
    assert run("lct", "--input", f1_calibration, "--points", pts, "--B", 200,
               "--out", tmp_path) == 0
    p = np.array([float(r[3]) for r in rows(tmp_path / "lct.csv")[1:]])
    far = np.abs(0.8 * grid[:, 0] - grid[:, 1]) > 1
    assert np.mean(p[far] < 0.05) > np.mean(p[~far] < 0.05)


def test_alp_outputs(f1_calibration, tmp_path, caplog):
    pts = tmp_path / "p.csv"
    extra = np.random.default_rng(0).normal(size=(8, 2))
    write_csv(pts, ["x_1", "x_2"], [[1.0, -1.0], [-1.0, 1.0], *extra])
    with caplog.at_level("INFO", logger="cdediag"):
        assert run("alp", "--input", f1_calibration, "--points", pts, "--out",
                   tmp_path / "a") == 0
    fits = [r for r in caplog.records if "fitting null ensemble" in r.getMessage()]
    assert len(fits) == 1
    report = json.loads((tmp_path / "a" / "alp.json").read_text())
    jsonschema.validate(report, load_schema("alp"))
    assert report["n_null"] == 200
    labels = [b["label"] for b in report["bands"]]
    assert labels[:2] == ["positive_bias", "negative_bias"]
    band = rows(tmp_path / "a" / "alp_1.csv")
    assert band[0] == ["alpha", "estimate", "lower", "upper"] and len(band) == 22
    svg = (tmp_path / "a" / "alp_1.svg").read_text()
    assert "positive_bias" in svg
    assert "<image" not in svg and 'href="http' not in svg
    run("alp", "--input", f1_calibration, "--points", pts, "--out", tmp_path / "b")
    for name in ("alp.json", "alp_1.csv", "alp_1.svg", "alp_10.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_kernel_and_cv_options(f1_calibration, tmp_path):
    assert run("gct", "--input", f1_calibration, "--regressor", "kernel", "--bandwidth", 0.3,
               "--B", 20, "--out", tmp_path) == 0
    report = json.loads((tmp_path / "gct.json").read_text())
    assert report["regressor"] == {"kind": "kernel", "bandwidth": 0.3, "standardize": False}
    assert run("gct", "--input", f1_calibration, "--k", "cv", "--B", 20, "--out", tmp_path) == 0
    assert json.loads((tmp_path / "gct.json").read_text())["regressor"]["n_neighbors"] > 0
    assert run("gct", "--input", f1_calibration, "--k", "lots", "--out", tmp_path) == 4


def test_config_precedence_and_roundtrip(tmp_path, capsys):
    assert run("print-config") == 0
    defaults = json.loads(capsys.readouterr().out)
    assert defaults["grid_size"] == 21 and defaults["B"] is None
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"B": 300, "seed": 9, "regressor": "kernel"}))
    run("print-config", "--config", cfg, "--seed", 2)
    merged = json.loads(capsys.readouterr().out)
    assert (merged["B"], merged["seed"], merged["regressor"]) == (300, 2, "kernel")
    dumped = tmp_path / "dumped.json"
    dumped.write_text(json.dumps(merged))
    run("print-config", "--config", dumped)
    assert json.loads(capsys.readouterr().out) == merged
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run("print-config", "--config", cfg) == 4


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "cdediag.cli", "print-config"],
                         capture_output=True, text=True, check=True)
    assert json.loads(out.stdout)["eta"] == 0.05
