"""Library against the brute-force reference on small problems."""
import numpy as np
import pytest

import oracle_bruteforce as oracle
from cdediag.benchmarks import example1_data, example1_model
from cdediag.diagnostics import alp_bands, build_null_ensemble, gct, local_tests
from cdediag.regression import KNNCoverageRegressor, alpha_grid
from cdediag.statistics import compute_calibration_sample


def library(sample, grid, k, B, seed, points, confidence):
    reg = KNNCoverageRegressor(k)
    ens = build_null_ensemble(sample.features, grid, reg, B, seed)
    loc = local_tests(sample, grid, reg, points, ens)
    glob = gct(sample, grid, reg, ens)
    bands = alp_bands(sample, grid, reg, points, ens, confidence)
    return loc, glob, bands


def compare(sample, grid, k, B, seed, points, confidence):
    loc, glob, bands = library(sample, grid, k, B, seed, points, confidence)
    ref = oracle.run(sample.features.tolist(), sample.values.tolist(), grid.tolist(), k, B, seed,
                     points.tolist(), 1 - confidence)
    assert [r.statistic for r in loc] == ref["T"]
    assert [r.null_statistics.tolist() for r in loc] == ref["T_null"]
    assert [r.p_value for r in loc] == ref["p"]
    assert glob.statistic == ref["S"]
    assert glob.null_statistics.tolist() == ref["S_null"]
    assert glob.p_value == ref["p_global"]
    assert [b.lower.tolist() for b in bands] == ref["lower"]
    assert [b.upper.tolist() for b in bands] == ref["upper"]


@pytest.mark.parametrize("seed,k,grid_size,B", [(1, 5, 3, 7), (2, 1, 4, 10), (3, 40, 2, 6)])
def test_matches_reference(seed, k, grid_size, B):
    X, Y = example1_data(40, seed)
    s = compute_calibration_sample(example1_model("f1_omitted"), X, Y)
    points = np.vstack([X[:5], [[0.0, 0.0], [1.0, -1.0]]])
    compare(s, alpha_grid(grid_size), k, B, seed, points, 0.6)


def test_reference_with_tied_distances():
    X = np.repeat(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]]), 4, axis=0)
    s = compute_calibration_sample(example1_model("f2_full"), X, np.linspace(-2, 2, 12))
    compare(s, alpha_grid(3), 5, 6, 0, np.array([[0.0, 0.0], [1.0, 0.5]]), 0.6)


def test_closed_form_oracle_sanity():
    # at the line x2 = 0.8 x1 the f1 model is only too wide: r(0.5) = 0.5
    assert oracle.closed_form_coverage(0.5, 1.0, 0.8) == pytest.approx(0.5)
    assert oracle.closed_form_coverage(0.5, 1.0, -1.0) > 0.95
