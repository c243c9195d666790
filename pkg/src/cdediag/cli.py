"""Command-line front end.

Subcommands: ``simulate``, ``pit``, ``gct``, ``lct``, ``alp``, ``print-config``.
Exit codes: 0 success, 2 input error, 3 capability error, 4 configuration error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import benchmarks
from .diagnostics import alp_bands, build_null_ensemble, gct, local_tests
from .fileio import InputError, read_table, write_csv, write_json
from .models import CapabilityError, DimensionError, GaussianLinearModel
from .plotting import pp_plot_svg
from .regression import (
    KernelCoverageRegressor,
    KNNCoverageRegressor,
    alpha_grid,
    select_n_neighbors,
)
from .statistics import CalibrationSample, compute_calibration_sample, pit_from_draws

log = logging.getLogger("cdediag")

EXIT_INPUT, EXIT_CAPABILITY, EXIT_CONFIG = 2, 3, 4
MIN_NULL = 20
SCENARIOS = ("example1", "two_population", "transform_counterexample")
CV_CANDIDATES = (10, 20, 30, 50, 75, 100, 150, 200, 300)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = "print-config"
    input: str | None = None
    model: str | None = None
    statistic: str = "pit"
    grid_size: int = 21
    regressor: str = "knn"
    k: int | str | None = None
    bandwidth: float = 0.3
    standardize: bool = False
    B: int | None = None
    eta: float = 0.05
    L: int = 10_000
    seed: int = 0
    points: str | None = None
    out: str = "cdediag-out"
    workers: int | None = None
    scenario: str = "example1"
    n: int = 1000
    feature_dim: int = 3
    transform: str = "x1"

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @property
    def n_null(self) -> int:
        if self.B is not None:
            return self.B
        return 200 if self.command == "alp" else 500

    def validate(self):
        if self.grid_size < 1:
            raise ConfigError("--grid-size must be positive")
        if self.regressor not in ("knn", "kernel"):
            raise ConfigError("--regressor must be knn or kernel")
        if self.k is not None and self.k != "cv" and int(self.k) < 1:
            raise ConfigError("--k must be positive or 'cv'")
        if not 0 < self.bandwidth < math.inf:
            raise ConfigError("--bandwidth must be positive and finite")
        if not 0 < self.eta < 1:
            raise ConfigError("--eta must lie in (0, 1)")
        if self.L < 2:
            raise ConfigError("--L must be at least 2")
        if self.statistic not in ("pit", "hpd"):
            raise ConfigError("--statistic must be pit or hpd")
        if self.command in ("gct", "lct", "alp"):
            if self.n_null < MIN_NULL:
                raise ConfigError(f"B={self.n_null} is below {MIN_NULL}; p-value resolution "
                                  "would be too coarse")
            if self.command == "alp" and self.n_null < math.ceil(2 / self.eta):
                raise ConfigError(f"eta={self.eta} needs B >= {math.ceil(2 / self.eta)}")
        return self


def build_parser():
    parser = argparse.ArgumentParser(prog="cdediag", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    def common(p):
        p.add_argument("--config", default=S, help="JSON config file (flags override it)")
        p.add_argument("--input", default=S)
        p.add_argument("--model", default=S,
                       help="example1-f1, example1-f2, two-population-majority, "
                            "gaussian:W1,W2,..:B:SD or samples:PATH")
        p.add_argument("--statistic", choices=("pit", "hpd"), default=S)
        p.add_argument("--grid-size", dest="grid_size", type=int, default=S)
        p.add_argument("--regressor", choices=("knn", "kernel"), default=S)
        p.add_argument("--k", default=S, help="neighbours for knn, or 'cv'")
        p.add_argument("--bandwidth", type=float, default=S)
        p.add_argument("--standardize", action="store_true", default=S)
        p.add_argument("--B", type=int, default=S, help="null replicates")
        p.add_argument("--eta", type=float, default=S)
        p.add_argument("--L", type=int, default=S, help="Monte Carlo draws per point")
        p.add_argument("--seed", type=int, default=S)
        p.add_argument("--points", default=S, help="CSV of evaluation points")
        p.add_argument("--out", default=S, help="output directory")
        p.add_argument("--workers", type=int, default=S)
        return p

    common(sub.add_parser("pit", help="compute PIT/HPD values for a dataset"))
    common(sub.add_parser("gct", help="global coverage test"))
    common(sub.add_parser("lct", help="local coverage tests at evaluation points"))
    common(sub.add_parser("alp", help="local P-P plots with null bands"))
    sim = common(sub.add_parser("simulate", help="write a benchmark dataset"))
    sim.add_argument("--scenario", default=S)
    sim.add_argument("--n", type=int, default=S)
    sim.add_argument("--feature-dim", dest="feature_dim", type=int, default=S)
    sim.add_argument("--transform", default=S)
    common(sub.add_parser("print-config", help="print the effective configuration"))
    return parser


def resolve_config(args) -> RunConfig:
    values = RunConfig().to_dict()
    flags = vars(args).copy()
    cfg_path = flags.pop("config", None)
    if cfg_path:
        try:
            with open(cfg_path, encoding="utf-8") as fh:
                from_file = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {cfg_path}: {exc}") from None
        from_file.pop("command", None)
        values.update(RunConfig.from_dict({**RunConfig().to_dict(), **from_file}).to_dict())
    values.update(flags)
    cfg = RunConfig.from_dict(values)
    if cfg.k not in (None, "cv"):
        try:
            cfg.k = int(cfg.k)
        except ValueError:
            raise ConfigError(f"--k must be an integer or 'cv', got {cfg.k!r}") from None
    if cfg.workers is None:
        cfg.workers = os.cpu_count() or 1
    return cfg.validate()


def _out_dir(cfg):
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _regressor(cfg, sample):
    if cfg.regressor == "kernel":
        return KernelCoverageRegressor(bandwidth=cfg.bandwidth, standardize=cfg.standardize)
    k = cfg.k
    if k == "cv":
        k = select_n_neighbors(sample.features, sample.values, alpha_grid(cfg.grid_size),
                               CV_CANDIDATES, seed=cfg.seed, standardize=cfg.standardize)
        log.info("cross-validated n_neighbors=%d", k)
    if k is not None and k > sample.n:
        raise ConfigError(f"--k={k} exceeds the {sample.n} rows")
    return KNNCoverageRegressor(n_neighbors=k, standardize=cfg.standardize)


def _model(spec, d):
    if spec is None:
        raise ConfigError("--model is required to compute statistics from raw responses")
    if spec in ("example1-f1", "example1-f2"):
        model = benchmarks.example1_model("f1_omitted" if spec.endswith("f1") else "f2_full")
    elif spec == "two-population-majority":
        model = benchmarks.majority_posterior_model(d)
    elif spec.startswith("gaussian:"):
        try:
            _, w, b, sd = spec.split(":")
            model = GaussianLinearModel([float(v) for v in w.split(",")], float(b), float(sd))
        except ValueError:
            raise ConfigError(f"bad analytic model spec {spec!r}; "
                              "expected gaussian:W1,W2,..:B:SD") from None
    else:
        raise ConfigError(f"unknown model {spec!r}")
    if model.feature_dim != d:
        raise DimensionError(f"model expects {model.feature_dim} features, data has {d}")
    return model


def _read_draws(path, n):
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not all(h.strip().startswith("s_") for h in rows[0]):
        raise InputError("sample file header must be s_1..s_L", line=1, path=path)
    draws = []
    for line_no, row in enumerate(rows[1:], start=2):
        try:
            draws.append([float(v) for v in row])
        except ValueError:
            raise InputError("non-numeric draw", line=line_no, path=path) from None
        if len(row) != len(rows[0]):
            raise InputError(f"expected {len(rows[0])} draws", line=line_no, path=path)
    if len(draws) != n:
        raise InputError(f"sample file has {len(draws)} rows, data has {n}", path=path)
    return np.array(draws)


def _feature_header(d):
    return [f"x_{j}" for j in range(1, d + 1)]


def cmd_pit(cfg):
    if cfg.input is None:
        raise ConfigError("--input is required")
    table = read_table(cfg.input, require_response=True)
    if table.statistic is not None:
        sample = CalibrationSample(table.features, table.statistic, table.statistic_kind,
                                   "precomputed")
    elif cfg.model and cfg.model.startswith("samples:"):
        if cfg.statistic != "pit":
            raise CapabilityError("posterior-sample files support PIT only")
        draws = _read_draws(cfg.model.split(":", 1)[1], table.n)
        sample = pit_from_draws(table.features, table.response, draws)
    else:
        model = _model(cfg.model, table.features.shape[1])
        sample = compute_calibration_sample(model, table.features, table.response,
                                            cfg.statistic, draws=cfg.L, seed=cfg.seed,
                                            n_jobs=cfg.workers)
    out = _out_dir(cfg) / "calibration.csv"
    header = _feature_header(sample.features.shape[1]) + [sample.kind]
    write_csv(out, header, (list(x) + [v] for x, v in zip(sample.features, sample.values)))
    print(f"wrote {sample.n} {sample.kind.upper()} values to {out}")
    return 0


def _calibration(cfg):
    if cfg.input is None:
        raise ConfigError("--input is required")
    table = read_table(cfg.input, require_statistic=True)
    return CalibrationSample(table.features, table.statistic, table.statistic_kind, "precomputed")


def _points(cfg, sample, required=False):
    if cfg.points is None:
        if required:
            raise ConfigError("--points is required")
        return sample.features
    pts = read_table(cfg.points).features
    if pts.shape[1] != sample.features.shape[1]:
        raise DimensionError(f"points have {pts.shape[1]} features, data has "
                             f"{sample.features.shape[1]}")
    return pts


def _report_header(cfg, sample, grid, reg):
    return {
        "schema_version": "1.0",
        "n_null": cfg.n_null,
        "levels": [float(a) for a in grid],
        "statistic_kind": sample.kind,
        "regressor": {"kind": cfg.regressor, **{k: v for k, v in reg.get_params().items()}},
        "seed": cfg.seed,
    }


def _setup(cfg):
    sample = _calibration(cfg)
    grid = alpha_grid(cfg.grid_size)
    reg = _regressor(cfg, sample)
    ensemble = build_null_ensemble(sample.features, grid, reg, cfg.n_null, cfg.seed, cfg.workers)
    return sample, grid, reg, ensemble


def cmd_gct(cfg):
    sample, grid, reg, ensemble = _setup(cfg)
    res = gct(sample, grid, reg, ensemble)
    report = {**_report_header(cfg, sample, grid, reg), **res.to_dict(), "n": sample.n}
    write_json(_out_dir(cfg) / "gct.json", report)
    print(f"GCT p-value: {res.p_value:.4g} (B={cfg.n_null})")
    return 0


def cmd_lct(cfg):
    sample, grid, reg, ensemble = _setup(cfg)
    pts = _points(cfg, sample)
    results = local_tests(sample, grid, reg, pts, ensemble)
    out = _out_dir(cfg)
    d = pts.shape[1]
    write_csv(out / "lct.csv", _feature_header(d) + ["T", "p_value"],
              (list(r.point) + [r.statistic, r.p_value] for r in results))
    write_json(out / "lct.json", {**_report_header(cfg, sample, grid, reg),
                                  "results": [r.to_dict() for r in results]})
    n_rej = sum(r.p_value < 0.05 for r in results)
    print(f"LCT: {n_rej}/{len(results)} points with p < 0.05 (B={cfg.n_null})")
    return 0


def cmd_alp(cfg):
    sample, grid, reg, ensemble = _setup(cfg)
    pts = _points(cfg, sample, required=True)
    bands = alp_bands(sample, grid, reg, pts, ensemble, confidence=1 - cfg.eta)
    out = _out_dir(cfg)
    for i, band in enumerate(bands, start=1):
        write_csv(out / f"alp_{i}.csv", ["alpha", "estimate", "lower", "upper"],
                  zip(band.levels, band.estimate, band.lower, band.upper))
        pp_plot_svg(band, out / f"alp_{i}.svg")
        print(f"point {i} ({', '.join(f'{v:.3g}' for v in band.point)}): {band.label}")
    write_json(out / "alp.json", {**_report_header(cfg, sample, grid, reg),
                                  "bands": [b.to_dict() for b in bands]})
    return 0


def cmd_simulate(cfg):
    if cfg.scenario not in SCENARIOS:
        raise InputError(f"unknown scenario {cfg.scenario!r}; choose from {', '.join(SCENARIOS)}")
    if cfg.n < 1:
        raise ConfigError("--n must be positive")
    out = _out_dir(cfg)
    if cfg.scenario == "two_population":
        data = benchmarks.two_population_data(cfg.n, cfg.feature_dim, cfg.seed)
        X, y = data.features, data.response
        extra = {"group": data.minority.astype(int)}
        params = {"major_weight": benchmarks.MAJOR_WEIGHT,
                  "axis_ratios": [benchmarks.MAJOR_AXIS_RATIO, benchmarks.MINOR_AXIS_RATIO],
                  "major_sd": benchmarks.MAJOR_SD,
                  "laplace_scales": list(benchmarks.LAPLACE_SCALES),
                  "indicator_noise": benchmarks.INDICATOR_NOISE,
                  "feature_dim": cfg.feature_dim}
    else:
        X, y = benchmarks.example1_data(cfg.n, cfg.seed)
        extra = {}
        params = {"rho": benchmarks.RHO, "noise_sd": benchmarks.NOISE_SD,
                  "covariance": benchmarks.EXAMPLE1_COV.tolist()}
        if cfg.scenario == "transform_counterexample":
            g = cfg.transform
            if "," in g:
                g = [float(v) for v in g.split(",")]
            try:
                _, model = benchmarks.covariate_transform_counterexample(g)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            params.update({"transform": cfg.transform,
                           "model": {"weight": model.weight.tolist(),
                                     "intercept": model.intercept,
                                     "noise_sd": model.noise_sd}})
    header = _feature_header(X.shape[1]) + ["y"] + list(extra)
    cols = [extra[k] for k in extra]
    write_csv(out / "data.csv", header,
              (list(X[i]) + [y[i]] + [c[i] for c in cols] for i in range(X.shape[0])))
    write_json(out / "manifest.json", {"schema_version": "1.0", "scenario": cfg.scenario,
                                       "n": cfg.n, "seed": cfg.seed, "parameters": params,
                                       "files": ["data.csv"]})
    print(f"wrote {cfg.n} rows to {out / 'data.csv'}")
    return 0


def cmd_print_config(cfg):
    print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return 0


COMMANDS = {
    "pit": cmd_pit,
    "gct": cmd_gct,
    "lct": cmd_lct,
    "alp": cmd_alp,
    "simulate": cmd_simulate,
    "print-config": cmd_print_config,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    try:
        cfg = resolve_config(args)
        return COMMANDS[cfg.command](cfg)
    except (InputError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CapabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    finally:
        log.removeHandler(handler)

if __name__ == "__main__":
    sys.exit(main())
