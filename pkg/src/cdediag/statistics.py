"""PIT and HPD values of observed responses under a conditional density model."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .models import CapabilityError, ConditionalDensityModel, DimensionError

__all__ = [
    "PitValue",
    "HpdValue",
    "CalibrationSample",
    "InvalidCoordinateError",
    "pit",
    "pit_monte_carlo",
    "hpd",
    "project_response",
    "compute_calibration_sample",
    "pit_uniformity_test",
    "pit_from_draws",
    "DEFAULT_DRAWS",
]

DEFAULT_DRAWS = 10_000


class InvalidCoordinateError(IndexError):
    """Projection asked for a response coordinate the model does not have."""


@dataclass(frozen=True)
class PitValue:
    value: float
    method: str = "exact_cdf"
    mc_draws: int = 0


@dataclass(frozen=True)
class HpdValue:
    value: float
    mc_draws: int


@dataclass
class CalibrationSample:
    """Feature rows paired with their PIT or HPD values.

    Attributes
    ----------
    features : ndarray of shape (n, d)
    values : ndarray of shape (n,)
        Statistic values in [0, 1], in the same order as ``features``.
    kind : {"pit", "hpd"}
    method : {"exact_cdf", "monte_carlo", "precomputed"}
    mc_draws : int
        Draws per point for Monte Carlo values, 0 otherwise.
    """

    features: np.ndarray
    values: np.ndarray
    kind: str = "pit"
    method: str = "exact_cdf"
    mc_draws: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if features.ndim != 2 or features.shape[0] < 1:
            raise ValueError("a calibration sample needs at least one feature row")
        if features.shape[0] != values.shape[0]:
            raise ValueError(
                f"{features.shape[0]} feature rows but {values.shape[0]} statistic values"
            )
        if not np.all(np.isfinite(features)):
            raise ValueError("feature rows must be finite")
        if not np.all((values >= 0.0) & (values <= 1.0)):
            raise ValueError("statistic values must lie in [0, 1]")
        if self.kind not in ("pit", "hpd"):
            raise ValueError(f"unknown statistic kind {self.kind!r}")
        self.features = features
        self.values = values

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def __len__(self):
        return self.n


def pit(model: ConditionalDensityModel, y, x) -> PitValue:
    """Model CDF evaluated at the observed response."""
    if model.response_dim != 1:
        raise CapabilityError("PIT needs a scalar response; project vector responses first")
    if not (model.can_evaluate_cdf or model.can_evaluate_density):
        raise CapabilityError(
            f"{type(model).__name__} has no cdf or density; use pit_monte_carlo"
        )
    return PitValue(float(model.cdf(float(y), x)), "exact_cdf", 0)


def pit_monte_carlo(model: ConditionalDensityModel, y, x, draws: int = DEFAULT_DRAWS,
                    seed=0) -> PitValue:
    """Fraction of ``draws`` model samples at x that are <= y."""
    if not model.can_sample:
        raise CapabilityError(f"{type(model).__name__} cannot sample")
    if model.response_dim != 1:
        raise CapabilityError("PIT needs a scalar response; use project_response")
    if draws < 2:
        raise ValueError("need at least 2 draws")
    sims = model.sample(x, draws, seed)
    return PitValue(float(np.count_nonzero(sims <= float(y)) / draws), "monte_carlo", int(draws))


def hpd(model: ConditionalDensityModel, y, x, draws: int = DEFAULT_DRAWS, seed=0) -> HpdValue:
    """Monte Carlo mass of the region at least as dense as ``y``.

    Draws whose density ties with f(y | x) count toward the region.
    """
    if not (model.can_sample and model.can_evaluate_density):
        raise CapabilityError("HPD values need a model that samples and evaluates densities")
    if draws < 2:
        raise ValueError("need at least 2 draws")
    sims = model.sample(x, draws, seed)
    level = model.density(np.asarray(y, dtype=float), x)
    dens = np.asarray(model.density(sims, x))
    return HpdValue(float(np.count_nonzero(dens >= level) / draws), int(draws))


def _point_seed(seed, i):
    """Per-point seed so batch results do not depend on scheduling."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + (i,))
    base = list(seed) if isinstance(seed, (tuple, list)) else [int(seed)]
    return tuple(base + [int(i)])


def _map(func, n, n_jobs):
    if n_jobs is None or n_jobs <= 1 or n < 2:
        return [func(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(func, range(n)))


def _as_rows(X, Y, response_dim):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    Y = np.asarray(Y, dtype=float)
    if response_dim == 1:
        Y = Y.reshape(-1)
    elif Y.ndim != 2 or Y.shape[1] != response_dim:
        raise DimensionError(f"responses must have shape (n, {response_dim})")
    if X.shape[0] != Y.shape[0] or X.shape[0] < 1:
        raise ValueError("need a nonempty, aligned set of (x, y) pairs")
    return X, Y


def project_response(coordinate: int, X, Y, model: ConditionalDensityModel,
                     draws: int = DEFAULT_DRAWS, seed=0, n_jobs=None) -> CalibrationSample:
    """Monte Carlo PIT values of one response coordinate.

    Each point's model draws are projected onto ``coordinate`` (0-based) and
    compared with the same coordinate of the observed response.  Point ``i``
    uses the derived seed ``(seed, i)``.
    """
    p = model.response_dim
    if not isinstance(coordinate, (int, np.integer)) or not 0 <= coordinate < p:
        raise InvalidCoordinateError(
            f"coordinate {coordinate!r} is out of range for a {p}-dimensional response"
        )
    if not model.can_sample:
        raise CapabilityError(f"{type(model).__name__} cannot sample")
    X, Y = _as_rows(X, Y, p)
    obs = Y if p == 1 else Y[:, coordinate]

    def one(i):
        sims = model.sample(X[i], draws, _point_seed(seed, i))
        proj = sims if p == 1 else sims[:, coordinate]
        return np.count_nonzero(proj <= obs[i]) / draws

    values = np.array(_map(one, X.shape[0], n_jobs), dtype=float)
    return CalibrationSample(X, values, "pit", "monte_carlo", int(draws),
                             {"coordinate": int(coordinate)})


def compute_calibration_sample(model: ConditionalDensityModel, X, Y, kind: str = "pit", *,
                               method: str = "auto", draws: int = DEFAULT_DRAWS, seed=0,
                               n_jobs=None) -> CalibrationSample:
    """Statistic values for every test pair, order preserved.

    Parameters
    ----------
    kind : {"pit", "hpd"}
    method : {"auto", "exact", "monte_carlo"}
        For PIT, ``auto`` uses the model CDF (closed form or quadrature) when
        available and Monte Carlo otherwise.  HPD is always Monte Carlo.
    draws : int
        Monte Carlo draws per point.
    seed
        Master seed; point ``i`` uses ``(seed, i)``.
    """
    X, Y = _as_rows(X, Y, model.response_dim)
    n = X.shape[0]
    if kind == "pit":
        if model.response_dim != 1:
            raise CapabilityError("PIT needs a scalar response; use project_response")
        exact = model.can_evaluate_cdf or model.can_evaluate_density
        if method == "auto":
            method = "exact" if exact else "monte_carlo"
        if method == "exact":
            if not exact:
                raise CapabilityError(f"{type(model).__name__} has no cdf or density")
            values = np.asarray(model.cdf(Y, X), dtype=float).reshape(n)
            return CalibrationSample(X, np.clip(values, 0.0, 1.0), "pit", "exact_cdf", 0)
        if method != "monte_carlo":
            raise ValueError(f"unknown method {method!r}")
        vals = _map(lambda i: pit_monte_carlo(model, Y[i], X[i], draws, _point_seed(seed, i)).value,
                    n, n_jobs)
        return CalibrationSample(X, np.array(vals), "pit", "monte_carlo", int(draws))
    if kind == "hpd":
        vals = _map(lambda i: hpd(model, Y[i], X[i], draws, _point_seed(seed, i)).value, n, n_jobs)
        return CalibrationSample(X, np.array(vals), "hpd", "monte_carlo", int(draws))
    raise ValueError(f"unknown statistic kind {kind!r}")


def pit_from_draws(X, Y, draws) -> CalibrationSample:
    """Monte Carlo PIT values when row ``i`` of ``draws`` holds model draws at ``X[i]``.

    This is the usual layout of posterior samples exported by a
    simulation-based inference pipeline.
    """
    X, Y = _as_rows(X, Y, 1)
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 2 or draws.shape[0] != X.shape[0] or draws.shape[1] < 2:
        raise ValueError("draws must have shape (n, L) with L >= 2")
    values = np.count_nonzero(draws <= Y[:, None], axis=1) / draws.shape[1]
    return CalibrationSample(X, values, "pit", "monte_carlo", draws.shape[1])


def pit_uniformity_test(values):
    """Kolmogorov-Smirnov test of pooled PIT/HPD values against Unif(0, 1).

    This is the standard global check that ignores where in feature space
    each value came from.
    """
    return stats.kstest(np.asarray(values, dtype=float), "uniform")
