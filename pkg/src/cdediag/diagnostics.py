"""Local and global coverage tests and amortized local P-P plots.

The expensive part of every diagnostic is simulating the regression under
the null, where the statistic values are i.i.d. Unif(0, 1) draws.  A
:class:`NullEnsemble` does that once for a fixed set of feature rows; the
local test, the global test and the P-P plot bands all read from the same
ensemble at any number of evaluation points without refitting.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_array, check_is_fitted

from .regression import (
    KernelCoverageRegressor,
    KNNCoverageRegressor,
    alpha_grid,
    check_grid,
    grid_codes,
)
from .statistics import CalibrationSample

__all__ = [
    "EnsembleMismatchError",
    "NullEnsemble",
    "LocalTestResult",
    "GlobalTestResult",
    "AlpBand",
    "local_statistic",
    "build_null_ensemble",
    "observed_curves",
    "lct",
    "local_tests",
    "gct",
    "alp",
    "alp_bands",
    "interpret_band",
    "linear_quantile",
    "CoverageDiagnostics",
    "SCHEMA_VERSION",
]

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
BAND_LABELS = ("consistent", "positive_bias", "negative_bias",
               "overdispersed", "underdispersed", "mixed")

# Max elements in one (replicates x points x neighbours) gather.
_GATHER = 8_000_000


class EnsembleMismatchError(ValueError):
    """Ensemble was built for different features, grid or regressor."""


def _replicate_seed(master_seed, b):
    return np.random.SeedSequence([int(master_seed), int(b)])


def replicate_uniforms(master_seed, b, n) -> np.ndarray:
    """The ``n`` Unif(0, 1) pseudo-statistics of null replicate ``b``."""
    return np.random.default_rng(_replicate_seed(master_seed, b)).random(n)


def local_statistic(estimates, grid):
    """Mean squared distance of coverage estimates from the diagonal.

    ``estimates`` has the grid along its last axis; levels are accumulated
    in grid order.
    """
    grid = np.asarray(grid, dtype=float)
    est = np.asarray(estimates, dtype=float)
    acc = np.zeros(est.shape[:-1])
    for j, a in enumerate(grid):
        acc = acc + (est[..., j] - a) ** 2
    out = acc / grid.size
    return float(out) if out.ndim == 0 else out


def linear_quantile(values, q, axis=0):
    """Quantile by linear interpolation between order statistics.

    For ``B`` values the ``q`` quantile sits at position ``h = (B - 1) q``
    of the sorted values: ``v[floor(h)] + (h - floor(h)) (v[floor(h)+1] - v[floor(h)])``.
    """
    v = np.sort(np.asarray(values, dtype=float), axis=axis)
    B = v.shape[axis]
    h = (B - 1) * float(q)
    lo = int(math.floor(h))
    hi = min(lo + 1, B - 1)
    t = h - lo
    a = np.take(v, lo, axis=axis)
    b = np.take(v, hi, axis=axis)
    return a + t * (b - a)


def _params_equal(a, b):
    if type(a) is not type(b):
        return False
    pa, pb = a.get_params(deep=False), b.get_params(deep=False)
    return pa.keys() == pb.keys() and all(
        (pa[k] == pb[k]) or (pa[k] is None and pb[k] is None) for k in pa
    )


class _Smoother:
    """Evaluation of coverage curves for a batch of label codes.

    Codes follow :func:`grid_codes`: row ``r`` of the labels for level
    ``j`` is ``codes[r] <= j``.
    """

    def __init__(self, regressor, features, grid):
        self.grid = grid
        self.G = grid.size
        self.regressor = clone(regressor)
        if isinstance(self.regressor, (KNNCoverageRegressor, KernelCoverageRegressor)):
            self.regressor.fit(features)
            self.kind = "knn" if isinstance(self.regressor, KNNCoverageRegressor) else "kernel"
        else:
            self.kind = "generic"
        self.features = features

    def prepare(self, points):
        """Label-independent state for evaluating at ``points``."""
        if self.kind == "knn":
            return self.regressor.kneighbors(points)
        if self.kind == "kernel":
            return self.regressor.weights(points)
        return points

    def curves(self, codes, state):
        """Curves of shape ``(len(codes), m, G)`` for a ``(r, n)`` code block."""
        G = self.G
        if self.kind == "knn":
            idx = state
            m, k = idx.shape
            r = codes.shape[0]
            offsets = np.arange(r * m, dtype=np.intp)[:, None] * (G + 1)
            flat = (offsets + codes[:, idx].reshape(r * m, k)).ravel()
            counts = np.bincount(flat, minlength=r * m * (G + 1)).reshape(r, m, G + 1)
            return np.cumsum(counts, axis=-1)[..., :G] / k
        levels = np.arange(G)
        Z = (codes[:, :, None] <= levels).astype(float)  # (r, n, G)
        if self.kind == "kernel":
            W = state
            out = W @ Z.transpose(1, 0, 2).reshape(Z.shape[1], -1)  # (m, r*G)
            return out.reshape(W.shape[0], codes.shape[0], G).transpose(1, 0, 2)
        out = []
        for z in Z:
            fitted = clone(self.regressor).fit(self.features, z)
            out.append(np.asarray(fitted.predict(state)).reshape(-1, G))
        return np.clip(np.stack(out), 0.0, 1.0)


@dataclass
class NullEnsemble:
    """Null replicates of the coverage regression on fixed feature rows.

    Replicate ``b`` regresses the indicators of ``U^(b) < alpha`` on the
    features, where ``U^(b)`` are ``n`` uniforms drawn from the seed
    ``(master_seed, b)``.  The uniforms are stored in coded form (one small
    integer per row, see :func:`grid_codes`).
    """

    features: np.ndarray
    grid: np.ndarray
    regressor: BaseEstimator
    n_null: int
    master_seed: int
    codes: np.ndarray
    n_jobs: int | None = None
    _smoother: _Smoother = field(default=None, repr=False)

    def __post_init__(self):
        if self._smoother is None:
            self._smoother = _Smoother(self.regressor, self.features, self.grid)

    @property
    def n_regressors(self) -> int:
        """Number of per-level, per-replicate regressions represented."""
        return self.n_null * self.grid.size

    def _blocks(self, m, k):
        per = max(1, _GATHER // max(1, m * k))
        return [(s, min(s + per, self.n_null)) for s in range(0, self.n_null, per)]

    def prepare(self, points):
        """Label-independent evaluation state, shareable between calls."""
        return self._smoother.prepare(check_array(points, dtype=float))

    def _run(self, points, reduce, state=None):
        points = check_array(points, dtype=float)
        if state is None:
            state = self._smoother.prepare(points)
        k = state.shape[1] if self._smoother.kind == "knn" else self.grid.size * 8
        blocks = self._blocks(points.shape[0], k)

        def work(block):
            s, e = block
            return reduce(self._smoother.curves(self.codes[s:e], state))

        if self.n_jobs and self.n_jobs > 1 and len(blocks) > 1:
            with ThreadPoolExecutor(max_workers=self.n_jobs) as pool:
                parts = list(pool.map(work, blocks))
        else:
            parts = [work(b) for b in blocks]
        return np.concatenate(parts, axis=0)

    def null_curves(self, points, state=None) -> np.ndarray:
        """Null coverage estimates of shape ``(n_null, m, |G|)``."""
        return self._run(points, lambda c: c, state)

    def null_statistics(self, points, state=None) -> np.ndarray:
        """Null local statistics of shape ``(n_null, m)``."""
        return self._run(points, lambda c: local_statistic(c, self.grid), state)

    def check_compatible(self, features, grid, regressor):
        if not (np.array_equal(np.asarray(grid, dtype=float), self.grid)):
            raise EnsembleMismatchError("alpha grid differs from the ensemble's")
        if not np.array_equal(np.asarray(features, dtype=float), self.features):
            raise EnsembleMismatchError("feature rows differ from the ensemble's")
        if not _params_equal(regressor, self.regressor):
            raise EnsembleMismatchError("regressor specification differs from the ensemble's")


def build_null_ensemble(features, grid, regressor, n_null: int = 500, master_seed=0,
                        n_jobs=None) -> NullEnsemble:
    """Simulate ``n_null`` null replicates of the coverage regression."""
    features = check_array(features, dtype=float)
    grid = check_grid(grid)
    if int(n_null) < 1:
        raise ValueError("need at least one null replicate")
    n = features.shape[0]
    log.info("fitting null ensemble: B=%d, |G|=%d, n=%d", n_null, grid.size, n)
    codes = np.empty((int(n_null), n), dtype=np.uint16)
    for b in range(int(n_null)):
        codes[b] = grid_codes(replicate_uniforms(master_seed, b, n), grid)
    return NullEnsemble(features, grid, clone(regressor), int(n_null), int(master_seed),
                        codes, n_jobs)


def observed_curves(sample: CalibrationSample, grid, regressor, points, ensemble=None,
                    state=None):
    """Coverage estimates ``(m, |G|)`` from the observed statistic values."""
    grid = check_grid(grid)
    if ensemble is not None:
        smoother = ensemble._smoother
    else:
        smoother = _Smoother(regressor, sample.features, grid)
    points = check_array(points, dtype=float)
    if state is None:
        state = smoother.prepare(points)
    codes = grid_codes(sample.values, grid)[None, :]
    return smoother.curves(codes, state)[0]


@dataclass
class LocalTestResult:
    point: np.ndarray
    statistic: float
    null_statistics: np.ndarray
    p_value: float

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "point": [float(v) for v in self.point],
            "statistic": float(self.statistic),
            "null_statistics": [float(v) for v in self.null_statistics],
            "p_value": float(self.p_value),
        }


@dataclass
class GlobalTestResult:
    statistic: float
    null_statistics: np.ndarray
    p_value: float

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "statistic": float(self.statistic),
            "null_statistics": [float(v) for v in self.null_statistics],
            "p_value": float(self.p_value),
        }


@dataclass
class AlpBand:
    point: np.ndarray
    levels: np.ndarray
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    confidence: float

    @property
    def label(self) -> str:
        return interpret_band(self)

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "point": [float(v) for v in self.point],
            "levels": [float(v) for v in self.levels],
            "estimate": [float(v) for v in self.estimate],
            "lower": [float(v) for v in self.lower],
            "upper": [float(v) for v in self.upper],
            "confidence": float(self.confidence),
            "label": self.label,
        }


def _p_value(stat, null):
    return np.count_nonzero(stat < null, axis=0) / null.shape[0]


def local_tests(sample, grid, regressor, points, ensemble) -> list[LocalTestResult]:
    """Local coverage tests at every row of ``points``."""
    grid = check_grid(grid)
    ensemble.check_compatible(sample.features, grid, regressor)
    points = check_array(points, dtype=float)
    state = ensemble.prepare(points)
    T = local_statistic(observed_curves(sample, grid, regressor, points, ensemble, state), grid)
    T = np.atleast_1d(T)
    null = ensemble.null_statistics(points, state)
    p = _p_value(T[None, :], null)
    return [LocalTestResult(points[i].copy(), float(T[i]), null[:, i].copy(), float(p[i]))
            for i in range(points.shape[0])]


def lct(sample, grid, regressor, x, ensemble) -> LocalTestResult:
    """Local coverage test at one point."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return local_tests(sample, grid, regressor, x, ensemble)[0]


def gct(sample, grid, regressor, ensemble) -> GlobalTestResult:
    """Global coverage test: average local statistic over the test features."""
    grid = check_grid(grid)
    ensemble.check_compatible(sample.features, grid, regressor)
    X = sample.features
    state = ensemble.prepare(X)
    T = np.atleast_1d(local_statistic(
        observed_curves(sample, grid, regressor, X, ensemble, state), grid))
    S = math.fsum(T) / X.shape[0]
    null_T = ensemble.null_statistics(X, state)
    null_S = np.array([math.fsum(row) / X.shape[0] for row in null_T])
    return GlobalTestResult(S, null_S, float(_p_value(S, null_S)))


def alp_bands(sample, grid, regressor, points, ensemble, confidence: float = 0.95):
    """Local P-P curves with null bands at every row of ``points``."""
    grid = check_grid(grid)
    ensemble.check_compatible(sample.features, grid, regressor)
    eta = 1.0 - float(confidence)
    if not 0 < eta <= 1:
        raise ValueError("confidence must lie in [0, 1)")
    need = math.ceil(2.0 / eta - 1e-9)
    if ensemble.n_null < need:
        raise ValueError(f"confidence {confidence} needs at least {need} null replicates, "
                         f"ensemble has {ensemble.n_null}")
    points = check_array(points, dtype=float)
    state = ensemble.prepare(points)
    est = observed_curves(sample, grid, regressor, points, ensemble, state)
    null = ensemble.null_curves(points, state)
    lower = linear_quantile(null, eta / 2, axis=0)
    upper = linear_quantile(null, 1 - eta / 2, axis=0)
    return [AlpBand(points[i].copy(), grid.copy(), est[i], lower[i], upper[i], float(confidence))
            for i in range(points.shape[0])]


def alp(sample, grid, regressor, x, ensemble, confidence: float = 0.95) -> AlpBand:
    """Amortized local P-P plot with null band at one point."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return alp_bands(sample, grid, regressor, x, ensemble, confidence)[0]


def interpret_band(band: AlpBand) -> str:
    """Classify how a local P-P curve leaves its null band.

    ``consistent``: inside everywhere.  ``positive_bias`` / ``negative_bias``:
    above (below) the band on a majority of levels and never on the other
    side.  ``overdispersed`` / ``underdispersed``: escapes on both sides with a
    single change of side, below-then-above (above-then-below) in alpha.
    Anything else is ``mixed``.
    """
    est = np.asarray(band.estimate)
    above = est > np.asarray(band.upper)
    below = est < np.asarray(band.lower)
    G = est.size
    if not above.any() and not below.any():
        return "consistent"
    if not below.any() and above.sum() > G / 2:
        return "positive_bias"
    if not above.any() and below.sum() > G / 2:
        return "negative_bias"
    if above.any() and below.any():
        side = np.where(above, 1, 0) - np.where(below, 1, 0)
        side = side[side != 0]
        if np.count_nonzero(np.diff(side)) == 1:
            return "overdispersed" if side[0] < 0 else "underdispersed"
    return "mixed"


class CoverageDiagnostics(BaseEstimator):
    """Estimator front end for the coverage diagnostics.

    ``fit(X, values)`` takes feature rows and their PIT (or HPD) values,
    builds the null ensemble once, and then serves local tests, the global
    test, P-P bands and raw coverage curves at arbitrary points.

    Parameters
    ----------
    grid_size : int
        Number of equally spaced alpha levels.
    regressor : estimator or None
        Coverage regressor; defaults to :class:`KNNCoverageRegressor`.
    n_null : int
        Null replicates ``B``.
    random_state : int
        Master seed of the null ensemble.
    n_jobs : int or None
        Worker threads for null evaluation.
    statistic : {"pit", "hpd"}

    Examples
    --------
    >>> diag = CoverageDiagnostics(n_null=200).fit(X, pit_values)  # doctest: +SKIP
    >>> diag.global_test().p_value  # doctest: +SKIP
    """

    def __init__(self, grid_size=21, regressor=None, n_null=500, random_state=0, n_jobs=None,
                 statistic="pit"):
        self.grid_size = grid_size
        self.regressor = regressor
        self.n_null = n_null
        self.random_state = random_state
        self.n_jobs = n_jobs
        self.statistic = statistic

    def fit(self, X, values):
        X = check_array(X, dtype=float)
        self.sample_ = CalibrationSample(X, values, self.statistic, "precomputed")
        self.grid_ = alpha_grid(self.grid_size)
        self.regressor_ = KNNCoverageRegressor() if self.regressor is None else clone(self.regressor)
        self.ensemble_ = build_null_ensemble(X, self.grid_, self.regressor_, self.n_null,
                                             self.random_state, self.n_jobs)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        """Observed coverage curves, shape ``(m, grid_size)``."""
        check_is_fitted(self, "ensemble_")
        return observed_curves(self.sample_, self.grid_, self.regressor_, X, self.ensemble_)

    def local_statistic(self, X):
        return np.atleast_1d(local_statistic(self.predict(X), self.grid_))

    def local_test(self, X) -> list[LocalTestResult]:
        check_is_fitted(self, "ensemble_")
        return local_tests(self.sample_, self.grid_, self.regressor_, X, self.ensemble_)

    def global_test(self) -> GlobalTestResult:
        check_is_fitted(self, "ensemble_")
        return gct(self.sample_, self.grid_, self.regressor_, self.ensemble_)

    def pp_plot(self, X, confidence=0.95) -> list[AlpBand]:
        check_is_fitted(self, "ensemble_")
        return alp_bands(self.sample_, self.grid_, self.regressor_, X, self.ensemble_, confidence)
