"""Regression of coverage indicators I(PIT < alpha) on features.

Both shipped regressors are linear smoothers whose weights depend on the
features only, never on the labels.  Fitting one multi-output model on the
``(n, |G|)`` indicator matrix is therefore the same as fitting one model per
level, and the null ensemble can reuse a single neighbourhood/weight
computation for every replicate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, clone
from sklearn.model_selection import GridSearchCV, KFold
from sklearn.utils.validation import check_array, check_is_fitted

__all__ = [
    "DegenerateDataError",
    "alpha_grid",
    "check_grid",
    "grid_codes",
    "build_indicators",
    "default_n_neighbors",
    "KNNCoverageRegressor",
    "KernelCoverageRegressor",
    "CoverageCurve",
    "coverage_curve",
    "select_n_neighbors",
]

DEFAULT_GRID_SIZE = 21
# Upper bound on elements materialised per distance block.
_BLOCK = 4_000_000


class DegenerateDataError(ValueError):
    """Training data cannot support the requested regression."""


def alpha_grid(size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """Equally spaced interior levels ``j / (size + 1)``, ``j = 1..size``."""
    if size < 1:
        raise ValueError("grid size must be positive")
    return np.arange(1, size + 1) / (size + 1)


def check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size < 1:
        raise ValueError("alpha grid is empty")
    if np.any(grid <= 0) or np.any(grid >= 1):
        raise ValueError("alpha levels must lie strictly inside (0, 1)")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("alpha levels must be strictly increasing")
    return grid


def grid_codes(values, grid) -> np.ndarray:
    """Number of levels ``<= value`` for each value.

    ``I(value < grid[j])`` equals ``codes <= j``, so one small integer per
    point encodes its whole indicator row.
    """
    return np.searchsorted(grid, np.asarray(values, dtype=float), side="right").astype(np.uint16)


def build_indicators(values, grid) -> np.ndarray:
    """``(n, |G|)`` matrix with entry ``(i, j) = I(values[i] < grid[j])``."""
    grid = check_grid(grid)
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size < 1:
        raise ValueError("no statistic values")
    return (values[:, None] < grid[None, :]).astype(float)


def default_n_neighbors(n: int) -> int:
    return min(n, max(20, math.ceil(n / 20)))


class _LinearSmoother(RegressorMixin, BaseEstimator):
    """Shared fit/validation for label-independent weight smoothers."""

    def _fit_features(self, X):
        X = check_array(X, dtype=float)
        if X.shape[0] < 1:
            raise DegenerateDataError("no training rows")
        self.n_features_in_ = X.shape[1]
        if self.standardize:
            self.center_ = X.mean(axis=0)
            scale = X.std(axis=0)
            self.scale_ = np.where(scale > 0, scale, 1.0)
            X = (X - self.center_) / self.scale_
        else:
            self.center_ = None
            self.scale_ = None
        self.X_fit_ = X
        return X

    def fit(self, X, y):
        X = self._fit_features(X)
        y = np.asarray(y, dtype=float)
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"{X.shape[0]} rows but {y.shape[0]} labels")
        self.y_fit_ = y
        self._check_params()
        return self

    def _check_params(self):
        pass

    def _transform(self, X):
        check_is_fitted(self, "X_fit_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, but the regressor was fitted on {self.n_features_in_}"
            )
        if self.scale_ is not None:
            X = (X - self.center_) / self.scale_
        return X

    def _sq_distances(self, Q):
        """Yield ``(rows, squared distances)`` blocks against the training set."""
        n, d = self.X_fit_.shape
        step = max(1, _BLOCK // max(1, n * d))
        for start in range(0, Q.shape[0], step):
            diff = Q[start:start + step, None, :] - self.X_fit_[None, :, :]
            yield slice(start, start + step), (diff ** 2).sum(axis=-1)


class KNNCoverageRegressor(_LinearSmoother):
    """k-nearest-neighbour mean of the training labels.

    Euclidean distance; among equidistant candidates the lower training
    index wins, so predictions do not depend on anything but the data.

    Parameters
    ----------
    n_neighbors : int or None
        ``None`` picks ``max(20, ceil(n / 20))`` at fit time (capped at n).
    standardize : bool
        Scale each feature to unit variance before measuring distances.
    """

    def __init__(self, n_neighbors=None, standardize=False):
        self.n_neighbors = n_neighbors
        self.standardize = standardize

    def _check_params(self):
        n = self.X_fit_.shape[0]
        k = default_n_neighbors(n) if self.n_neighbors is None else int(self.n_neighbors)
        if k < 1:
            raise ValueError("n_neighbors must be positive")
        if k > n:
            raise ValueError(f"n_neighbors={k} exceeds the {n} training rows")
        self.n_neighbors_ = k

    def fit(self, X, y=None):
        if y is None:
            self._fit_features(X)
            self.y_fit_ = None
            self._check_params()
            return self
        return super().fit(X, y)

    def kneighbors(self, X) -> np.ndarray:
        """Indices ``(m, k)`` of the nearest training rows, nearest first."""
        Q = self._transform(X)
        k = self.n_neighbors_
        out = np.empty((Q.shape[0], k), dtype=np.intp)
        for rows, D in self._sq_distances(Q):
            if k < D.shape[1]:
                part = np.argpartition(D, k - 1, axis=1)[:, :k]
            else:
                part = np.broadcast_to(np.arange(k), (D.shape[0], k)).copy()
            dsel = np.take_along_axis(D, part, axis=1)
            thr = dsel.max(axis=1)
            # rows with ties straddling the k-th distance get the stable order
            tied = np.flatnonzero((D <= thr[:, None]).sum(axis=1) > k)
            for r in tied:
                part[r] = np.argsort(D[r], kind="stable")[:k]
            part.sort(axis=1)
            dsel = np.take_along_axis(D, part, axis=1)
            order = np.argsort(dsel, axis=1, kind="stable")
            out[rows] = np.take_along_axis(part, order, axis=1)
        return out

    def predict(self, X):
        check_is_fitted(self, "y_fit_")
        if self.y_fit_ is None:
            raise ValueError("regressor was fitted without labels")
        idx = self.kneighbors(X)
        return self.y_fit_[idx].mean(axis=1)


class KernelCoverageRegressor(_LinearSmoother):
    """Nadaraya-Watson smoother with Gaussian kernel exp(-|x - x_i|^2 / (2 h^2)).

    Weights are shifted by the nearest training distance before
    exponentiation, so far-away queries do not underflow.  ``bandwidth=inf``
    gives equal weights (the global label mean).
    """

    def __init__(self, bandwidth=1.0, standardize=False):
        self.bandwidth = bandwidth
        self.standardize = standardize

    def _check_params(self):
        if not (self.bandwidth > 0):
            raise ValueError("bandwidth must be positive")

    def fit(self, X, y=None):
        if y is None:
            self._fit_features(X)
            self.y_fit_ = None
            self._check_params()
            return self
        return super().fit(X, y)

    def weights(self, X) -> np.ndarray:
        """Row-normalised smoother matrix of shape ``(m, n)``."""
        Q = self._transform(X)
        W = np.empty((Q.shape[0], self.X_fit_.shape[0]))
        two_h2 = 2.0 * float(self.bandwidth) ** 2
        for rows, D in self._sq_distances(Q):
            if math.isinf(two_h2):
                block = np.ones_like(D)
            else:
                block = np.exp(-(D - D.min(axis=1, keepdims=True)) / two_h2)
            total = block.sum(axis=1, keepdims=True)
            if not np.all(np.isfinite(total) & (total > 0)):
                raise DegenerateDataError("kernel weights vanish at a query point")
            W[rows] = block / total
        return W

    def predict(self, X):
        check_is_fitted(self, "y_fit_")
        if self.y_fit_ is None:
            raise ValueError("regressor was fitted without labels")
        Q = check_array(X, dtype=float)
        n = self.X_fit_.shape[0]
        step = max(1, _BLOCK // max(1, n))
        parts = [self.weights(Q[s:s + step]) @ self.y_fit_ for s in range(0, Q.shape[0], step)]
        return np.concatenate(parts, axis=0)


@dataclass(frozen=True)
class CoverageCurve:
    """Estimated P(PIT < alpha | x) at one point, aligned with ``levels``."""

    point: np.ndarray
    levels: np.ndarray
    estimates: np.ndarray


def coverage_curve(sample, grid, regressor, x) -> CoverageCurve:
    """Fit the per-level regressions on ``sample`` and evaluate them at ``x``."""
    grid = check_grid(grid)
    Z = build_indicators(sample.values, grid)
    fitted = clone(regressor).fit(sample.features, Z)
    x = np.asarray(x, dtype=float).reshape(1, -1)
    est = np.asarray(fitted.predict(x)).reshape(-1)
    return CoverageCurve(x[0], grid, np.clip(est, 0.0, 1.0))


def select_n_neighbors(features, values, grid, candidates, folds: int = 5, seed=0,
                       standardize=False) -> int:
    """Choose k by cross-validated squared error on the indicator matrix."""
    Z = build_indicators(values, check_grid(grid))
    n_train = features.shape[0] - math.ceil(features.shape[0] / folds)
    grid_k = sorted({int(k) for k in candidates if 1 <= int(k) <= n_train})
    if not grid_k:
        raise ValueError("no candidate k fits inside a training fold")
    search = GridSearchCV(
        KNNCoverageRegressor(standardize=standardize),
        {"n_neighbors": grid_k},
        scoring="neg_mean_squared_error",
        cv=KFold(folds, shuffle=True, random_state=seed),
    )
    search.fit(features, Z)
    return int(search.best_params_["n_neighbors"])
