"""Synthetic data with known conditional laws.

``example1``: two correlated Gaussian covariates and a response that depends
on both.  A model that conditions on ``x1`` alone is exactly the law of
``Y | X1``, so its PIT values are marginally uniform although it is wrong
almost everywhere in feature space.

``two_population``: a structural stand-in for simulation-based posterior
inference with a 90/10 mixture of populations.  It is not a galaxy-image
simulator; the features are a noisy population indicator, a location
summary and nuisance coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import GaussianLinearModel, make_rng

__all__ = [
    "RHO",
    "EXAMPLE1_COV",
    "example1_data",
    "example1_model",
    "omitted_variable_bias",
    "conditional_model",
    "covariate_transform_counterexample",
    "TwoPopulationData",
    "two_population_data",
    "majority_posterior_model",
]

RHO = 0.8
NOISE_SD = 1.0
EXAMPLE1_COV = np.array([[1.0, RHO], [RHO, 1.0]])
_COEF = np.array([1.0, 1.0])

MAJOR_WEIGHT = 0.9
MAJOR_AXIS_RATIO = 0.7
MINOR_AXIS_RATIO = 0.1
MAJOR_SD = 0.05
LAPLACE_SCALES = (0.05, 0.0005)
INDICATOR_NOISE = 0.1


def example1_data(n: int, seed):
    """``X ~ N(0, [[1, .8], [.8, 1]])`` and ``Y | X ~ N(X1 + X2, 1)``."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = make_rng(seed)
    X = rng.multivariate_normal(np.zeros(2), EXAMPLE1_COV, size=int(n), method="cholesky")
    Y = X @ _COEF + NOISE_SD * rng.standard_normal(int(n))
    return X, Y


def conditional_model(transform) -> GaussianLinearModel:
    """Exact law of ``Y`` given ``g(X) = transform @ X`` under example1.

    ``(X, Y)`` is jointly Gaussian, so ``Y | g(X)`` is Gaussian with mean
    linear in ``x`` and constant variance.
    """
    B = np.atleast_2d(np.asarray(transform, dtype=float))
    if B.shape[1] != 2:
        raise ValueError("transform must act on the two example1 covariates")
    var_g = B @ EXAMPLE1_COV @ B.T
    cov_gy = B @ EXAMPLE1_COV @ _COEF
    var_y = _COEF @ EXAMPLE1_COV @ _COEF + NOISE_SD ** 2
    solve = np.linalg.pinv(var_g) @ cov_gy
    weight = B.T @ solve
    resid = var_y - cov_gy @ solve
    return GaussianLinearModel(weight, 0.0, float(np.sqrt(resid)))


def example1_model(which: str) -> GaussianLinearModel:
    """``f2_full`` is the truth; ``f1_omitted`` is the law of ``Y | X1``."""
    if which == "f2_full":
        return GaussianLinearModel(_COEF, 0.0, NOISE_SD)
    if which == "f1_omitted":
        return conditional_model([[1.0, 0.0]])
    raise ValueError(f"unknown example1 model {which!r}")


def omitted_variable_bias(x):
    """``E[Y | x1] - E[Y | x1, x2] = 0.8 x1 - x2``."""
    x = np.asarray(x, dtype=float)
    return RHO * x[..., 0] - x[..., 1]


def _transform_matrix(g):
    if isinstance(g, str):
        if g == "identity":
            return np.eye(2)
        if g in ("x1", "x2"):
            return np.eye(2)[[int(g[1]) - 1]]
        raise ValueError(f"unknown transform {g!r}")
    g = np.asarray(g)
    if g.dtype.kind in "iu" and g.ndim == 1:
        return np.eye(2)[g]
    return np.atleast_2d(g.astype(float))


def covariate_transform_counterexample(g="x1"):
    """Example1 generator paired with the model ``f(y | g(x))``.

    ``g`` is ``"identity"``, ``"x1"``/``"x2"``, an integer array of kept
    coordinates, or a linear map given as a ``(q, 2)`` matrix or length-2
    vector.
    """
    return example1_data, conditional_model(_transform_matrix(g))


@dataclass(frozen=True)
class TwoPopulationData:
    features: np.ndarray
    response: np.ndarray
    minority: np.ndarray


def two_population_data(n: int, feature_dim: int = 3, seed=0) -> TwoPopulationData:
    """Posterior-inference analogue with a 90/10 population mixture.

    The angle ``theta ~ Unif(-pi, pi)`` is the response.  Its observable
    proxy ``a`` is ``N(theta, 0.05)`` in the majority population and a
    half/half mixture of Laplace(theta, 0.05) and Laplace(theta, 0.0005) in
    the minority.  Features are ``(axis ratio + N(0, 0.1), a, nuisance...)``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if feature_dim < 2:
        raise ValueError("feature_dim must be at least 2")
    n = int(n)
    rng = make_rng(seed)
    minority = rng.random(n) >= MAJOR_WEIGHT
    theta = rng.uniform(-np.pi, np.pi, n)
    scales = np.where(rng.random(n) < 0.5, *LAPLACE_SCALES)
    offset = np.where(minority, rng.laplace(0.0, scales), MAJOR_SD * rng.standard_normal(n))
    a = theta + offset
    ratio = np.where(minority, MINOR_AXIS_RATIO, MAJOR_AXIS_RATIO)
    X = np.empty((n, feature_dim))
    X[:, 0] = ratio + INDICATOR_NOISE * rng.standard_normal(n)
    X[:, 1] = a
    X[:, 2:] = rng.standard_normal((n, feature_dim - 2))
    return TwoPopulationData(X, theta, minority)


def majority_posterior_model(feature_dim: int = 3) -> GaussianLinearModel:
    """``theta | x ~ N(a, 0.05)``: right for the majority, wrong for the minority."""
    w = np.zeros(feature_dim)
    w[1] = 1.0
    return GaussianLinearModel(w, 0.0, MAJOR_SD)
