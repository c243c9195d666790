"""Conditional density models f(y | x) consumed by the diagnostics.

Every model advertises what it can do through three capability flags
(``can_evaluate_density``, ``can_evaluate_cdf``, ``can_sample``).  Calling an
operation the model does not support raises :class:`CapabilityError`.

Shape conventions
-----------------
``x`` is either one feature vector of shape ``(d,)`` or a batch ``(n, d)``.
With a single ``x``, ``y`` may have any shape (``(..., p)`` for vector
responses) and is evaluated elementwise against that one conditional law.
With a batch of ``n`` rows, ``y`` must have leading dimension ``n``.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate, stats

__all__ = [
    "CapabilityError",
    "DimensionError",
    "IntegrationError",
    "ConditionalDensityModel",
    "GaussianLinearModel",
    "GaussianVectorModel",
    "MixtureModel",
    "SampleOnlyModel",
    "quadrature_cdf",
    "make_rng",
]

QUAD_TOL = 1e-8


class CapabilityError(TypeError):
    """The model cannot perform the requested operation."""


class DimensionError(ValueError):
    """Feature or response dimension does not match the model."""


class IntegrationError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


def make_rng(seed) -> np.random.Generator:
    """Generator from an explicit seed; ``None`` is refused on purpose."""
    if seed is None:
        raise TypeError("an explicit seed is required")
    if isinstance(seed, np.random.Generator):
        raise TypeError("pass a seed (int, tuple of ints or SeedSequence), not a Generator")
    if isinstance(seed, tuple):
        seed = list(seed)
    return np.random.default_rng(seed)


class ConditionalDensityModel:
    """Base class for f(y | x) with scalar or vector response.

    Subclasses set the capability flags and override the matching methods.
    Instances are treated as immutable once constructed.
    """

    can_evaluate_density = False
    can_evaluate_cdf = False
    can_sample = False

    def __init__(self, feature_dim: int, response_dim: int = 1):
        if int(feature_dim) < 1 or int(response_dim) < 1:
            raise ValueError("feature_dim and response_dim must be positive")
        self.feature_dim = int(feature_dim)
        self.response_dim = int(response_dim)

    @property
    def capabilities(self) -> dict:
        return {
            "can_evaluate_density": self.can_evaluate_density,
            "can_evaluate_cdf": self.can_evaluate_cdf,
            "can_sample": self.can_sample,
        }

    # -- validation ----------------------------------------------------
    def _features(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim <= 1
        x2 = np.atleast_2d(x) if x.ndim == 1 else (x.reshape(1, -1) if x.ndim == 0 else x)
        if x2.ndim != 2 or x2.shape[1] != self.feature_dim:
            raise DimensionError(
                f"expected feature vectors of dimension {self.feature_dim}, got shape {x.shape}"
            )
        return x2, single

    def _responses(self, y, x2, single):
        y = np.asarray(y, dtype=float)
        if self.response_dim > 1 and (y.ndim == 0 or y.shape[-1] != self.response_dim):
            raise DimensionError(
                f"expected responses of dimension {self.response_dim}, got shape {y.shape}"
            )
        if not single:
            lead = y.shape[0] if y.ndim > (0 if self.response_dim == 1 else 1) else None
            if lead != x2.shape[0]:
                raise DimensionError(
                    f"batch of {x2.shape[0]} feature rows needs responses with the same leading size"
                )
        return y

    # -- operations ----------------------------------------------------
    def density(self, y, x):
        """Conditional density f(y | x); nonnegative and finite."""
        raise CapabilityError(f"{type(self).__name__} cannot evaluate densities")

    def cdf(self, y, x):
        """Conditional CDF F(y | x) for scalar responses.

        Models without a closed form fall back on adaptive quadrature of
        :meth:`density` (see :func:`quadrature_cdf`).
        """
        if self.response_dim != 1:
            raise CapabilityError("cdf is defined for scalar responses only")
        if not self.can_evaluate_density:
            raise CapabilityError(f"{type(self).__name__} has neither a cdf nor a density")
        return quadrature_cdf(self, y, x)

    def sample(self, x, count: int, seed):
        """``count`` i.i.d. draws from f(. | x) for one feature vector ``x``."""
        raise CapabilityError(f"{type(self).__name__} cannot sample")

    def lower_bound(self, x) -> float:
        """Left truncation point for numeric CDF integration at ``x``."""
        return -math.inf


def quadrature_cdf(model: ConditionalDensityModel, y, x, lower: float | None = None):
    """Integrate ``model.density`` from a truncation point up to ``y``.

    ``lower`` defaults to ``model.lower_bound(x)``, which analytic models
    place where the left tail mass is below 1e-9.
    """
    if not model.can_evaluate_density:
        raise CapabilityError(f"{type(model).__name__} cannot evaluate densities")
    if model.response_dim != 1:
        raise CapabilityError("cdf is defined for scalar responses only")
    x2, single = model._features(x)
    y = model._responses(y, x2, single)

    def one(yv, xrow):
        lo = model.lower_bound(xrow) if lower is None else lower
        if yv <= lo:
            return 0.0
        val, err = integrate.quad(
            lambda t: float(model.density(t, xrow)), lo, yv,
            epsabs=1e-10, epsrel=1e-10, limit=200,
        )
        if not np.isfinite(val) or err > QUAD_TOL:
            raise IntegrationError(
                f"quadrature error estimate {err:.3g} exceeds tolerance {QUAD_TOL:g}"
            )
        return min(max(val, 0.0), 1.0)

    if single:
        out = np.array([one(v, x2[0]) for v in np.ravel(y)]).reshape(np.shape(y))
    else:
        out = np.array([one(v, row) for v, row in zip(np.ravel(y), x2)])
    return float(out) if out.ndim == 0 else out


class GaussianLinearModel(ConditionalDensityModel):
    """y | x ~ N(weight . x + intercept, noise_sd**2).

    Parameters
    ----------
    weight : array-like of shape (d,)
    intercept : float
    noise_sd : float
        Positive conditional standard deviation.
    """

    can_evaluate_density = True
    can_evaluate_cdf = True
    can_sample = True

    def __init__(self, weight, intercept: float = 0.0, noise_sd: float = 1.0):
        weight = np.atleast_1d(np.asarray(weight, dtype=float))
        if weight.ndim != 1:
            raise ValueError("weight must be a vector")
        if not noise_sd > 0:
            raise ValueError("noise_sd must be positive")
        super().__init__(weight.size, 1)
        self.weight = weight
        self.intercept = float(intercept)
        self.noise_sd = float(noise_sd)

    def __repr__(self):
        return (f"GaussianLinearModel(weight={self.weight.tolist()}, "
                f"intercept={self.intercept}, noise_sd={self.noise_sd})")

    def mean(self, x):
        x2, single = self._features(x)
        m = x2 @ self.weight + self.intercept
        return float(m[0]) if single else m

    def _standardize(self, y, x):
        x2, single = self._features(x)
        y = self._responses(y, x2, single)
        m = x2 @ self.weight + self.intercept
        if single:
            return (y - m[0]) / self.noise_sd
        return (y - m.reshape((-1,) + (1,) * (y.ndim - 1))) / self.noise_sd

    def density(self, y, x):
        z = self._standardize(y, x)
        out = stats.norm.pdf(z) / self.noise_sd
        return float(out) if np.ndim(out) == 0 else out

    def cdf(self, y, x):
        out = stats.norm.cdf(self._standardize(y, x))
        return float(out) if np.ndim(out) == 0 else out

    def ppf(self, q, x):
        """Conditional quantile function."""
        x2, single = self._features(x)
        m = x2 @ self.weight + self.intercept
        out = (m[0] if single else m) + self.noise_sd * stats.norm.ppf(q)
        return float(out) if np.ndim(out) == 0 else out

    def sample(self, x, count: int, seed):
        x2, single = self._features(x)
        if not single:
            raise DimensionError("sample takes one feature vector")
        rng = make_rng(seed)
        return self.mean(x2[0]) + self.noise_sd * rng.standard_normal(int(count))

    def lower_bound(self, x) -> float:
        return self.mean(x) - 12.0 * self.noise_sd


class GaussianVectorModel(ConditionalDensityModel):
    """y | x ~ N_p(weight @ x + intercept, cov) for vector responses."""

    can_evaluate_density = True
    can_sample = True

    def __init__(self, weight, intercept, cov):
        weight = np.atleast_2d(np.asarray(weight, dtype=float))
        intercept = np.atleast_1d(np.asarray(intercept, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        p, d = weight.shape
        if intercept.shape != (p,) or cov.shape != (p, p):
            raise ValueError("intercept must have shape (p,) and cov shape (p, p)")
        super().__init__(d, p)
        self.weight = weight
        self.intercept = intercept
        self.cov = cov
        self._chol = np.linalg.cholesky(cov)
        self._mvn = stats.multivariate_normal(mean=np.zeros(p), cov=cov)

    def mean(self, x):
        x2, single = self._features(x)
        m = x2 @ self.weight.T + self.intercept
        return m[0] if single else m

    def density(self, y, x):
        x2, single = self._features(x)
        y = self._responses(y, x2, single)
        m = x2 @ self.weight.T + self.intercept
        if single:
            centered = y - m[0]
        else:
            centered = y - m.reshape((m.shape[0],) + (1,) * (y.ndim - 2) + (m.shape[1],))
        out = np.asarray(self._mvn.pdf(centered))
        if self.response_dim > 1 and centered.ndim == 1:
            return float(out)
        return out.reshape(centered.shape[:-1]) if out.ndim else float(out)

    def sample(self, x, count: int, seed):
        x2, single = self._features(x)
        if not single:
            raise DimensionError("sample takes one feature vector")
        rng = make_rng(seed)
        z = rng.standard_normal((int(count), self.response_dim))
        return self.mean(x2[0]) + z @ self._chol.T


class MixtureModel(ConditionalDensityModel):
    """Finite mixture sum_k w_k f_k(y | x) with fixed positive weights.

    Parameters
    ----------
    components : list of (weight, ConditionalDensityModel)
        Weights must be positive and sum to one within 1e-12.
    """

    def __init__(self, components):
        components = list(components)
        if not components:
            raise ValueError("a mixture needs at least one component")
        weights = np.array([float(w) for w, _ in components])
        models = [m for _, m in components]
        if np.any(weights <= 0):
            raise ValueError("mixture weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights sum to {weights.sum()!r}, not 1")
        dims = {(m.feature_dim, m.response_dim) for m in models}
        if len(dims) != 1:
            raise DimensionError("mixture components disagree on dimensions")
        super().__init__(*dims.pop())
        self.weights = weights
        self.models = models
        self.can_evaluate_density = all(m.can_evaluate_density for m in models)
        self.can_evaluate_cdf = all(m.can_evaluate_cdf for m in models)
        self.can_sample = all(m.can_sample for m in models)

    @property
    def components(self):
        return list(zip(self.weights.tolist(), self.models))

    def density(self, y, x):
        if not self.can_evaluate_density:
            return super().density(y, x)
        return sum(w * m.density(y, x) for w, m in zip(self.weights, self.models))

    def cdf(self, y, x):
        if not self.can_evaluate_cdf:
            return super().cdf(y, x)
        return sum(w * m.cdf(y, x) for w, m in zip(self.weights, self.models))

    def sample(self, x, count: int, seed):
        if not self.can_sample:
            return super().sample(x, count, seed)
        rng = make_rng(seed)
        count = int(count)
        labels = rng.choice(len(self.models), size=count, p=self.weights)
        child = rng.integers(0, 2**63 - 1, size=len(self.models))
        shape = (count,) if self.response_dim == 1 else (count, self.response_dim)
        out = np.empty(shape)
        for k, m in enumerate(self.models):
            mask = labels == k
            out[mask] = m.sample(x, int(mask.sum()), int(child[k]))
        return out

    def lower_bound(self, x) -> float:
        return min(m.lower_bound(x) for m in self.models)


class SampleOnlyModel(ConditionalDensityModel):
    """Implicit model known only through a sampler.

    Parameters
    ----------
    sampler : callable
        ``sampler(x, count, rng)`` returning ``count`` i.i.d. draws from
        f(. | x) using the supplied :class:`numpy.random.Generator`.
    feature_dim, response_dim : int
    draws : int
        Default number of draws ``L`` per query for Monte Carlo PIT; at least 2.
    """

    can_sample = True

    def __init__(self, sampler, feature_dim: int, response_dim: int = 1, draws: int = 10_000):
        super().__init__(feature_dim, response_dim)
        if int(draws) < 2:
            raise ValueError("draws per query must be at least 2")
        self.sampler = sampler
        self.draws = int(draws)

    def sample(self, x, count: int, seed):
        x2, single = self._features(x)
        if not single:
            raise DimensionError("sample takes one feature vector")
        out = np.asarray(self.sampler(x2[0], int(count), make_rng(seed)), dtype=float)
        if self.response_dim == 1:
            return out.reshape(int(count))
        return out.reshape(int(count), self.response_dim)
