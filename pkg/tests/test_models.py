import math

import numpy as np
import pytest
from scipy import stats

from cdediag.models import (
    CapabilityError,
    ConditionalDensityModel,
    DimensionError,
    GaussianLinearModel,
    GaussianVectorModel,
    IntegrationError,
    MixtureModel,
    SampleOnlyModel,
    make_rng,
    quadrature_cdf,
)


class DensityOnly(ConditionalDensityModel):
    """Standard normal shifted by x, exposing only its density."""

    can_evaluate_density = True

    def __init__(self):
        super().__init__(1)

    def density(self, y, x):
        x2, single = self._features(x)
        return stats.norm.pdf(np.asarray(y) - (x2[0, 0] if single else x2[:, 0]))

    def lower_bound(self, x):
        return float(np.ravel(x)[0]) - 12.0


def test_make_rng_refuses_implicit_seeds():
    with pytest.raises(TypeError):
        make_rng(None)
    with pytest.raises(TypeError):
        make_rng(np.random.default_rng(0))
    a = make_rng((3, 4)).random(3)
    b = make_rng([3, 4]).random(3)
    np.testing.assert_array_equal(a, b)


def test_gaussian_sample_mean():
    m = GaussianLinearModel([1, 1], 0, 1)
    s = m.sample([0, 0], 100_000, seed=1)
    assert s.shape == (100_000,)
    assert abs(s.mean()) < 0.02


@pytest.mark.parametrize("model,x", [
    (GaussianLinearModel([1, 1], 0, 1), [0.3, -0.2]),
    (GaussianLinearModel([2.0], 1.0, 0.5), [1.0]),
    (MixtureModel([(0.3, GaussianLinearModel([1.0], -2, 1)),
                   (0.7, GaussianLinearModel([1.0], 2, 0.5))]), [0.0]),
])
def test_empirical_cdf_matches(model, x):
    draws = model.sample(x, 100_000, seed=7)
    res = stats.kstest(draws, lambda t: model.cdf(t, x))
    assert res.statistic < 0.01


def test_gaussian_cdf_density_consistency():
    m = GaussianLinearModel([0.5, -1.0], 0.2, 1.3)
    x = np.array([0.4, 0.1])
    for y in (-2.0, 0.0, 1.7):
        assert m.cdf(y, x) == pytest.approx(quadrature_cdf(m, y, x), abs=1e-8)


def test_quadrature_fallback_for_density_only_model():
    m = DensityOnly()
    assert m.cdf(0.5, [0.5]) == pytest.approx(0.5, abs=1e-8)
    assert m.cdf(1.5, [0.5]) == pytest.approx(stats.norm.cdf(1.0), abs=1e-8)
    batch = m.cdf(np.array([0.0, 1.0]), np.array([[0.0], [0.0]]))
    np.testing.assert_allclose(batch, stats.norm.cdf([0.0, 1.0]), atol=1e-8)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_quadrature_reports_failure():
    class Spiky(DensityOnly):
        def density(self, y, x):
            return 1.0 / np.sqrt(np.abs(np.asarray(y) - 0.123456789) + 1e-300)

        def lower_bound(self, x):
            return -1.0

    with pytest.raises(IntegrationError):
        Spiky().cdf(1.0, [0.0])


def test_capabilities_and_errors():
    only = SampleOnlyModel(lambda x, n, rng: rng.normal(size=n), 1)
    assert only.capabilities == {"can_evaluate_density": False, "can_evaluate_cdf": False,
                                 "can_sample": True}
    with pytest.raises(CapabilityError):
        only.density(0.0, [0.0])
    with pytest.raises(CapabilityError):
        only.cdf(0.0, [0.0])
    with pytest.raises(ValueError):
        SampleOnlyModel(lambda x, n, rng: rng.normal(size=n), 1, draws=1)


def test_dimension_checks():
    m = GaussianLinearModel([1, 1], 0, 1)
    with pytest.raises(DimensionError):
        m.density(0.0, [1.0, 2.0, 3.0])
    with pytest.raises(DimensionError):
        m.cdf([0.0, 1.0, 2.0], np.zeros((2, 2)))


def test_sampling_is_seed_deterministic():
    m = GaussianLinearModel([1.0], 0, 1)
    np.testing.assert_array_equal(m.sample([0.0], 50, 3), m.sample([0.0], 50, 3))
    assert not np.array_equal(m.sample([0.0], 50, 3), m.sample([0.0], 50, 4))


def test_vector_model():
    m = GaussianVectorModel(np.eye(2), [0.0, 1.0], [[1.0, 0.5], [0.5, 2.0]])
    d = m.sample([1.0, 0.0], 50_000, seed=2)
    assert d.shape == (50_000, 2)
    np.testing.assert_allclose(d.mean(0), [1.0, 1.0], atol=0.05)
    np.testing.assert_allclose(np.cov(d.T), [[1.0, 0.5], [0.5, 2.0]], atol=0.06)
    ref = stats.multivariate_normal([1.0, 1.0], [[1.0, 0.5], [0.5, 2.0]]).pdf([0.3, 0.2])
    assert m.density([0.3, 0.2], [1.0, 0.0]) == pytest.approx(ref)
    with pytest.raises(CapabilityError):
        m.cdf([0.0, 0.0], [1.0, 0.0])


def test_mixture_validation_and_capabilities():
    g = GaussianLinearModel([1.0], 0, 1)
    with pytest.raises(ValueError):
        MixtureModel([(0.5, g), (0.4, g)])
    only = SampleOnlyModel(lambda x, n, rng: rng.normal(size=n), 1)
    mix = MixtureModel([(0.5, g), (0.5, only)])
    assert mix.can_sample and not mix.can_evaluate_density
    assert mix.sample([0.0], 10, 0).shape == (10,)
    assert math.isclose(MixtureModel([(1.0, g)]).cdf(0.0, [0.0]), 0.5)
