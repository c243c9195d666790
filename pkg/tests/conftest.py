import numpy as np
import pytest

from cdediag.benchmarks import example1_data, example1_model
from cdediag.statistics import compute_calibration_sample


@pytest.fixture(scope="session")
def example1_pit():
    """Factory for (model name, n, seed) -> CalibrationSample, cached per session."""
    cache = {}

    def make(which, n, seed):
        key = (which, n, seed)
        if key not in cache:
            X, Y = example1_data(n, seed)
            cache[key] = compute_calibration_sample(example1_model(which), X, Y)
        return cache[key]

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
