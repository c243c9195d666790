"""Coverage diagnostics for conditional density models."""
from .diagnostics import (
    AlpBand,
    CoverageDiagnostics,
    GlobalTestResult,
    LocalTestResult,
    NullEnsemble,
    alp,
    alp_bands,
    build_null_ensemble,
    gct,
    interpret_band,
    lct,
    local_statistic,
    local_tests,
)
from .models import (
    CapabilityError,
    ConditionalDensityModel,
    GaussianLinearModel,
    GaussianVectorModel,
    MixtureModel,
    SampleOnlyModel,
)
from .regression import (
    KernelCoverageRegressor,
    KNNCoverageRegressor,
    alpha_grid,
    build_indicators,
    coverage_curve,
)
from .statistics import (
    CalibrationSample,
    compute_calibration_sample,
    hpd,
    pit,
    pit_monte_carlo,
    project_response,
)

__version__ = "0.1.0"

__all__ = [
    "AlpBand",
    "CalibrationSample",
    "CapabilityError",
    "ConditionalDensityModel",
    "CoverageDiagnostics",
    "GaussianLinearModel",
    "GaussianVectorModel",
    "GlobalTestResult",
    "KNNCoverageRegressor",
    "KernelCoverageRegressor",
    "LocalTestResult",
    "MixtureModel",
    "NullEnsemble",
    "SampleOnlyModel",
    "alp",
    "alp_bands",
    "alpha_grid",
    "build_indicators",
    "build_null_ensemble",
    "compute_calibration_sample",
    "coverage_curve",
    "gct",
    "hpd",
    "interpret_band",
    "lct",
    "local_statistic",
    "local_tests",
    "pit",
    "pit_monte_carlo",
    "project_response",
]
