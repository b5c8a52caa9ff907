"""Second-stage statistics: group tests, descriptives, densities and panel regressions."""

from .compare import TestResult, rank_sum_test, t_test
from .descriptive import correlogram, describe, gaussian_density, silverman_bandwidth, top_correlations
from .regression import (
    RankDeficiencyError,
    RegressionError,
    RegressionResult,
    catch_up_regression,
    difference_panel,
    fixed_effects,
    hausman_test,
    pooled_ols,
    random_effects_gls,
)

__all__ = [
    "RankDeficiencyError",
    "RegressionError",
    "RegressionResult",
    "TestResult",
    "catch_up_regression",
    "correlogram",
    "describe",
    "difference_panel",
    "fixed_effects",
    "gaussian_density",
    "hausman_test",
    "pooled_ols",
    "random_effects_gls",
    "rank_sum_test",
    "silverman_bandwidth",
    "t_test",
    "top_correlations",
]
