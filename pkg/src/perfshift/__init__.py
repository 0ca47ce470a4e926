"""Stabilization benchmarks and split-sample changepoint detection for player metrics."""

from perfshift.errors import PerfShiftError
from perfshift.series import MetricSeries, SplitPair, new_metric_series, rolling_mean, split_odd_even
from perfshift.stabilization import (
    ConfidenceInterval,
    StabilizationReport,
    cohort_stabilization,
    confidence_sequence,
    hoeffding_interval,
    latent_sd,
    stabilization_point,
)
from perfshift.loglik import (
    CandidateChangepoint,
    LambdaProfile,
    argmax_candidate,
    bernoulli_lambda_profile,
    gaussian_lambda_profile,
)
from perfshift.hypotests import ContingencyTable, TestOutcome, fisher_exact, perm_test_shift
from perfshift.detect import (
    DetectionConfig,
    DetectionResult,
    detect_cohort,
    detect_multiple,
    detect_single,
)

__version__ = "0.1.0"

__all__ = [
    "PerfShiftError",
    "MetricSeries",
    "SplitPair",
    "new_metric_series",
    "split_odd_even",
    "rolling_mean",
    "ConfidenceInterval",
    "StabilizationReport",
    "latent_sd",
    "stabilization_point",
    "cohort_stabilization",
    "hoeffding_interval",
    "confidence_sequence",
    "LambdaProfile",
    "CandidateChangepoint",
    "bernoulli_lambda_profile",
    "gaussian_lambda_profile",
    "argmax_candidate",
    "ContingencyTable",
    "TestOutcome",
    "fisher_exact",
    "perm_test_shift",
    "DetectionConfig",
    "DetectionResult",
    "detect_single",
    "detect_multiple",
    "detect_cohort",
]
