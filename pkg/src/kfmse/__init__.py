"""Closed-form MSE prediction for Kalman filters and smoothers run under
model mismatch against a fixed trajectory."""
from .kalman import (
    kf_backward,
    kf_forward,
    rts_smooth,
    smooth_two_filter,
    two_filter_combine,
)
from .linalg import NotPositiveDefinite
from .models import (
    AssumedModel,
    NoiseFamily,
    Trajectory,
    TrueMeasModel,
    marginal_moments,
    reversed_time_model,
    validate_scenario,
)
from .montecarlo import McConfig, compare, empirical_mse
from .mse import MseReport, iter_mse, predict_mse
from .scenario import CvScenario, benchmark_maneuvers, build_cv_models, generate_trajectory

__all__ = [
    "AssumedModel", "CvScenario", "McConfig", "MseReport", "NoiseFamily", "NotPositiveDefinite",
    "Trajectory", "TrueMeasModel", "benchmark_maneuvers", "build_cv_models", "compare",
    "empirical_mse", "generate_trajectory", "iter_mse", "kf_backward", "kf_forward",
    "marginal_moments", "predict_mse", "reversed_time_model", "rts_smooth", "smooth_two_filter",
    "two_filter_combine", "validate_scenario",
]
