"""Numerical laboratory for the averaged-SGD theory and synthetic benchmarks."""
from .lemmas import (DivergenceResult, Xi2Report, divergence_check, psd_sandwich_check,
                     random_sandwich_case,
                     sandwich_margins, x_product, xbar_matrix, xi2_bound_check)
from .linear_sa import (GaussianNoise, LinearSaConfig, LinearSaTrajectory, Theorem1Report,
                        mean_and_stderr, random_spd, replicate_errors, replicate_rngs,
                        run_linear_sa, theorem1_case, verify_theorem1)
from .synthetic import (Arm, ArmsResult, SyntheticProblem, batch_least_squares, batch_mean,
                        excess_risk, make_quadratic_toy, make_regression_toy, run_arms,
                        toy1_arms, toy2_arms)

__all__ = [
    "Arm", "ArmsResult", "DivergenceResult", "GaussianNoise", "LinearSaConfig",
    "LinearSaTrajectory", "SyntheticProblem", "Theorem1Report", "Xi2Report",
    "batch_least_squares", "batch_mean", "divergence_check", "excess_risk",
    "make_quadratic_toy", "make_regression_toy", "mean_and_stderr", "psd_sandwich_check",
    "random_sandwich_case", "random_spd", "theorem1_case", "replicate_errors", "replicate_rngs", "run_arms", "run_linear_sa",
    "sandwich_margins", "toy1_arms", "toy2_arms", "verify_theorem1", "x_product",
    "xbar_matrix", "xi2_bound_check",
]
