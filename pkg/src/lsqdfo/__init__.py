"""Derivative-free Gauss-Newton trust-region solver for nonlinear least squares."""
from .problems import (
    BudgetExhausted,
    ConfigurationError,
    EvalBudget,
    EvaluationFailure,
    NoiseSpec,
    Problem,
    build_suite,
    get_problem,
    suite_manifest,
)
from .profiles import EvalLog, EvalRecord, ProfileTable, data_profile, evals_to_solve, performance_profile
from .solver import SolveResult, SolverConfig, TrustState, solve

__version__ = "0.1.0"

__all__ = [
    "BudgetExhausted",
    "ConfigurationError",
    "EvalBudget",
    "EvaluationFailure",
    "NoiseSpec",
    "Problem",
    "build_suite",
    "get_problem",
    "suite_manifest",
    "EvalLog",
    "EvalRecord",
    "ProfileTable",
    "data_profile",
    "evals_to_solve",
    "performance_profile",
    "SolveResult",
    "SolverConfig",
    "TrustState",
    "solve",
]
