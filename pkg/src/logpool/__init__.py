"""Weighted logarithmic pooling with an online mirror-descent weight learner."""

from .errors import (ConfigError, DomainError, LoadError, LogPoolError, NumericalError,
                     StructuralError)
from .pooling import (PooledForecast, ReportSet, log_loss, log_pool, loss_gradient,
                      pooled_loss)
from .mirror_descent import (LearnerState, MirrorSolve, RegularizerParams, Trajectory,
                             base_step_size, mirror_step, regularizer_gradient,
                             regularizer_value, run_learner, step_size_update)
from .hindsight import History, HindsightSolution, best_weights, cumulative_loss, regret
from .calibrated_world import (InformationStructure, RoundDraw, ScenarioSpec,
                               adversary_round, load_structure, posterior_report,
                               sample_round, verify_calibration)
from .diagnostics import (check_sga, corollary_bounds_check, gamma, potential_series,
                          theoretical_bound)

__all__ = [
    "ConfigError", "DomainError", "LoadError", "LogPoolError", "NumericalError",
    "StructuralError", "PooledForecast", "ReportSet", "log_loss", "log_pool",
    "loss_gradient", "pooled_loss", "LearnerState", "MirrorSolve", "RegularizerParams",
    "Trajectory", "base_step_size", "mirror_step", "regularizer_gradient",
    "regularizer_value", "run_learner", "step_size_update", "History", "HindsightSolution",
    "best_weights", "cumulative_loss", "regret", "InformationStructure", "RoundDraw",
    "ScenarioSpec", "adversary_round", "load_structure", "posterior_report", "sample_round",
    "verify_calibration", "check_sga", "corollary_bounds_check", "gamma", "potential_series",
    "theoretical_bound",
]
