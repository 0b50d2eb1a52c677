"""Linesearch-free proximal gradient with adaPG-safeguarded fast stepsizes."""

from .core import (
    CompositeProblem,
    LocalEstimates,
    NonFiniteIterate,
    SolverConfig,
    StepRecord,
    Trace,
    ZeroStep,
    adapg_candidate,
    fixed_point_residual,
    local_estimates,
    prox_gradient_step,
    run,
    safeguarded_gamma,
)
from .stepsizes import RULES, PairHistory

__version__ = "0.1.0"

__all__ = [
    "CompositeProblem", "LocalEstimates", "NonFiniteIterate", "SolverConfig", "StepRecord",
    "Trace", "ZeroStep", "adapg_candidate", "fixed_point_residual", "local_estimates",
    "prox_gradient_step", "run", "safeguarded_gamma", "RULES", "PairHistory",
]
