"""Optimal truncated sequential tests for k simple hypotheses on a Bernoulli parameter."""

from seqtest.errors import ArgumentError, NumericalError, PolicyFormatError, SeqTestError
from seqtest.model import (
    Criterion,
    DesignProblem,
    Hypotheses,
    LambdaMatrix,
    log_binom_pmf,
    mixture_log_pmf,
    stopping_loss,
)
from seqtest.policy import CONTINUE, TestPolicy
from seqtest.design import DesignOutput, backward_induce, continuation_bounds, max_stage
from seqtest.msprt import MsprtSpec, build_msprt, wald_bounds
from seqtest.evaluate import (
    PerformanceReport,
    accept_probs,
    brute_force_oracle,
    ess,
    ess_curve,
    error_matrix,
    evaluate,
    evaluate_many,
    monte_carlo,
    stopping_loss_decay,
    tail_curve,
    tail_prob,
)
from seqtest.fit import FitOptions, FitResult, FitTarget, fit_msprt_thresholds, fit_multipliers
from seqtest.kiefer_weiss import KwCertificate, KwOptions, KwProblem, solve_kw, solve_modified_kw

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "NumericalError",
    "PolicyFormatError",
    "SeqTestError",
    "Criterion",
    "DesignProblem",
    "Hypotheses",
    "LambdaMatrix",
    "log_binom_pmf",
    "mixture_log_pmf",
    "stopping_loss",
    "CONTINUE",
    "TestPolicy",
    "DesignOutput",
    "backward_induce",
    "continuation_bounds",
    "max_stage",
    "MsprtSpec",
    "build_msprt",
    "wald_bounds",
    "PerformanceReport",
    "accept_probs",
    "brute_force_oracle",
    "ess",
    "ess_curve",
    "error_matrix",
    "evaluate",
    "evaluate_many",
    "monte_carlo",
    "stopping_loss_decay",
    "tail_curve",
    "tail_prob",
    "FitOptions",
    "FitResult",
    "FitTarget",
    "fit_msprt_thresholds",
    "fit_multipliers",
    "KwCertificate",
    "KwOptions",
    "KwProblem",
    "solve_kw",
    "solve_modified_kw",
]
