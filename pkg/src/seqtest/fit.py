"""Calibration of multipliers or MSPRT thresholds to prescribed error probabilities.

Both fits run Nelder-Mead in log-parameter space on the largest relative
deviation of the achieved error probabilities from their targets. Achieved
errors are piecewise constant in the parameters, so an exact hit may not
exist; the best point found is always returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from seqtest.design import backward_induce
from seqtest.errors import ArgumentError
from seqtest.evaluate import PerformanceReport, _sweep, evaluate_many
from seqtest.model import Criterion, DesignProblem, Hypotheses, LambdaMatrix
from seqtest.msprt import MsprtSpec, build_msprt
from seqtest.policy import TestPolicy

PER_HYPOTHESIS = "per-hypothesis"
PER_PAIR = "per-pair"

# objective value for parameter vectors outside the admissible region
_INADMISSIBLE = 1e6


@dataclass(frozen=True, eq=False)
class FitTarget:
    """Target error probabilities: a length-k vector of ``alpha_i`` or a k x k matrix of ``alpha_ij``."""

    mode: str
    targets: np.ndarray

    def __post_init__(self):
        t = np.array(self.targets, dtype=float)
        if self.mode == PER_HYPOTHESIS:
            if t.ndim != 1:
                raise ArgumentError("per-hypothesis targets must be a vector")
            vals = t
        elif self.mode == PER_PAIR:
            if t.ndim != 2 or t.shape[0] != t.shape[1]:
                raise ArgumentError("per-pair targets must be a square matrix")
            np.fill_diagonal(t, np.nan)
            vals = t[~np.eye(t.shape[0], dtype=bool)]
        else:
            raise ArgumentError(f"unknown fit mode {self.mode!r}")
        if not np.all((vals > 0) & (vals < 1)):
            raise ArgumentError("every target must lie in (0, 1)")
        t.setflags(write=False)
        object.__setattr__(self, "targets", t)

    @classmethod
    def per_hypothesis(cls, alphas: Sequence[float]) -> "FitTarget":
        return cls(PER_HYPOTHESIS, np.asarray(alphas, dtype=float))

    @classmethod
    def per_pair(cls, alphas) -> "FitTarget":
        return cls(PER_PAIR, np.asarray(alphas, dtype=float))

    @property
    def k(self) -> int:
        return self.targets.shape[0]

    def achieved(self, acc: np.ndarray) -> np.ndarray:
        """Error probabilities in the target's layout from an acceptance matrix ``acc[i, j]``."""
        if self.mode == PER_HYPOTHESIS:
            return 1.0 - np.diag(acc)
        out = acc.copy()
        np.fill_diagonal(out, np.nan)
        return out

    def residual(self, achieved: np.ndarray) -> float:
        mask = ~np.isnan(self.targets)
        return float(np.max(np.abs(achieved[mask] - self.targets[mask]) / self.targets[mask]))


@dataclass(frozen=True)
class FitOptions:
    """Search settings.

    ``tolerance`` decides ``converged`` (largest relative deviation);
    ``spread_tolerance`` and ``xatol`` stop the simplex. While the result is
    outside ``tolerance`` the simplex is rebuilt around the best point, up to
    ``restarts`` times, within the overall ``max_evaluations`` budget.
    """

    tolerance: float = 0.05
    spread_tolerance: float = 1e-3
    xatol: float = 1e-3
    max_evaluations: int = 400
    initial_step: float = 0.5
    restarts: int = 2
    start: tuple[float, ...] | None = None


@dataclass(frozen=True, eq=False)
class FitResult:
    fitted_params: np.ndarray
    achieved: np.ndarray
    residual: float
    evaluations: int
    converged: bool
    policy: TestPolicy
    reports: list[PerformanceReport]
    trace: list[float] = field(default_factory=list)


def _pack_pairs(matrix: np.ndarray) -> np.ndarray:
    return matrix[~np.eye(matrix.shape[0], dtype=bool)]


def _unpack_pairs(vec: np.ndarray, k: int, diag: float) -> np.ndarray:
    out = np.full((k, k), diag)
    out[~np.eye(k, dtype=bool)] = vec
    return out


def _run(
    hyp: Hypotheses,
    target: FitTarget,
    build: Callable[[np.ndarray], TestPolicy | None],
    start: np.ndarray,
    options: FitOptions,
) -> FitResult:
    thetas = hyp.as_array()
    cache: dict[bytes, float] = {}
    trace: list[float] = []

    def objective(x: np.ndarray) -> float:
        key = np.asarray(x, dtype=float).tobytes()
        if key in cache:
            return cache[key]
        policy = build(x)
        if policy is None:
            value = _INADMISSIBLE
        else:
            acc, _, _ = _sweep(policy, thetas)
            value = target.residual(target.achieved(acc))
        cache[key] = value
        trace.append(value)
        return value

    start = np.asarray(start, dtype=float)
    best_x = start
    # piecewise-constant objectives can collapse the simplex on a plateau;
    # a fresh simplex around the best point usually gets it moving again
    for attempt in range(options.restarts + 1):
        budget = options.max_evaluations - len(trace)
        value = objective(best_x)
        if value <= 1e-9 or (attempt > 0 and value <= options.tolerance) or budget < 2:
            break
        simplex = np.vstack([best_x, best_x + options.initial_step * np.eye(best_x.size)])
        res = minimize(
            objective,
            best_x,
            method="Nelder-Mead",
            options={
                "initial_simplex": simplex,
                "maxfev": budget,
                "fatol": options.spread_tolerance,
                "xatol": options.xatol,
                "adaptive": False,
            },
        )
        x = np.asarray(res.x, dtype=float)
        if objective(x) >= objective(best_x):
            break
        best_x = x

    # fresh evaluation of the final point; nothing reused from the search
    policy = build(best_x)
    if policy is None:
        raise ArgumentError("no admissible parameters were found")
    reports = evaluate_many(policy, thetas)
    acc = np.vstack([r.accept_probs for r in reports])
    achieved = target.achieved(acc)
    residual = target.residual(achieved)
    return FitResult(
        fitted_params=best_x,
        achieved=achieved,
        residual=residual,
        evaluations=len(trace),
        converged=residual <= options.tolerance,
        policy=policy,
        reports=reports,
        trace=trace,
    )


def default_multiplier_start(target: FitTarget) -> np.ndarray:
    k = target.k
    if target.mode == PER_HYPOTHESIS:
        return np.log(2.0 * (k - 1) / target.targets)
    return np.log(2.0 * (k - 1) / _pack_pairs(target.targets))


def default_threshold_start(target: FitTarget) -> np.ndarray:
    k = target.k
    if target.mode == PER_HYPOTHESIS:
        return np.log((k - 1) / target.targets)
    # alpha_ij <= 1 / A_ji, so A_ji starts at 1 / alpha_ij
    return np.log(1.0 / _pack_pairs(target.targets.T))


def fit_multipliers(
    hyp: Hypotheses,
    criterion: Criterion,
    horizon: int,
    target: FitTarget,
    options: FitOptions | None = None,
) -> FitResult:
    """Fit Lagrange multipliers so the optimal design's errors match ``target``.

    ``fitted_params`` holds ``log lambda_i`` (per-hypothesis) or the
    off-diagonal ``log lambda_ij`` in row-major order (per-pair).
    """
    options = options or FitOptions()
    if target.k != hyp.k:
        raise ArgumentError("target dimension does not match the number of hypotheses")
    k = hyp.k

    def build(x):
        if target.mode == PER_HYPOTHESIS:
            lam = LambdaMatrix.from_log_per_hypothesis(x)
        else:
            lam = LambdaMatrix(_unpack_pairs(np.exp(x), k, 0.0))
        return backward_induce(DesignProblem(hyp, lam, criterion, horizon)).policy

    start = np.asarray(options.start, dtype=float) if options.start is not None else default_multiplier_start(target)
    _check_start(start, target)
    return _run(hyp, target, build, start, options)


def fit_msprt_thresholds(
    hyp: Hypotheses,
    horizon: int,
    target: FitTarget,
    options: FitOptions | None = None,
) -> FitResult:
    """Fit MSPRT thresholds so the test's errors match ``target``.

    Per-hypothesis mode searches ``log A_j`` with ``A[i, j] = A_j``; per-pair
    mode searches every off-diagonal ``log A[i, j]``.
    """
    options = options or FitOptions()
    if target.k != hyp.k:
        raise ArgumentError("target dimension does not match the number of hypotheses")
    k = hyp.k

    def build(x):
        if np.any(np.asarray(x) <= 0):
            return None
        if target.mode == PER_HYPOTHESIS:
            spec = MsprtSpec.from_log_per_hypothesis(x, horizon)
        else:
            spec = MsprtSpec(_unpack_pairs(np.exp(x), k, math.inf), horizon)
        return build_msprt(hyp, spec)

    start = np.asarray(options.start, dtype=float) if options.start is not None else default_threshold_start(target)
    _check_start(start, target)
    return _run(hyp, target, build, start, options)


def _check_start(start: np.ndarray, target: FitTarget) -> None:
    k = target.k
    want = k if target.mode == PER_HYPOTHESIS else k * (k - 1)
    if start.shape != (want,):
        raise ArgumentError(f"start point must have {want} entries, got shape {start.shape}")
