"""Kiefer-Weiss designs by equalizing ESS at interior criterion points.

A Lagrangian-optimal test with criterion mass at points ``vartheta_i`` between
adjacent hypotheses minimizes the supremum of ESS over ``[theta_1, theta_k]``
whenever its ESS at every ``vartheta_i`` equals that supremum. :func:`solve_kw`
searches the points to make the two sides agree and reports how close it got.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit

from seqtest.design import backward_induce, max_stage
from seqtest.errors import ArgumentError
from seqtest.evaluate import EssCurve, PerformanceReport, ess_curve, ess_many, evaluate_many
from seqtest.model import Criterion, DesignProblem, Hypotheses, LambdaMatrix
from seqtest.policy import TestPolicy


@dataclass(frozen=True)
class KwProblem:
    hypotheses: Hypotheses
    lam: LambdaMatrix
    weights: tuple[float, ...]
    horizon: int

    def __post_init__(self):
        k = self.hypotheses.k
        weights = tuple(float(w) for w in self.weights)
        if len(weights) != k - 1:
            raise ArgumentError(f"need {k - 1} weights for {k} hypotheses, got {len(weights)}")
        if any(w < 0 for w in weights) or abs(math.fsum(weights) - 1.0) > 1e-12:
            raise ArgumentError("weights must be non-negative and sum to 1")
        if self.lam.k != k:
            raise ArgumentError("lambda dimension does not match the number of hypotheses")
        object.__setattr__(self, "weights", weights)

    @property
    def k(self) -> int:
        return self.hypotheses.k

    def check_points(self, vartheta: Sequence[float]) -> tuple[float, ...]:
        th = self.hypotheses.thetas
        pts = tuple(float(v) for v in vartheta)
        if len(pts) != self.k - 1:
            raise ArgumentError(f"need {self.k - 1} criterion points, got {len(pts)}")
        for i, v in enumerate(pts):
            if not th[i] <= v <= th[i + 1]:
                raise ArgumentError(f"vartheta_{i + 1}={v} lies outside [{th[i]}, {th[i + 1]}]")
        return pts

    def design_problem(self, vartheta: Sequence[float]) -> DesignProblem:
        pts = self.check_points(vartheta)
        return DesignProblem(self.hypotheses, self.lam, Criterion(pts, self.weights), self.horizon)

    def is_symmetric(self) -> bool:
        th = np.asarray(self.hypotheses.thetas)
        return bool(np.allclose(th + th[::-1], 1.0, atol=1e-12))


@dataclass(frozen=True)
class KwOptions:
    grid_step: float = 1e-3
    gap_tolerance: float = 5e-3
    symmetric: bool = False
    max_evaluations: int = 200
    xatol: float = 1e-4
    fatol: float = 1e-6
    start: tuple[float, ...] | None = None


@dataclass(frozen=True, eq=False)
class KwCertificate:
    """Outcome of a Kiefer-Weiss search.

    ``equalization_gap`` is ``max_i |E_{vartheta_i} tau - sup_ess| / sup_ess``;
    ``error_probs[i]`` is the probability of not accepting H_{i+1} under
    theta_{i+1}.
    """

    vartheta: tuple[float, ...]
    policy: TestPolicy
    sup_ess: float
    sup_theta: float
    ess_at_points: np.ndarray
    error_probs: np.ndarray
    error_matrix: np.ndarray
    equalization_gap: float
    effective_truncation: int
    converged: bool
    evaluations: int = 1
    curve: EssCurve | None = None


def solve_modified_kw(
    problem: KwProblem, vartheta: Sequence[float]
) -> tuple[TestPolicy, list[PerformanceReport], list[PerformanceReport]]:
    """Design for fixed criterion points; return the policy with reports at every theta_i and vartheta_i."""
    policy = backward_induce(problem.design_problem(vartheta)).policy
    at_thetas = evaluate_many(policy, problem.hypotheses.thetas)
    at_points = evaluate_many(policy, list(vartheta))
    return policy, at_thetas, at_points


def sup_grid(hyp: Hypotheses, step: float) -> np.ndarray:
    lo, hi = hyp.thetas[0], hyp.thetas[-1]
    count = int(round((hi - lo) / step)) + 1
    return np.linspace(lo, hi, count)


def certify(
    policy: TestPolicy,
    hyp: Hypotheses,
    vartheta: Sequence[float],
    grid_step: float = 1e-3,
    gap_tolerance: float = 5e-3,
    evaluations: int = 1,
) -> KwCertificate:
    """Measure how well ``policy`` equalizes ESS at ``vartheta`` against its supremum."""
    curve = ess_curve(policy, sup_grid(hyp, grid_step))
    at_points = ess_many(policy, list(vartheta))
    sup_ess, sup_theta = curve.refined_ess, curve.refined_theta
    j = int(np.argmax(at_points))
    if at_points[j] > sup_ess:
        sup_ess, sup_theta = float(at_points[j]), float(vartheta[j])
    gap = float(np.max(np.abs(at_points - sup_ess)) / sup_ess)
    reports = evaluate_many(policy, hyp.thetas)
    acc = np.vstack([r.accept_probs for r in reports])
    errs = 1.0 - np.diag(acc)
    matrix = acc.copy()
    np.fill_diagonal(matrix, 0.0)
    return KwCertificate(
        vartheta=tuple(float(v) for v in vartheta),
        policy=policy,
        sup_ess=sup_ess,
        sup_theta=sup_theta,
        ess_at_points=at_points,
        error_probs=errs,
        error_matrix=matrix,
        equalization_gap=gap,
        effective_truncation=max_stage(policy),
        converged=gap <= gap_tolerance,
        evaluations=evaluations,
        curve=curve,
    )


def _free_dims(k: int, symmetric: bool) -> int:
    return (k - 1) // 2 if symmetric else k - 1


def _points_from(z: np.ndarray, problem: KwProblem, symmetric: bool) -> tuple[float, ...]:
    th = problem.hypotheses.thetas
    m = problem.k - 1
    pts = [0.0] * m
    free = _free_dims(problem.k, symmetric)
    for i in range(free):
        pts[i] = th[i] + (th[i + 1] - th[i]) * float(expit(z[i]))
    if symmetric:
        for i in range(free):
            pts[m - 1 - i] = 1.0 - pts[i]
        if m % 2 == 1:
            pts[m // 2] = 0.5
    return tuple(pts)


def _z_from(points: Sequence[float], problem: KwProblem, free: int) -> np.ndarray:
    th = problem.hypotheses.thetas
    frac = [(points[i] - th[i]) / (th[i + 1] - th[i]) for i in range(free)]
    return logit(np.clip(frac, 1e-9, 1 - 1e-9))


def solve_kw(problem: KwProblem, options: KwOptions | None = None) -> KwCertificate:
    """Search criterion points minimizing the equalization gap.

    With ``options.symmetric`` (hypotheses symmetric about 1/2) the points
    satisfy ``vartheta_i = 1 - vartheta_{k-i}``, which halves the search
    dimension. The search is Nelder-Mead on a logistic reparametrization of
    each open interval ``(theta_i, theta_{i+1})``.
    """
    options = options or KwOptions()
    if options.symmetric and not problem.is_symmetric():
        raise ArgumentError("symmetric search requires hypotheses symmetric about 1/2")
    hyp = problem.hypotheses
    grid = sup_grid(hyp, options.grid_step)
    free = _free_dims(problem.k, options.symmetric)
    cache: dict[bytes, float] = {}

    def gap_at(z: np.ndarray) -> float:
        key = np.asarray(z, dtype=float).tobytes()
        if key not in cache:
            pts = _points_from(z, problem, options.symmetric)
            policy = backward_induce(problem.design_problem(pts)).policy
            curve = ess_curve(policy, grid)
            at_points = ess_many(policy, list(pts))
            sup_ess = max(curve.refined_ess, float(at_points.max()))
            cache[key] = float(np.max(np.abs(at_points - sup_ess)) / sup_ess)
        return cache[key]

    if options.start is not None:
        z0 = _z_from(problem.check_points(options.start), problem, free)
    else:
        z0 = np.zeros(free)

    if free == 0:
        best_z = z0
    else:
        res = minimize(
            gap_at,
            z0,
            method="Nelder-Mead",
            options={
                "initial_simplex": np.vstack([z0, z0 + 0.5 * np.eye(free)]),
                "maxfev": options.max_evaluations,
                "xatol": options.xatol,
                "fatol": options.fatol,
            },
        )
        best_z = np.asarray(res.x, dtype=float)
        tried = {k: v for k, v in cache.items()}
        best_key = min(tried, key=tried.get)
        if tried[best_key] < gap_at(best_z):
            best_z = np.frombuffer(best_key, dtype=float)

    pts = _points_from(best_z, problem, options.symmetric)
    policy = backward_induce(problem.design_problem(pts)).policy
    return certify(
        policy,
        hyp,
        pts,
        grid_step=options.grid_step,
        gap_tolerance=options.gap_tolerance,
        evaluations=max(len(cache), 1),
    )
