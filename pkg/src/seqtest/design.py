"""Backward induction for the test minimizing the Lagrangian, in sufficient-statistic form."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from seqtest.errors import ArgumentError, NumericalError
from seqtest.model import (
    DesignProblem,
    choose_decisions,
    log_binom_row,
    log_factorials,
    stage_losses,
)
from seqtest.policy import CONTINUE, TestPolicy


@dataclass(frozen=True)
class DesignOutput:
    """Result of :func:`backward_induce`.

    ``continuation[n - 1]`` is the ``(s_lo, s_hi)`` span of continuation states
    at stage ``n``, or ``None`` when every state stops.
    """

    policy: TestPolicy
    lagrangian_value: float
    continuation: tuple[tuple[int, int] | None, ...]
    stage1_values: tuple[float, float]


def _apply_j(values: np.ndarray, n: int) -> np.ndarray:
    """Stage-``n`` expectation of a stage-``n + 1`` function of the success count.

    ``values`` has ``n + 2`` entries (last axis); returns ``n + 1`` entries.
    """
    s = np.arange(n + 1)
    return (values[..., :-1] * (n + 1 - s) + values[..., 1:] * (s + 1)) / (n + 1)


def stage_stopping(problem: DesignProblem, n: int, lf: np.ndarray | None = None):
    """Stopping loss ``u_n(s)`` and the lowest-index optimal decision for every ``s``."""
    log_g = log_binom_row(n, problem.hypotheses.as_array(), lf)
    return choose_decisions(stage_losses(log_g, problem.lam.values))


def backward_induce(problem: DesignProblem) -> DesignOutput:
    """Construct the truncated test minimizing weighted ESS plus penalized errors.

    The value function is swept from stage ``N`` down to stage 1; only two
    adjacent stage vectors are kept. A state stops when the stopping loss does
    not exceed the continuation cost (ties stop).
    """
    if not isinstance(problem, DesignProblem):
        raise ArgumentError("backward_induce expects a DesignProblem")
    N = problem.horizon
    lf = log_factorials(N)
    points = np.asarray(problem.criterion.points)
    weights = np.asarray(problem.criterion.weights)

    actions: list[np.ndarray] = [None] * N  # type: ignore[list-item]
    u, decision = stage_stopping(problem, N, lf)
    actions[N - 1] = decision.astype(np.int16)
    value = u
    for n in range(N - 1, 0, -1):
        u, decision = stage_stopping(problem, n, lf)
        mix = weights @ np.exp(log_binom_row(n, points, lf))
        cont = mix + _apply_j(value, n)
        stop = u <= cont
        actions[n - 1] = np.where(stop, decision, CONTINUE).astype(np.int16)
        value = np.where(stop, u, cont)
        if not np.all(np.isfinite(value)):
            raise NumericalError(f"non-finite value function at stage {n}")

    policy = TestPolicy(problem.k, tuple(actions), provenance="optimal-design")
    bounds = tuple(continuation_bounds(policy, n) for n in range(1, N + 1))
    lagrangian = 1.0 + math.fsum(value)
    return DesignOutput(policy, lagrangian, bounds, (float(value[0]), float(value[1])))


def max_stage(policy: TestPolicy) -> int:
    """Largest number of observations the test can take.

    Smallest ``n*`` such that no *reachable* state at any stage ``>= n*``
    continues. Backward induction also labels states that no sample path can
    reach, so a plain scan of the table would overstate the truncation point.
    """
    reach = np.ones(2, dtype=bool)
    last = 0
    for n in range(1, policy.horizon + 1):
        cont = reach & (policy.actions[n - 1] == CONTINUE)
        if not cont.any():
            break
        last = n
        reach = np.zeros(n + 2, dtype=bool)
        reach[:-1] |= cont
        reach[1:] |= cont
    return last + 1


def continuation_bounds(policy: TestPolicy, n: int) -> tuple[int, int] | None:
    """Smallest and largest ``s`` continuing at stage ``n``; ``None`` if all stop."""
    idx = np.flatnonzero(policy.stage(n) == CONTINUE)
    if idx.size == 0:
        return None
    return int(idx[0]), int(idx[-1])
