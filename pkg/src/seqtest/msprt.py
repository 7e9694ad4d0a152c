"""Truncated matrix sequential probability ratio tests (MSPRT) as tabulated policies."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from seqtest.errors import ArgumentError
from seqtest.model import Hypotheses
from seqtest.policy import CONTINUE, TestPolicy


@dataclass(frozen=True, eq=False)
class MsprtSpec:
    """Thresholds ``A[i, j] > 1``: accept H_i once its likelihood beats every H_j by ``A[i, j]``.

    The diagonal is ignored.
    """

    thresholds: np.ndarray
    horizon: int
    truncation_rule: str = "AcceptMaxLikelihood"

    def __post_init__(self):
        A = np.array(self.thresholds, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 2:
            raise ArgumentError(f"thresholds must be a k x k matrix, got shape {A.shape}")
        np.fill_diagonal(A, np.inf)
        off = ~np.eye(A.shape[0], dtype=bool)
        if not np.all(A[off] > 1.0) or np.any(np.isnan(A)):
            raise ArgumentError("every off-diagonal threshold must exceed 1")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ArgumentError(f"horizon must be a positive integer, got {self.horizon!r}")
        if self.truncation_rule != "AcceptMaxLikelihood":
            raise ArgumentError(f"unsupported truncation rule {self.truncation_rule!r}")
        A.setflags(write=False)
        object.__setattr__(self, "thresholds", A)
        object.__setattr__(self, "horizon", int(self.horizon))

    @classmethod
    def uniform(cls, k: int, A: float, horizon: int) -> "MsprtSpec":
        return cls(np.full((k, k), float(A)), horizon)

    @classmethod
    def per_hypothesis(cls, A: Sequence[float], horizon: int) -> "MsprtSpec":
        """``A[i, j] = A_j``: the threshold depends on the hypothesis being rejected."""
        A = np.asarray(A, dtype=float)
        return cls(np.repeat(A[None, :], len(A), axis=0), horizon)

    @classmethod
    def from_log_per_hypothesis(cls, log_A: Sequence[float], horizon: int) -> "MsprtSpec":
        return cls.per_hypothesis(np.exp(np.asarray(log_A, dtype=float)), horizon)

    @property
    def k(self) -> int:
        return self.thresholds.shape[0]


def build_msprt(hyp: Hypotheses, spec: MsprtSpec) -> TestPolicy:
    """Tabulate the truncated MSPRT.

    At each ``(n, s)`` the smallest ``i`` with ``l_ij >= log A[i, j]`` for all
    ``j != i`` is accepted. At the horizon, states without a qualifier accept
    the maximum-likelihood hypothesis (lowest index on ties) and are marked in
    ``policy.forced``.
    """
    if spec.k != hyp.k:
        raise ArgumentError(f"spec has {spec.k} hypotheses but {hyp.k} were given")
    k, N = hyp.k, spec.horizon
    th = hyp.as_array()
    log_t, log_1mt = np.log(th), np.log1p(-th)
    # pairwise log likelihood ratio increments per success / failure
    d1 = log_t[:, None] - log_t[None, :]
    d0 = log_1mt[:, None] - log_1mt[None, :]
    log_A = np.log(spec.thresholds)
    off = ~np.eye(k, dtype=bool)

    actions = []
    forced = None
    for n in range(1, N + 1):
        s = np.arange(n + 1)
        llr = s * d1[:, :, None] + (n - s) * d0[:, :, None]  # (i, j, s)
        ok = (llr >= log_A[:, :, None]) | ~off[:, :, None]
        qualifies = ok.all(axis=1)  # (i, s)
        any_q = qualifies.any(axis=0)
        row = np.where(any_q, np.argmax(qualifies, axis=0) + 1, CONTINUE)
        if n == N:
            loglik = np.outer(log_t, s) + np.outer(log_1mt, n - s)
            ml = np.argmax(loglik, axis=0) + 1
            forced = ~any_q
            row = np.where(any_q, row, ml)
        actions.append(row.astype(np.int16))
    return TestPolicy(
        k,
        tuple(actions),
        provenance="msprt",
        truncation_rule=spec.truncation_rule,
        forced=forced,
    )


def wald_bounds(spec: MsprtSpec) -> np.ndarray:
    """Upper bounds ``1 / A[j, i]`` on the probability of accepting H_j under H_i.

    The diagonal is ``nan``.
    """
    bounds = 1.0 / spec.thresholds.T
    out = np.array(bounds, dtype=float)
    np.fill_diagonal(out, math.nan)
    return out
