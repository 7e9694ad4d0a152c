"""Binomial kernels in the log domain and the problem types shared by every module.

Hypothesis labels are 1-based everywhere a *decision* is reported (policy
codes, argmin sets); arrays indexed by hypothesis are 0-based positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from seqtest.errors import ArgumentError

# Relative tolerance for treating two stopping losses as tied.
TIE_RTOL = 1e-12
_LOG_TIE = math.log1p(TIE_RTOL)


def _check_open_unit(values: Sequence[float], name: str) -> tuple[float, ...]:
    out = tuple(float(v) for v in values)
    for v in out:
        if not (0.0 < v < 1.0) or not math.isfinite(v):
            raise ArgumentError(f"{name} must lie in the open interval (0, 1), got {v!r}")
    return out


@dataclass(frozen=True)
class Hypotheses:
    """Simple hypotheses ``theta = theta_i`` on a Bernoulli success probability.

    Values are sorted on construction; callers supplying multipliers must use
    the sorted order.
    """

    thetas: tuple[float, ...]

    def __post_init__(self):
        thetas = tuple(sorted(_check_open_unit(self.thetas, "theta")))
        if len(thetas) < 2:
            raise ArgumentError("at least two hypotheses are required")
        if any(a == b for a, b in zip(thetas, thetas[1:])):
            raise ArgumentError(f"hypothesized values must be distinct, got {thetas}")
        object.__setattr__(self, "thetas", thetas)

    @property
    def k(self) -> int:
        return len(self.thetas)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.thetas, dtype=float)


@dataclass(frozen=True, eq=False)
class LambdaMatrix:
    """Non-negative Lagrange multipliers ``lambda[i, j]`` penalizing acceptance of H_j under H_i.

    An all-zero matrix is accepted: it describes the degenerate problem in
    which stopping is free.
    """

    values: np.ndarray

    def __post_init__(self):
        lam = np.array(self.values, dtype=float)
        if lam.ndim != 2 or lam.shape[0] != lam.shape[1] or lam.shape[0] < 2:
            raise ArgumentError(f"lambda must be a square k x k matrix with k >= 2, got shape {lam.shape}")
        np.fill_diagonal(lam, 0.0)
        if not np.all(np.isfinite(lam)) or np.any(lam < 0):
            raise ArgumentError("lambda entries must be finite and non-negative")
        lam.setflags(write=False)
        object.__setattr__(self, "values", lam)

    @classmethod
    def per_hypothesis(cls, lambdas: Sequence[float]) -> "LambdaMatrix":
        """Set ``lambda[i, j] = lambdas[i]`` for every ``j != i``."""
        lam = np.repeat(np.asarray(lambdas, dtype=float)[:, None], len(lambdas), axis=1)
        return cls(lam)

    @classmethod
    def from_log_per_hypothesis(cls, log_lambdas: Sequence[float]) -> "LambdaMatrix":
        return cls.per_hypothesis(np.exp(np.asarray(log_lambdas, dtype=float)))

    @property
    def k(self) -> int:
        return self.values.shape[0]

    def log_values(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            out = np.log(self.values)
        np.fill_diagonal(out, -np.inf)
        return out

    def scaled(self, c: float) -> "LambdaMatrix":
        return LambdaMatrix(self.values * float(c))

    def __eq__(self, other):
        return isinstance(other, LambdaMatrix) and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())


@dataclass(frozen=True)
class Criterion:
    """Points ``vartheta`` and weights ``gamma`` of the weighted expected sample size."""

    points: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        points = _check_open_unit(self.points, "criterion point")
        weights = tuple(float(w) for w in self.weights)
        if len(points) < 1 or len(points) != len(weights):
            raise ArgumentError("criterion needs K >= 1 points with one weight each")
        if any(w < 0 or not math.isfinite(w) for w in weights):
            raise ArgumentError("criterion weights must be non-negative")
        if abs(math.fsum(weights) - 1.0) > 1e-12:
            raise ArgumentError(f"criterion weights must sum to 1, got {math.fsum(weights)!r}")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, points: Sequence[float]) -> "Criterion":
        K = len(points)
        return cls(tuple(points), tuple([1.0 / K] * K))

    @property
    def K(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class DesignProblem:
    hypotheses: Hypotheses
    lam: LambdaMatrix
    criterion: Criterion
    horizon: int

    def __post_init__(self):
        if int(self.horizon) != self.horizon or self.horizon < 2:
            raise ArgumentError(f"horizon must be an integer >= 2, got {self.horizon!r}")
        object.__setattr__(self, "horizon", int(self.horizon))
        if self.lam.k != self.hypotheses.k:
            raise ArgumentError(
                f"lambda is {self.lam.k} x {self.lam.k} but there are {self.hypotheses.k} hypotheses"
            )

    @property
    def k(self) -> int:
        return self.hypotheses.k


# --------------------------------------------------------------------------
# Kernels


@lru_cache(maxsize=8)
def _log_factorials(n_max: int) -> np.ndarray:
    out = gammaln(np.arange(n_max + 1, dtype=float) + 1.0)
    out.setflags(write=False)
    return out


def log_factorials(n_max: int) -> np.ndarray:
    """``log(m!)`` for ``m = 0..n_max`` (cached; rounded up to a power of two)."""
    size = 1 << max(6, int(n_max).bit_length())
    return _log_factorials(size)[: n_max + 1]


def log_binom_row(n: int, thetas, lf: np.ndarray | None = None) -> np.ndarray:
    """Log binomial pmf over ``s = 0..n`` for each theta.

    Returns shape ``(n + 1,)`` for scalar theta, else ``(len(thetas), n + 1)``.
    """
    if lf is None:
        lf = log_factorials(n)
    th = np.asarray(thetas, dtype=float)
    s = np.arange(n + 1)
    log_c = lf[n] - lf[s] - lf[n - s]
    if th.ndim == 0:
        return log_c + s * math.log(th) + (n - s) * math.log1p(-th)
    return log_c[None, :] + np.outer(np.log(th), s) + np.outer(np.log1p(-th), n - s)


def log_binom_pmf(n: int, s: int, theta: float) -> float:
    """``log[C(n, s) theta^s (1 - theta)^(n - s)]``."""
    if int(n) != n or n < 1:
        raise ArgumentError(f"n must be a positive integer, got {n!r}")
    if int(s) != s or not 0 <= s <= n:
        raise ArgumentError(f"s must be an integer in [0, {n}], got {s!r}")
    if not 0.0 < theta < 1.0:
        raise ArgumentError(f"theta must lie in (0, 1), got {theta!r}")
    n, s = int(n), int(s)
    log_c = math.lgamma(n + 1) - math.lgamma(s + 1) - math.lgamma(n - s + 1)
    return log_c + s * math.log(theta) + (n - s) * math.log1p(-theta)


def mixture_log_row(criterion: Criterion, n: int, lf: np.ndarray | None = None) -> np.ndarray:
    log_g = log_binom_row(n, criterion.points, lf)
    with np.errstate(divide="ignore"):
        log_w = np.log(np.asarray(criterion.weights))
    return logsumexp(log_g + log_w[:, None], axis=0)


def mixture_log_pmf(criterion: Criterion, n: int, s: int) -> float:
    """Log of the gamma-weighted mixture of binomial pmfs at ``(n, s)``."""
    terms = [
        math.log(w) + log_binom_pmf(n, s, p) for p, w in zip(criterion.points, criterion.weights) if w > 0
    ]
    if len(terms) == 1:
        return terms[0]
    return float(logsumexp(terms))


def stage_losses(log_g: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Log of ``sum_{i != j} lam[i, j] * g_i(s)`` for every ``j`` and ``s``.

    ``log_g`` has shape ``(k, n + 1)``. A per-state offset (the largest
    ``log g_i(s)``) keeps the exponentials in range. Returns shape ``(k, n + 1)``;
    an all-zero loss is ``-inf``.
    """
    offset = log_g.max(axis=0)
    scaled = np.exp(log_g - offset)
    weighted = lam.T @ scaled
    with np.errstate(divide="ignore"):
        return np.log(weighted) + offset


def choose_decisions(log_losses: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Minimal loss per state and the lowest 1-based index attaining it within ``TIE_RTOL``."""
    log_min = log_losses.min(axis=0)
    tied = log_losses <= log_min + _LOG_TIE
    decision = np.argmax(tied, axis=0) + 1
    return np.exp(log_min), decision


def stopping_loss(hyp: Hypotheses, lam: LambdaMatrix, n: int, s: int) -> tuple[float, frozenset[int]]:
    """Minimal expected penalty of stopping at ``(n, s)`` and the set of optimal decisions.

    The set holds every 1-based hypothesis label whose loss is within a relative
    ``1e-12`` of the minimum.
    """
    if lam.k != hyp.k:
        raise ArgumentError("lambda dimension does not match the number of hypotheses")
    if int(s) != s or not 0 <= s <= n:
        raise ArgumentError(f"s must be an integer in [0, {n}], got {s!r}")
    log_g = np.array([[log_binom_pmf(n, s, t)] for t in hyp.thetas])
    log_losses = stage_losses(log_g, lam.values)[:, 0]
    log_min = log_losses.min()
    argmin = frozenset(int(j) + 1 for j in np.flatnonzero(log_losses <= log_min + _LOG_TIE))
    return float(math.exp(log_min)), argmin
