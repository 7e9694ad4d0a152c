"""Exact operating characteristics of tabulated tests.

The acceptance, tail and sample-size recursions run backward from the last
stage that can be reached, seeded with binomial pmfs. All quantities are
bounded by the pmf itself, so the probability domain is safe; terms that
underflow carry less than 1e-300 of mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from seqtest.design import _apply_j, max_stage
from seqtest.errors import ArgumentError, NumericalError
from seqtest.model import Hypotheses, LambdaMatrix, choose_decisions, log_binom_row, log_factorials, stage_losses
from seqtest.parallel import map_threads
from seqtest.policy import CONTINUE, TestPolicy

BRUTE_FORCE_MAX_N = 20


@dataclass(frozen=True, eq=False)
class PerformanceReport:
    """Operating characteristics of a policy under one parameter value.

    ``accept_probs[j - 1]`` is the probability of accepting H_j.
    """

    theta: float
    accept_probs: np.ndarray
    ess: float
    tail: np.ndarray | None = None
    no_decision_mass: float = 0.0

    def error_prob(self, i: int) -> float:
        """Probability of not accepting H_i (meaningful when ``theta`` is theta_i)."""
        return float(1.0 - self.accept_probs[i - 1])


@dataclass(frozen=True, eq=False)
class EssCurve:
    thetas: np.ndarray
    ess: np.ndarray
    argmax_theta: float
    max_ess: float
    refined_theta: float
    refined_ess: float


@dataclass(frozen=True, eq=False)
class MonteCarloReport:
    theta: float
    replications: int
    seed: int
    generator: str
    accept_freqs: np.ndarray
    accept_se: np.ndarray
    mean_stopping_time: float
    stopping_time_se: float
    stopping_time_var: float = field(default=0.0)


def _check_theta(theta) -> np.ndarray:
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    if th.ndim != 1 or np.any(~(th > 0.0) | ~(th < 1.0)):
        raise ArgumentError(f"theta must lie in (0, 1), got {theta!r}")
    return th


def _onehot(codes: np.ndarray, k: int) -> np.ndarray:
    return (codes[None, :] == np.arange(1, k + 1)[:, None]).astype(float)


def _sweep(policy: TestPolicy, thetas: np.ndarray, *, accept: bool = True, no_decision: bool = False):
    """Backward recursions for acceptance probabilities, ESS and no-decision mass.

    Returns ``(accept (T, k) or None, ess (T,), no_decision (T,))``.
    """
    k = policy.k
    M = max_stage(policy)
    lf = log_factorials(M)
    T = thetas.size
    g = np.exp(log_binom_row(M, thetas, lf))
    code = policy.stage(M)
    a = g[:, None, :] * _onehot(code, k)[None] if accept else None
    c = np.zeros((T, M + 1))
    d = None
    if no_decision and policy.forced is not None and M == policy.horizon:
        d = g * policy.forced
    for n in range(M - 1, 0, -1):
        code = policy.stage(n)
        stop = code != CONTINUE
        g = np.exp(log_binom_row(n, thetas, lf))
        if a is not None:
            a = np.where(stop, g[:, None, :] * _onehot(code, k)[None], _apply_j(a, n))
        c = np.where(stop, 0.0, g + _apply_j(c, n))
        if d is not None:
            d = np.where(stop, 0.0, _apply_j(d, n))
    ess_vals = 1.0 + c[:, 0] + c[:, 1] if M > 1 else np.ones(T)
    acc = a[:, :, 0] + a[:, :, 1] if a is not None else None
    nd = d[:, 0] + d[:, 1] if d is not None else np.zeros(T)
    if not np.all(np.isfinite(ess_vals)) or (acc is not None and not np.all(np.isfinite(acc))):
        raise NumericalError("non-finite value in the evaluation recursions")
    return acc, ess_vals, nd


def accept_probs(policy: TestPolicy, theta: float) -> np.ndarray:
    """Probability of accepting each hypothesis when the success probability is ``theta``."""
    acc, _, _ = _sweep(policy, _check_theta(theta))
    return acc[0]


def tail_prob(policy: TestPolicy, theta: float, m: int) -> float:
    """``P(tau > m)`` by the backward survival recursion started at stage ``m``."""
    if int(m) != m or not 1 <= m <= policy.horizon:
        raise ArgumentError(f"m must be an integer in 1..{policy.horizon}, got {m!r}")
    th = _check_theta(theta)
    m = int(m)
    lf = log_factorials(m)
    b = np.exp(log_binom_row(m, th, lf))[0] * (policy.stage(m) == CONTINUE)
    for n in range(m - 1, 0, -1):
        b = np.where(policy.stage(n) == CONTINUE, _apply_j(b, n), 0.0)
    return float(b[0] + b[1]) if m > 1 else float(b.sum())


def tail_curve(policy: TestPolicy, theta: float, m_max: int | None = None) -> np.ndarray:
    """``P(tau > m)`` for ``m = 1..m_max`` by forward propagation of surviving mass.

    O(m_max^2) overall, against O(m_max^3) for repeated :func:`tail_prob` calls.
    """
    th = float(_check_theta(theta)[0])
    m_max = policy.horizon if m_max is None else int(m_max)
    if not 1 <= m_max <= policy.horizon:
        raise ArgumentError(f"m_max must lie in 1..{policy.horizon}")
    out = np.zeros(m_max)
    mass = np.array([1.0 - th, th])
    for n in range(1, m_max + 1):
        mass = mass * (policy.stage(n) == CONTINUE)
        out[n - 1] = mass.sum()
        if out[n - 1] == 0.0:
            break
        nxt = np.zeros(n + 2)
        nxt[:-1] += mass * (1.0 - th)
        nxt[1:] += mass * th
        mass = nxt
    return out


def ess(policy: TestPolicy, theta: float, check: bool = False) -> float:
    """Expected sample size under ``theta``.

    With ``check=True`` the value is recomputed as ``1 + sum_m P(tau > m)`` from
    independent survival recursions and a :class:`NumericalError` is raised if
    the two disagree beyond 1e-9 relative.
    """
    _, e, _ = _sweep(policy, _check_theta(theta), accept=False)
    value = float(e[0])
    if check:
        M = max_stage(policy)
        alt = 1.0 + math.fsum(tail_prob(policy, theta, m) for m in range(1, M))
        if abs(alt - value) > 1e-9 * abs(value):
            raise NumericalError(f"ESS recursions disagree: {value!r} vs tail sum {alt!r}")
    return value


def ess_many(policy: TestPolicy, thetas: Sequence[float], chunk: int = 64) -> np.ndarray:
    th = _check_theta(thetas)
    parts = [th[i : i + chunk] for i in range(0, th.size, chunk)]
    return np.concatenate(map_threads(lambda p: _sweep(policy, p, accept=False)[1], parts))


def ess_curve(policy: TestPolicy, theta_grid: Sequence[float]) -> EssCurve:
    """ESS over a grid with a three-point quadratic refinement of the maximizer."""
    grid = _check_theta(theta_grid)
    if np.any(np.diff(grid) <= 0):
        raise ArgumentError("theta grid must be strictly increasing")
    values = ess_many(policy, grid)
    i = int(np.argmax(values))
    best_t, best_e = float(grid[i]), float(values[i])
    ref_t, ref_e = best_t, best_e
    if 0 < i < grid.size - 1:
        x0, x1, x2 = grid[i - 1 : i + 2]
        y0, y1, y2 = values[i - 1 : i + 2]
        denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
        a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
        b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom
        if a < 0:
            xv = float(np.clip(-b / (2 * a), x0, x2))
            ev = ess(policy, xv)
            if ev > ref_e:
                ref_t, ref_e = xv, ev
    return EssCurve(grid, values, best_t, best_e, ref_t, ref_e)


def evaluate(policy: TestPolicy, theta: float, tail: bool = False) -> PerformanceReport:
    """Full exact report; the tail curve is computed only on request."""
    th = _check_theta(theta)
    acc, e, nd = _sweep(policy, th, no_decision=True)
    curve = tail_curve(policy, float(th[0])) if tail else None
    return PerformanceReport(float(th[0]), acc[0], float(e[0]), curve, float(nd[0]))


def evaluate_many(policy: TestPolicy, thetas: Sequence[float]) -> list[PerformanceReport]:
    th = _check_theta(thetas)

    def one(t):
        acc, e, nd = _sweep(policy, np.array([t]), no_decision=True)
        return PerformanceReport(float(t), acc[0], float(e[0]), None, float(nd[0]))

    return map_threads(one, th)


def error_matrix(policy: TestPolicy, hyp: Hypotheses) -> np.ndarray:
    """``alpha[i, j]``: probability of accepting H_j under theta_i (diagonal zeroed)."""
    acc, _, _ = _sweep(policy, hyp.as_array())
    out = acc.copy()
    np.fill_diagonal(out, 0.0)
    return out


def brute_force_oracle(policy: TestPolicy, theta: float) -> PerformanceReport:
    """Exact characteristics by walking all ``2^N`` observation sequences.

    Independent of the recursions: each full sequence carries probability
    ``theta^S_N (1 - theta)^(N - S_N)`` and is followed through the table.
    """
    N = policy.horizon
    if N > BRUTE_FORCE_MAX_N:
        raise ArgumentError(f"brute force is limited to N <= {BRUTE_FORCE_MAX_N}, got {N}")
    th = float(_check_theta(theta)[0])
    paths = np.arange(1 << N, dtype=np.int64)
    s = np.zeros(paths.size, dtype=np.int64)
    tau = np.zeros(paths.size, dtype=np.int64)
    decision = np.zeros(paths.size, dtype=np.int64)
    alive = np.ones(paths.size, dtype=bool)
    forced_hit = np.zeros(paths.size, dtype=bool)
    for n in range(1, N + 1):
        s += (paths >> (n - 1)) & 1
        act = policy.stage(n)[s]
        newly = alive & (act != CONTINUE)
        tau[newly] = n
        decision[newly] = act[newly]
        if n == N and policy.forced is not None:
            forced_hit = newly & policy.forced[s]
        alive &= ~newly
    weight = np.exp(s * math.log(th) + (N - s) * math.log1p(-th))
    acc = np.array([math.fsum(weight[decision == j]) for j in range(1, policy.k + 1)])
    e = math.fsum(weight * tau)
    tail = np.array([math.fsum(weight[tau > m]) for m in range(1, N + 1)])
    return PerformanceReport(th, acc, e, tail, math.fsum(weight[forced_hit]))


def monte_carlo(
    policy: TestPolicy,
    theta: float,
    replications: int,
    seed: int,
    chunk: int = 1 << 16,
) -> MonteCarloReport:
    """Simulate Bernoulli paths through the table.

    Replications are split into fixed-size chunks, each with its own PCG64
    stream spawned from ``seed``, so results do not depend on the thread count.
    """
    if int(replications) != replications or replications < 1:
        raise ArgumentError("replications must be a positive integer")
    th = float(_check_theta(theta)[0])
    replications = int(replications)
    sizes = [min(chunk, replications - i) for i in range(0, replications, chunk)]
    streams = np.random.SeedSequence(int(seed) & (2**64 - 1)).spawn(len(sizes))

    def run(job):
        size, ss = job
        rng = np.random.Generator(np.random.PCG64(ss))
        s = np.zeros(size, dtype=np.int64)
        tau = np.zeros(size, dtype=np.int64)
        decision = np.zeros(size, dtype=np.int64)
        active = np.arange(size)
        for n in range(1, policy.horizon + 1):
            s[active] += rng.random(active.size) < th
            act = policy.stage(n)[s[active]]
            stopped = act != CONTINUE
            done = active[stopped]
            tau[done] = n
            decision[done] = act[stopped]
            active = active[~stopped]
            if active.size == 0:
                break
        counts = np.bincount(decision, minlength=policy.k + 1)[1:]
        return counts, int(tau.sum()), float(np.sum(tau.astype(float) ** 2))

    results = map_threads(run, list(zip(sizes, streams)))
    counts = sum(r[0] for r in results)
    total = sum(r[1] for r in results)
    total_sq = math.fsum(r[2] for r in results)
    R = replications
    freqs = counts / R
    mean = total / R
    var = max(total_sq / R - mean * mean, 0.0) * (R / (R - 1) if R > 1 else 0.0)
    return MonteCarloReport(
        theta=th,
        replications=R,
        seed=int(seed),
        generator="PCG64",
        accept_freqs=freqs,
        accept_se=np.sqrt(freqs * (1 - freqs) / R),
        mean_stopping_time=mean,
        stopping_time_se=math.sqrt(var / R),
        stopping_time_var=var,
    )


def stopping_loss_decay(hyp: Hypotheses, lam: LambdaMatrix, n_max: int) -> np.ndarray:
    """``sum_s u_n(s)`` for ``n = 1..n_max``, the integrated loss of stopping at stage ``n``."""
    if int(n_max) != n_max or not 1 <= n_max <= 10_000:
        raise ArgumentError("n_max must be an integer in 1..10000")
    if lam.k != hyp.k:
        raise ArgumentError("lambda dimension does not match the number of hypotheses")
    lf = log_factorials(int(n_max))
    th = hyp.as_array()
    out = np.empty(int(n_max))
    for n in range(1, int(n_max) + 1):
        u, _ = choose_decisions(stage_losses(log_binom_row(n, th, lf), lam.values))
        out[n - 1] = math.fsum(u)
    return out
