"""Independent reference computations used only by the tests."""

from __future__ import annotations

import math
from fractions import Fraction
from math import comb

import numpy as np

from seqtest.policy import CONTINUE, TestPolicy


def exact_pmf(n: int, s: int, theta: float) -> Fraction:
    t = Fraction(theta)
    return comb(n, s) * t**s * (1 - t) ** (n - s)


def exact_losses(thetas, lam: np.ndarray, n: int, s: int) -> list[Fraction]:
    g = [exact_pmf(n, s, t) for t in thetas]
    k = len(thetas)
    return [sum((Fraction(float(lam[i, j])) * g[i] for i in range(k) if i != j), Fraction(0)) for j in range(k)]


def scan_max_stage(policy: TestPolicy) -> int:
    """Largest stopping time over every sample path (direct enumeration)."""
    best = 1
    frontier = {0: True, 1: True}
    for n in range(1, policy.horizon + 1):
        row = policy.stage(n)
        cont = [s for s in frontier if row[s] == CONTINUE]
        if not cont:
            return n
        best = n + 1
        frontier = {}
        for s in cont:
            frontier[s] = True
            frontier[s + 1] = True
    return best


def random_policy(rng: np.random.Generator, k: int, horizon: int, p_continue: float = 0.6) -> TestPolicy:
    rows = []
    for n in range(1, horizon + 1):
        codes = rng.integers(1, k + 1, size=n + 1)
        if n < horizon:
            codes = np.where(rng.random(n + 1) < p_continue, CONTINUE, codes)
        rows.append(codes)
    return TestPolicy.from_rows(k, rows)


def direct_bounds(policy: TestPolicy, n: int):
    idx = [s for s in range(n + 1) if policy.action(n, s) == CONTINUE]
    return (min(idx), max(idx)) if idx else None


def log_exact(x: Fraction) -> float:
    """Natural log of a positive rational without going through a float of ``x``."""
    num, den = x.numerator, x.denominator
    shift = num.bit_length() - den.bit_length()
    scaled = Fraction(num, den) / Fraction(2) ** shift
    return math.log(float(scaled)) + shift * math.log(2.0)
