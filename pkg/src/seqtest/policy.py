"""Tabulated sufficient-statistic tests.

A policy stores, for every stage ``n = 1..N`` and successes count ``s = 0..n``,
either ``CONTINUE`` (0) or the 1-based label of the hypothesis accepted on
stopping.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from seqtest.errors import ArgumentError

CONTINUE = 0

PROVENANCES = ("optimal-design", "msprt", "external")
TRUNCATION_RULES = ("AcceptMaxLikelihood",)
TIE_RULES = ("lowest-index",)


@dataclass(frozen=True, eq=False)
class TestPolicy:
    """A truncated deterministic test based on the running success count.

    ``forced`` optionally marks the stage-``N`` states where the decision came
    from the truncation rule rather than from the test's own criterion (used
    for the no-decision mass of an MSPRT).
    """

    __test__ = False  # keep pytest from collecting this class

    k: int
    actions: tuple[np.ndarray, ...]
    provenance: str = "external"
    truncation_rule: str | None = None
    tie_rule: str = "lowest-index"
    forced: np.ndarray | None = None

    def __post_init__(self):
        k = int(self.k)
        if k < 2:
            raise ArgumentError(f"a policy needs k >= 2 hypotheses, got {self.k!r}")
        object.__setattr__(self, "k", k)
        if self.provenance not in PROVENANCES:
            raise ArgumentError(f"unknown provenance {self.provenance!r}")
        if self.truncation_rule is not None and self.truncation_rule not in TRUNCATION_RULES:
            raise ArgumentError(f"unknown truncation rule {self.truncation_rule!r}")
        if self.tie_rule not in TIE_RULES:
            raise ArgumentError(f"unknown tie rule {self.tie_rule!r}")
        if len(self.actions) < 1:
            raise ArgumentError("a policy needs at least one stage")
        rows = []
        for n, row in enumerate(self.actions, start=1):
            arr = np.array(row, dtype=np.int16)
            if arr.shape != (n + 1,):
                raise ArgumentError(f"stage {n} must have {n + 1} entries, got shape {arr.shape}")
            if arr.min() < 0 or arr.max() > k:
                raise ArgumentError(f"stage {n} has an action outside 0..{k}")
            arr.setflags(write=False)
            rows.append(arr)
        if np.any(rows[-1] == CONTINUE):
            raise ArgumentError("every state at the final stage must stop")
        object.__setattr__(self, "actions", tuple(rows))
        if self.forced is not None:
            forced = np.array(self.forced, dtype=bool)
            if forced.shape != rows[-1].shape:
                raise ArgumentError("forced mask must cover every final-stage state")
            forced.setflags(write=False)
            object.__setattr__(self, "forced", forced)

    @property
    def horizon(self) -> int:
        return len(self.actions)

    def stage(self, n: int) -> np.ndarray:
        if not 1 <= n <= self.horizon:
            raise ArgumentError(f"stage must lie in 1..{self.horizon}, got {n!r}")
        return self.actions[n - 1]

    def action(self, n: int, s: int) -> int:
        row = self.stage(n)
        if not 0 <= s <= n:
            raise ArgumentError(f"s must lie in 0..{n}, got {s!r}")
        return int(row[s])

    @classmethod
    def constant(cls, k: int, horizon: int = 1, accept: int = 1) -> "TestPolicy":
        """Stop at stage 1 accepting ``accept`` regardless of the data."""
        actions = [np.full(n + 1, accept, dtype=np.int16) for n in range(1, horizon + 1)]
        return cls(k, tuple(actions))

    @classmethod
    def from_rows(cls, k: int, rows: Sequence[Sequence[int]], **kwargs) -> "TestPolicy":
        return cls(k, tuple(np.asarray(r, dtype=np.int16) for r in rows), **kwargs)

    def __eq__(self, other):
        if not isinstance(other, TestPolicy):
            return NotImplemented
        if (self.k, self.horizon, self.provenance, self.truncation_rule, self.tie_rule) != (
            other.k,
            other.horizon,
            other.provenance,
            other.truncation_rule,
            other.tie_rule,
        ):
            return False
        if (self.forced is None) != (other.forced is None):
            return False
        if self.forced is not None and not np.array_equal(self.forced, other.forced):
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.actions, other.actions))

    __hash__ = None
