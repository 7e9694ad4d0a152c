import math

import numpy as np
import pytest

from seqtest.errors import ArgumentError
from seqtest.evaluate import brute_force_oracle, error_matrix, evaluate, evaluate_many
from seqtest.model import Hypotheses
from seqtest.msprt import MsprtSpec, build_msprt, wald_bounds
from seqtest.policy import CONTINUE


def test_two_hypotheses_continue_at_first_stage():
    policy = build_msprt(Hypotheses((0.3, 0.5)), MsprtSpec.uniform(2, 20.0, 50))
    assert policy.action(1, 0) == CONTINUE
    assert policy.action(1, 1) == CONTINUE
    assert policy.provenance == "msprt"


def test_two_hypotheses_stop_once_llr_crosses():
    # log(0.7/0.5) * n >= log 20 first at n = 9 for the all-failure path
    policy = build_msprt(Hypotheses((0.3, 0.5)), MsprtSpec.uniform(2, 20.0, 50))
    n = math.ceil(math.log(20) / math.log(0.7 / 0.5))
    assert policy.action(n - 1, 0) == CONTINUE
    assert policy.action(n, 0) == 1
    # all successes favour 0.5: log(0.5/0.3) * n >= log 20
    n = math.ceil(math.log(20) / math.log(0.5 / 0.3))
    assert policy.action(n - 1, n - 1) == CONTINUE
    assert policy.action(n, n) == 2


def test_wald_bounds_trivial():
    assert np.allclose(wald_bounds(MsprtSpec.uniform(3, 20.0, 10))[~np.eye(3, dtype=bool)], 0.05)
    b = wald_bounds(MsprtSpec.uniform(3, 2 / 0.01, 10))
    assert np.allclose(b[~np.eye(3, dtype=bool)], 0.005)
    assert np.all(np.isnan(np.diag(b)))


def test_wald_bounds_transpose():
    A = np.array([[1.0, 10.0, 30.0], [4.0, 1.0, 5.0], [8.0, 9.0, 1.0]])
    b = wald_bounds(MsprtSpec(A, 10))
    assert b[0, 1] == pytest.approx(1 / 4.0)
    assert b[1, 0] == pytest.approx(1 / 10.0)
    assert b[2, 0] == pytest.approx(1 / 30.0)


def test_per_hypothesis_thresholds_depend_on_rejected_column():
    spec = MsprtSpec.per_hypothesis([2.0, 3.0, 5.0], 10)
    A = spec.thresholds
    assert A[0, 1] == 3.0 and A[2, 1] == 3.0 and A[1, 2] == 5.0
    spec2 = MsprtSpec.from_log_per_hypothesis(np.log([2.0, 3.0, 5.0]), 10)
    assert np.allclose(spec2.thresholds, A)


@pytest.mark.parametrize("bad", [1.0, 0.5, math.nan])
def test_thresholds_must_exceed_one(bad):
    A = np.full((3, 3), 10.0)
    A[1, 2] = bad
    with pytest.raises(ArgumentError):
        MsprtSpec(A, 10)


def test_spec_dimension_must_match():
    with pytest.raises(ArgumentError):
        build_msprt(Hypotheses((0.3, 0.5)), MsprtSpec.uniform(3, 20.0, 10))


def test_continuation_set_is_interval_for_two_hypotheses(rng):
    for _ in range(30):
        t = np.sort(rng.uniform(0.05, 0.95, 2))
        if t[1] - t[0] < 1e-3:
            continue
        A = rng.uniform(1.5, 200.0, size=(2, 2))
        policy = build_msprt(Hypotheses(tuple(t)), MsprtSpec(A, 60))
        for n in range(1, 60):
            idx = np.flatnonzero(policy.stage(n) == CONTINUE)
            if idx.size:
                assert idx[-1] - idx[0] + 1 == idx.size


def test_forced_mask_marks_undecided_horizon_states():
    hyp = Hypotheses((0.3, 0.4, 0.5))
    policy = build_msprt(hyp, MsprtSpec.uniform(3, 20.0, 30))
    assert policy.forced is not None and policy.forced.any()
    loglik = np.outer(np.log(hyp.as_array()), np.arange(31)) + np.outer(
        np.log1p(-hyp.as_array()), 30 - np.arange(31)
    )
    ml = np.argmax(loglik, axis=0) + 1
    assert np.array_equal(policy.stage(30)[policy.forced], ml[policy.forced])


def test_forced_mass_matches_oracle():
    hyp = Hypotheses((0.3, 0.4, 0.5))
    policy = build_msprt(hyp, MsprtSpec.uniform(3, 20.0, 12))
    for t in hyp.thetas:
        assert evaluate(policy, t).no_decision_mass == pytest.approx(
            brute_force_oracle(policy, t).no_decision_mass, abs=1e-12
        )


def test_construction_is_deterministic():
    hyp = Hypotheses((0.3, 0.4, 0.5))
    spec = MsprtSpec.from_log_per_hypothesis([3.96, 5.21, 4.12], 300)
    a, b = build_msprt(hyp, spec), build_msprt(hyp, spec)
    assert a == b
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.actions, b.actions))


def test_table1_errors_respect_wald_bounds():
    hyp = Hypotheses((0.3, 0.4, 0.5))
    spec = MsprtSpec.uniform(3, 20.0, 4000)
    alpha = error_matrix(build_msprt(hyp, spec), hyp)
    bounds = wald_bounds(spec)
    off = ~np.eye(3, dtype=bool)
    assert np.all(alpha[off] <= bounds[off])


def test_wald_battery(rng):
    checked = 0
    for _ in range(60):
        k = int(rng.integers(2, 5))
        t = np.sort(rng.uniform(0.05, 0.95, k))
        if np.min(np.diff(t)) < 0.1:
            continue
        hyp = Hypotheses(tuple(t))
        A = np.exp(rng.uniform(0.5, 4.5, size=(k, k)))
        spec = MsprtSpec(A, 1000)
        policy = build_msprt(hyp, spec)
        reports = evaluate_many(policy, hyp.thetas)
        if max(r.no_decision_mass for r in reports) >= 1e-12:
            continue
        checked += 1
        bounds = wald_bounds(spec)
        for i, r in enumerate(reports):
            for j in range(k):
                if i != j:
                    assert r.accept_probs[j] <= bounds[i, j] + 1e-12
    assert checked >= 20
