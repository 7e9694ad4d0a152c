"""Bayes design vs. MSPRT at alpha_i = 0.01: fit both, then compare expected sample sizes.

Fitting at N=4000 takes a few minutes per test. Pass --no-fit to evaluate
the published log-parameters directly.
"""

import argparse

import numpy as np

from seqtest import (
    Criterion,
    DesignProblem,
    FitTarget,
    Hypotheses,
    LambdaMatrix,
    MsprtSpec,
    backward_induce,
    build_msprt,
    evaluate_many,
    fit_msprt_thresholds,
    fit_multipliers,
)

PUBLISHED_LOG_LAMBDA = [6.91, 8.10, 7.13]
PUBLISHED_LOG_A = [3.96, 5.21, 4.12]


def summarize(name, params, reports):
    errs = [r.error_prob(i) for i, r in enumerate(reports, start=1)]
    print(f"{name:6} log params={np.round(params, 3).tolist()}")
    print(f"{'':6} alpha={[round(e, 5) for e in errs]}  ESS={[round(r.ess, 2) for r in reports]}")
    return np.array([r.ess for r in reports])


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--horizon", type=int, default=4000)
    parser.add_argument("--alpha", type=float, default=0.01)
    parser.add_argument("--no-fit", action="store_true")
    args = parser.parse_args()

    hyp = Hypotheses((0.3, 0.4, 0.5))
    crit = Criterion.uniform(hyp.thetas)
    if args.no_fit:
        lam = LambdaMatrix.from_log_per_hypothesis(PUBLISHED_LOG_LAMBDA)
        bayes_policy = backward_induce(DesignProblem(hyp, lam, crit, args.horizon)).policy
        msprt_policy = build_msprt(hyp, MsprtSpec.from_log_per_hypothesis(PUBLISHED_LOG_A, args.horizon))
        bayes = summarize("Bayes", PUBLISHED_LOG_LAMBDA, evaluate_many(bayes_policy, hyp.thetas))
        msprt = summarize("MSPRT", PUBLISHED_LOG_A, evaluate_many(msprt_policy, hyp.thetas))
    else:
        target = FitTarget.per_hypothesis([args.alpha] * 3)
        fb = fit_multipliers(hyp, crit, args.horizon, target)
        fm = fit_msprt_thresholds(hyp, args.horizon, target)
        bayes = summarize("Bayes", fb.fitted_params, fb.reports)
        msprt = summarize("MSPRT", fm.fitted_params, fm.reports)
        print(f"converged: Bayes={fb.converged} ({fb.evaluations} evals), MSPRT={fm.converged} ({fm.evaluations} evals)")
    print(f"R = ESS_MSPRT / ESS_Bayes = {np.round(msprt / bayes, 4).tolist()}")


if __name__ == "__main__":
    main()
