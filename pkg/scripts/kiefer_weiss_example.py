"""Kiefer-Weiss design for theta = (0.3, 0.5, 0.7), lambda_i = 200, N = 1200.

Searches vartheta_1 (with vartheta_2 = 1 - vartheta_1), prints the equalization
certificate, and compares with a Bayes design fitted to the same error levels.
"""

import argparse

from seqtest import (
    Criterion,
    FitTarget,
    Hypotheses,
    KwOptions,
    KwProblem,
    LambdaMatrix,
    ess_curve,
    fit_multipliers,
    solve_kw,
)
from seqtest.kiefer_weiss import sup_grid


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--horizon", type=int, default=1200)
    parser.add_argument("--lam", type=float, default=200.0)
    parser.add_argument("--compare", action="store_true", help="also fit the Bayes comparison design")
    args = parser.parse_args()

    hyp = Hypotheses((0.3, 0.5, 0.7))
    problem = KwProblem(hyp, LambdaMatrix.per_hypothesis([args.lam] * 3), (0.5, 0.5), args.horizon)
    cert = solve_kw(problem, KwOptions(symmetric=True))
    print(f"vartheta          {tuple(round(v, 5) for v in cert.vartheta)}")
    print(f"sup ESS           {cert.sup_ess:.3f} at theta={cert.sup_theta:.4f}")
    print(f"ESS at vartheta   {[round(e, 3) for e in cert.ess_at_points]}")
    print(f"equalization gap  {cert.equalization_gap:.2e} (converged={cert.converged}, {cert.evaluations} designs)")
    print(f"alpha             {[round(e, 4) for e in cert.error_probs]}")
    print(f"max stage         {cert.effective_truncation}")

    if args.compare:
        target = FitTarget.per_hypothesis(list(cert.error_probs))
        fit = fit_multipliers(hyp, Criterion.uniform(hyp.thetas), args.horizon, target)
        curve = ess_curve(fit.policy, sup_grid(hyp, 1e-3))
        print(f"Bayes fit alpha   {[round(e, 4) for e in fit.achieved]} (converged={fit.converged})")
        print(f"Bayes sup ESS     {curve.refined_ess:.3f}; KW/Bayes = {cert.sup_ess / curve.refined_ess:.3f}")


if __name__ == "__main__":
    main()
