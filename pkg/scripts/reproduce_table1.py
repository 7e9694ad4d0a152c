"""Operating characteristics of the MSPRT with A_ij = (k-1)/alpha over the Table 1 grid.

Usage: python scripts/reproduce_table1.py [--horizon 4000] [--alphas 0.1 0.01 ...]
"""

import argparse
import time

from seqtest import Hypotheses, MsprtSpec, build_msprt, evaluate_many

ALPHAS = [0.1, 0.05, 0.025, 0.01, 0.005, 0.002, 0.001, 0.0005, 5e-7, 5e-9]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--horizon", type=int, default=4000)
    parser.add_argument("--alphas", type=float, nargs="+", default=ALPHAS)
    args = parser.parse_args()

    hyp = Hypotheses((0.3, 0.4, 0.5))
    print(f"{'alpha':>8} {'a1*':>10} {'a2*':>10} {'a3*':>10} {'ESS1':>7} {'ESS2':>7} {'ESS3':>7} {'no-dec':>8}")
    for alpha in args.alphas:
        t0 = time.perf_counter()
        policy = build_msprt(hyp, MsprtSpec.uniform(3, 2 / alpha, args.horizon))
        reports = evaluate_many(policy, hyp.thetas)
        errs = [r.error_prob(i) for i, r in enumerate(reports, start=1)]
        ess = [r.ess for r in reports]
        nd = max(r.no_decision_mass for r in reports)
        print(
            f"{alpha:8.2g} " + " ".join(f"{e:10.4g}" for e in errs) + " "
            + " ".join(f"{e:7.1f}" for e in ess) + f" {nd:8.1e}  ({time.perf_counter() - t0:.1f}s)"
        )


if __name__ == "__main__":
    main()
