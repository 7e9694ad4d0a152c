"""Weighted ESS of a Bayes design with weights (0.01, 0.01, 0.98) against an MSPRT with matching errors."""

from seqtest import (
    Criterion,
    DesignProblem,
    Hypotheses,
    LambdaMatrix,
    MsprtSpec,
    backward_induce,
    build_msprt,
    evaluate_many,
)

GAMMA = (0.01, 0.01, 0.98)


def main(horizon: int = 4000):
    hyp = Hypotheses((0.3, 0.4, 0.5))
    design = DesignProblem(hyp, LambdaMatrix.per_hypothesis([200, 500, 200]), Criterion(hyp.thetas, GAMMA), horizon)
    tests = {
        "Bayes": backward_induce(design).policy,
        "MSPRT": build_msprt(hyp, MsprtSpec.from_log_per_hypothesis([4.90, 3.00, 1.69], horizon)),
    }
    weighted = {}
    for name, policy in tests.items():
        reports = evaluate_many(policy, hyp.thetas)
        weighted[name] = sum(g * r.ess for g, r in zip(GAMMA, reports))
        errs = [round(r.error_prob(i), 4) for i, r in enumerate(reports, start=1)]
        print(f"{name}: alpha={errs} ESS={[round(r.ess, 2) for r in reports]} weighted={weighted[name]:.3f}")
    print(f"MSPRT / Bayes = {weighted['MSPRT'] / weighted['Bayes']:.4f}")


if __name__ == "__main__":
    main()
