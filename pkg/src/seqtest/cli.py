"""Batch command-line front end: ``seqtest <command> --config job.json``.

Exit status: 0 success, 1 configuration or validation error, 2 numerical
failure, 3 fit or Kiefer-Weiss search did not converge (report still written).
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
import time
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import jsonschema
import numpy as np

from seqtest import __version__
from seqtest.design import backward_induce, max_stage
from seqtest.errors import ArgumentError, NumericalError
from seqtest.evaluate import (
    PerformanceReport,
    brute_force_oracle,
    ess,
    ess_curve,
    evaluate,
    evaluate_many,
    monte_carlo,
)
from seqtest.fit import FitOptions, FitTarget, fit_msprt_thresholds, fit_multipliers
from seqtest.io import ReportDocument, export_policy, import_policy, report_table
from seqtest.kiefer_weiss import KwOptions, KwProblem, certify, solve_kw
from seqtest.model import Criterion, DesignProblem, Hypotheses, LambdaMatrix
from seqtest.msprt import MsprtSpec, build_msprt, wald_bounds
from seqtest.parallel import get_threads, set_threads
from seqtest.policy import TestPolicy

log = logging.getLogger("seqtest")

COMMANDS = ("design", "evaluate", "msprt", "fit", "kw", "simulate", "oracle")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_NOT_CONVERGED = 3


class NotConverged(Exception):
    def __init__(self, report: ReportDocument, message: str):
        super().__init__(message)
        self.report = report


def load_schema() -> dict:
    text = resources.files("seqtest").joinpath("schema/config.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_config(config: dict) -> None:
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for err in errors:
            where = "/".join(str(p) for p in err.absolute_path) or "<root>"
            lines.append(f"{where}: {err.message}")
        raise ArgumentError("invalid configuration:\n  " + "\n  ".join(lines))


def apply_overrides(config: dict, overrides: Sequence[str]) -> dict:
    """Apply ``dotted.key=value`` overrides; values are parsed as JSON when possible."""
    config = copy.deepcopy(config)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ArgumentError(f"override {item!r} is not of the form key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ArgumentError(f"override {item!r} descends into a non-object")
        node[parts[-1]] = value
    return config


def load_config(path: str | Path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ArgumentError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ArgumentError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(config, dict):
        raise ArgumentError(f"{path}: top level must be an object")
    return config


# --------------------------------------------------------------------------
# building blocks from config sections


def _hypotheses(problem: dict) -> Hypotheses:
    if "thetas" not in problem:
        raise ArgumentError("problem.thetas is required")
    thetas = problem["thetas"]
    if list(thetas) != sorted(thetas):
        raise ArgumentError("problem.thetas must be given in increasing order")
    return Hypotheses(tuple(thetas))


def _horizon(problem: dict) -> int:
    if "horizon" not in problem:
        raise ArgumentError("problem.horizon is required")
    return int(problem["horizon"])


def _lambda(problem: dict, k: int) -> LambdaMatrix:
    given = [key for key in ("lambda", "lambdas", "log_lambdas") if key in problem]
    if len(given) != 1:
        raise ArgumentError("give exactly one of problem.lambda, problem.lambdas, problem.log_lambdas")
    key = given[0]
    if key == "lambda":
        lam = LambdaMatrix(np.array([[0.0 if v is None else v for v in row] for row in problem[key]]))
    elif key == "lambdas":
        lam = LambdaMatrix.per_hypothesis(problem[key])
    else:
        lam = LambdaMatrix.from_log_per_hypothesis(problem[key])
    if lam.k != k:
        raise ArgumentError(f"{key} has dimension {lam.k}, expected {k}")
    return lam


def _criterion(problem: dict, hyp: Hypotheses) -> Criterion:
    if "criterion" in problem:
        c = problem["criterion"]
        return Criterion(tuple(c["points"]), tuple(c["weights"]))
    return Criterion.uniform(hyp.thetas)


def _msprt_spec(problem: dict, k: int, horizon: int) -> MsprtSpec:
    given = [key for key in ("thresholds", "threshold_vector", "log_thresholds") if key in problem]
    if len(given) != 1:
        raise ArgumentError("give exactly one of problem.thresholds, problem.threshold_vector, problem.log_thresholds")
    key = given[0]
    if key == "thresholds":
        A = np.array([[np.inf if v is None else v for v in row] for row in problem[key]], dtype=float)
        spec = MsprtSpec(A, horizon)
    elif key == "threshold_vector":
        spec = MsprtSpec.per_hypothesis(problem[key], horizon)
    else:
        spec = MsprtSpec.from_log_per_hypothesis(problem[key], horizon)
    if spec.k != k:
        raise ArgumentError(f"{key} has dimension {spec.k}, expected {k}")
    return spec


def resolve_policy(config: dict) -> TestPolicy:
    src = config["policy"]
    kind = src["source"]
    problem = config.get("problem", {})
    if kind == "design":
        hyp = _hypotheses(problem)
        dp = DesignProblem(hyp, _lambda(problem, hyp.k), _criterion(problem, hyp), _horizon(problem))
        return backward_induce(dp).policy
    if kind == "msprt":
        hyp = _hypotheses(problem)
        return build_msprt(hyp, _msprt_spec(problem, hyp.k, _horizon(problem)))
    if kind == "file":
        if "path" not in src:
            raise ArgumentError("policy.path is required for source 'file'")
        return import_policy(src["path"])
    if kind == "inline":
        if "k" not in src or "rows" not in src:
            raise ArgumentError("policy.k and policy.rows are required for source 'inline'")
        return TestPolicy.from_rows(src["k"], src["rows"])
    if "k" not in src:
        raise ArgumentError("policy.k is required for source 'constant'")
    return TestPolicy.constant(src["k"], src.get("horizon", 1), src.get("accept", 1))


def _eval_thetas(config: dict, default: Sequence[float] | None) -> list[float]:
    opts = config.get("options", {})
    if "thetas" in opts:
        return list(opts["thetas"])
    if "thetas" in config.get("problem", {}):
        return list(config["problem"]["thetas"])
    if default is not None:
        return list(default)
    raise ArgumentError("no evaluation points: set options.thetas")


def _grid(spec: dict) -> np.ndarray:
    count = int(round((spec["stop"] - spec["start"]) / spec["step"])) + 1
    if count < 2:
        raise ArgumentError("grid needs at least two points")
    return np.linspace(spec["start"], spec["stop"], count)


def perf_row(report: PerformanceReport, thetas: Sequence[float] | None = None) -> dict[str, Any]:
    row: dict[str, Any] = {"theta": report.theta, "ess": report.ess}
    for j, p in enumerate(report.accept_probs, start=1):
        row[f"accept_{j}"] = float(p)
    if thetas is not None:
        matches = [i for i, t in enumerate(thetas) if t == report.theta]
        row["error"] = report.error_prob(matches[0] + 1) if matches else None
    row["no_decision_mass"] = report.no_decision_mass
    return row


# --------------------------------------------------------------------------
# commands


def _cmd_design(config: dict) -> dict:
    problem = config["problem"]
    hyp = _hypotheses(problem)
    dp = DesignProblem(hyp, _lambda(problem, hyp.k), _criterion(problem, hyp), _horizon(problem))
    out = backward_induce(dp)
    results = _policy_results(out.policy, config, hyp.thetas)
    results["lagrangian_value"] = out.lagrangian_value
    _export(out.policy, config, results)
    return results


def _policy_results(policy: TestPolicy, config: dict, hyp_thetas=None, oracle: bool = False) -> dict:
    opts = config.get("options", {})
    thetas = _eval_thetas(config, hyp_thetas)
    if oracle:
        reports = [brute_force_oracle(policy, t) for t in thetas]
    else:
        reports = evaluate_many(policy, thetas)
        if opts.get("check"):
            for t in thetas:
                ess(policy, t, check=True)
    results: dict[str, Any] = {
        "k": policy.k,
        "horizon": policy.horizon,
        "provenance": policy.provenance,
        "max_stage": max_stage(policy),
        "rows": [perf_row(r, hyp_thetas) for r in reports],
    }
    if opts.get("tail"):
        src = reports if oracle else [evaluate(policy, t, tail=True) for t in thetas]
        results["tails"] = {repr(float(r.theta)): r.tail for r in src}
    if "grid" in opts:
        curve = ess_curve(policy, _grid(opts["grid"]))
        results["ess_curve"] = {
            "thetas": curve.thetas,
            "ess": curve.ess,
            "argmax_theta": curve.argmax_theta,
            "max_ess": curve.max_ess,
            "refined_theta": curve.refined_theta,
            "refined_ess": curve.refined_ess,
        }
    return results


def _export(policy: TestPolicy, config: dict, results: dict) -> None:
    out = config.get("output", {})
    if "policy_path" in out:
        size = export_policy(policy, out["policy_path"], out.get("policy_format", "portable-text-table"))
        results["policy_file"] = {"path": out["policy_path"], "bytes": size}


def _cmd_evaluate(config: dict) -> dict:
    policy = resolve_policy(config)
    hyp = config.get("problem", {}).get("thetas")
    return _policy_results(policy, config, hyp)


def _cmd_oracle(config: dict) -> dict:
    policy = resolve_policy(config)
    hyp = config.get("problem", {}).get("thetas")
    return _policy_results(policy, config, hyp, oracle=True)


def _cmd_msprt(config: dict) -> dict:
    problem = config["problem"]
    hyp = _hypotheses(problem)
    horizon = _horizon(problem)
    k = hyp.k
    if "alphas" in problem:
        rows = []
        for a in problem["alphas"]:
            spec = MsprtSpec.uniform(k, (k - 1) / a, horizon)
            reports = evaluate_many(build_msprt(hyp, spec), hyp.thetas)
            row: dict[str, Any] = {"alpha": a, "threshold": (k - 1) / a}
            for i, r in enumerate(reports, start=1):
                row[f"alpha_{i}"] = r.error_prob(i)
            for i, r in enumerate(reports, start=1):
                row[f"ess_{i}"] = r.ess
            for i, r in enumerate(reports, start=1):
                row[f"no_decision_{i}"] = r.no_decision_mass
            rows.append(row)
        return {"rows": rows}
    spec = _msprt_spec(problem, k, horizon)
    policy = build_msprt(hyp, spec)
    results = _policy_results(policy, config, hyp.thetas)
    results["wald_bounds"] = wald_bounds(spec)
    _export(policy, config, results)
    return results


def _cmd_fit(config: dict) -> dict:
    problem = config["problem"]
    opts = config["options"]
    hyp = _hypotheses(problem)
    horizon = _horizon(problem)
    mode = opts.get("mode", "per-hypothesis")
    target = FitTarget(mode, np.array(opts["alphas"], dtype=float))
    fo = FitOptions(
        tolerance=opts.get("tolerance", FitOptions.tolerance),
        spread_tolerance=opts.get("spread_tolerance", FitOptions.spread_tolerance),
        xatol=opts.get("xatol", FitOptions.xatol),
        max_evaluations=opts.get("max_evaluations", FitOptions.max_evaluations),
        initial_step=opts.get("initial_step", FitOptions.initial_step),
        start=tuple(opts["start"]) if "start" in opts else None,
    )
    if opts["test"] == "multipliers":
        res = fit_multipliers(hyp, _criterion(problem, hyp), horizon, target, fo)
    else:
        res = fit_msprt_thresholds(hyp, horizon, target, fo)
    results = {
        "test": opts["test"],
        "mode": mode,
        "fitted_log_params": res.fitted_params,
        "achieved": res.achieved,
        "residual": res.residual,
        "evaluations": res.evaluations,
        "converged": res.converged,
        "max_stage": max_stage(res.policy),
        "rows": [perf_row(r, hyp.thetas) for r in res.reports],
    }
    if "grid" in opts:
        curve = ess_curve(res.policy, _grid(opts["grid"]))
        results["sup_ess"] = curve.refined_ess
        results["sup_theta"] = curve.refined_theta
    _export(res.policy, config, results)
    return results


def _cmd_kw(config: dict) -> dict:
    problem = config["problem"]
    opts = config.get("options", {})
    hyp = _hypotheses(problem)
    if "weights" not in problem:
        raise ArgumentError("problem.weights (k - 1 values) is required for kw")
    kwp = KwProblem(hyp, _lambda(problem, hyp.k), tuple(problem["weights"]), _horizon(problem))
    ko = KwOptions(
        grid_step=opts.get("grid_step", KwOptions.grid_step),
        gap_tolerance=opts.get("gap_tolerance", KwOptions.gap_tolerance),
        symmetric=opts.get("symmetric", False),
        max_evaluations=opts.get("max_evaluations", KwOptions.max_evaluations),
        xatol=opts.get("xatol", KwOptions.xatol),
        start=tuple(opts["start"]) if "start" in opts else None,
    )
    search = opts.get("search", "vartheta" not in problem)
    if search:
        cert = solve_kw(kwp, ko)
    else:
        if "vartheta" not in problem:
            raise ArgumentError("problem.vartheta is required when options.search is false")
        pts = kwp.check_points(problem["vartheta"])
        policy = backward_induce(kwp.design_problem(pts)).policy
        cert = certify(policy, hyp, pts, ko.grid_step, ko.gap_tolerance)
    reports = evaluate_many(cert.policy, list(hyp.thetas) + list(cert.vartheta))
    results = {
        "search": bool(search),
        "vartheta": cert.vartheta,
        "sup_ess": cert.sup_ess,
        "sup_theta": cert.sup_theta,
        "ess_at_points": cert.ess_at_points,
        "error_probs": cert.error_probs,
        "error_matrix": cert.error_matrix,
        "equalization_gap": cert.equalization_gap,
        "effective_truncation": cert.effective_truncation,
        "converged": cert.converged,
        "evaluations": cert.evaluations,
        "rows": [perf_row(r, hyp.thetas) for r in reports],
    }
    _export(cert.policy, config, results)
    return results


def _cmd_simulate(config: dict) -> dict:
    opts = config["options"]
    policy = resolve_policy(config)
    thetas = _eval_thetas(config, None)
    rows = []
    for t in thetas:
        mc = monte_carlo(policy, t, opts["replications"], opts["seed"])
        row: dict[str, Any] = {
            "theta": mc.theta,
            "replications": mc.replications,
            "mean_stopping_time": mc.mean_stopping_time,
            "stopping_time_se": mc.stopping_time_se,
        }
        for j, (f, se) in enumerate(zip(mc.accept_freqs, mc.accept_se), start=1):
            row[f"accept_{j}"] = float(f)
            row[f"accept_se_{j}"] = float(se)
        rows.append(row)
    return {"generator": "PCG64", "seed": opts["seed"], "rows": rows}


HANDLERS = {
    "design": _cmd_design,
    "evaluate": _cmd_evaluate,
    "msprt": _cmd_msprt,
    "fit": _cmd_fit,
    "kw": _cmd_kw,
    "simulate": _cmd_simulate,
    "oracle": _cmd_oracle,
}


def execute(config: dict) -> ReportDocument:
    """Validate and run one job; raises :class:`NotConverged` for exit status 3."""
    validate_config(config)
    started = time.perf_counter()
    results = HANDLERS[config["command"]](config)
    metadata = {
        "tool": "seqtest",
        "version": __version__,
        "wall_time_s": time.perf_counter() - started,
        "threads": get_threads(),
    }
    if config["command"] == "simulate":
        metadata["seed"] = config["options"]["seed"]
    report = ReportDocument(config, results, metadata)
    if config["command"] in ("fit", "kw") and results.get("search", True) and not results["converged"]:
        raise NotConverged(report, f"{config['command']} did not converge")
    return report


def render(report: ReportDocument, fmt: str) -> str:
    if fmt == "json":
        return report.to_json()
    out = report.config.get("output", {})
    rows = report.results.get("rows", [])
    columns = out.get("columns") or (list(rows[0].keys()) if rows else [])
    return report_table(report, columns, out.get("precision"))


def run(
    config_path: str | Path,
    overrides: Sequence[str] = (),
    command: str | None = None,
    output: str | None = None,
    fmt: str | None = None,
    threads: int | None = None,
) -> tuple[int, ReportDocument | None]:
    """Run a job file; returns ``(exit status, report)`` and writes the report."""
    try:
        config = apply_overrides(load_config(config_path), overrides)
        if command is not None:
            if config.setdefault("command", command) != command:
                raise ArgumentError(f"config command {config['command']!r} does not match {command!r}")
        if threads is not None:
            set_threads(threads)
        try:
            report = execute(config)
            status = EXIT_OK
        except NotConverged as exc:
            log.warning("%s", exc)
            report, status = exc.report, EXIT_NOT_CONVERGED
        out_cfg = config.get("output", {})
        fmt = fmt or out_cfg.get("format", "json")
        text = render(report, fmt)
        path = output or out_cfg.get("path")
        if path:
            Path(path).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        return status, report
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL, None
    except ArgumentError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION, None
    finally:
        if threads is not None:
            set_threads(None)


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="seqtest", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON job file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    parser.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    parser.add_argument("--output", default=None, help="report path (default: stdout)")
    parser.add_argument("--format", choices=("json", "csv"), default=None)
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="seqtest: %(message)s")
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be >= 1")
    status, _ = run(args.config, args.overrides, args.command, args.output, args.format, args.threads)
    return status


if __name__ == "__main__":
    sys.exit(main())
