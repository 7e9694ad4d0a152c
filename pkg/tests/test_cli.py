import importlib
import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import ROOT
from seqtest.cli import apply_overrides, load_config, main, run, validate_config
from seqtest.errors import ArgumentError, NumericalError
from seqtest.io import import_policy, parse_table

CONFIGS = sorted((ROOT / "configs").glob("*.json"))


def write(tmp_path, config, name="job.json"):
    path = tmp_path / name
    path.write_text(json.dumps(config))
    return path


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.name)
def test_stored_configs_validate(path):
    validate_config(load_config(path))


def test_unknown_keys_are_rejected():
    with pytest.raises(ArgumentError, match="bogus"):
        validate_config({"command": "design", "problem": {"thetas": [0.3, 0.5], "bogus": 1}})
    with pytest.raises(ArgumentError):
        validate_config({"command": "simulate", "policy": {"source": "constant", "k": 2}, "options": {"seed": 1}})


def test_overrides():
    cfg = apply_overrides({"problem": {"horizon": 10}}, ["problem.horizon=20", "options.tail=true", "output.path=out.csv"])
    assert cfg == {"problem": {"horizon": 20}, "options": {"tail": True}, "output": {"path": "out.csv"}}
    with pytest.raises(ArgumentError):
        apply_overrides({}, ["novalue"])


def test_stop_at_one_inline(tmp_path):
    out = tmp_path / "r.json"
    status, report = run(ROOT / "configs/stop_at_one.json", output=str(out))
    assert status == 0
    for row in report.results["rows"]:
        assert row["ess"] == 1.0
        assert [row["accept_1"], row["accept_2"], row["accept_3"]] == [1.0, 0.0, 0.0]
    assert json.loads(out.read_text())["results"]["max_stage"] == 1


def test_oracle_and_evaluate_agree(tmp_path):
    _, ev = run(ROOT / "configs/small_design_evaluate.json", output=str(tmp_path / "e.json"))
    _, orc = run(ROOT / "configs/small_design_oracle.json", output=str(tmp_path / "o.json"))
    for a, b in zip(ev.results["rows"], orc.results["rows"]):
        assert a.keys() == b.keys()
        for key in a:
            assert a[key] == pytest.approx(b[key], abs=1e-10, rel=1e-10)
    for key, tail in ev.results["tails"].items():
        np.testing.assert_allclose(tail, orc.results["tails"][key], atol=1e-10)


def test_table2_design_report(tmp_path):
    status, report = run(ROOT / "configs/table2_bayes.json", output=str(tmp_path / "r.json"))
    assert status == 0
    ess = [row["ess"] for row in report.results["rows"]]
    np.testing.assert_allclose(ess, [242.0, 298.3, 253.1], atol=1.0)


def test_csv_output_and_columns(tmp_path):
    out = tmp_path / "r.csv"
    status, _ = run(
        ROOT / "configs/table1.json",
        overrides=["problem.alphas=[0.1]", "problem.horizon=600"],
        output=str(out),
    )
    assert status == 0
    rows = parse_table(out.read_text())
    assert list(rows[0]) == ["alpha", "alpha_1", "alpha_2", "alpha_3", "ess_1", "ess_2", "ess_3"]
    assert rows[0]["alpha"] == 0.1


def test_policy_export_from_design(tmp_path):
    policy_path = tmp_path / "d.policy"
    status, report = run(
        ROOT / "configs/small_design_evaluate.json",
        command="evaluate",
        overrides=["policy.source=\"design\""],
        output=str(tmp_path / "r.json"),
    )
    assert status == 0
    cfg = {
        "command": "design",
        "problem": {"thetas": [0.3, 0.5], "horizon": 10, "lambdas": [15, 25]},
        "output": {"policy_path": str(policy_path), "policy_format": "compact-binary-table"},
    }
    status, rep = run(write(tmp_path, cfg), output=str(tmp_path / "d.json"))
    assert status == 0
    assert rep.results["policy_file"]["bytes"] == policy_path.stat().st_size
    assert import_policy(policy_path).horizon == 10
    # and evaluate the stored file
    cfg = {"command": "evaluate", "problem": {"thetas": [0.3, 0.5]}, "policy": {"source": "file", "path": str(policy_path)}}
    status, again = run(write(tmp_path, cfg, "e.json"), output=str(tmp_path / "e.out"))
    assert status == 0
    assert again.results["rows"] == report.results["rows"]


def test_exit_code_validation(tmp_path):
    assert run(write(tmp_path, {"command": "design", "problem": {"thetas": [1.5]}}))[0] == 1
    assert run(tmp_path / "missing.json")[0] == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(bad)[0] == 1
    cfg = {"command": "evaluate", "policy": {"source": "file", "path": str(tmp_path / "nope.policy")}}
    assert run(write(tmp_path, cfg, "f.json"))[0] == 1


def test_exit_code_numerical(tmp_path, monkeypatch):
    cli = importlib.import_module("seqtest.cli")

    def boom(problem):
        raise NumericalError("non-finite value function at stage 3")

    monkeypatch.setattr(cli, "backward_induce", boom)
    cfg = {"command": "design", "problem": {"thetas": [0.3, 0.5], "horizon": 5, "lambdas": [1, 1]}}
    assert run(write(tmp_path, cfg))[0] == 2


def test_exit_code_not_converged_still_writes(tmp_path):
    out = tmp_path / "fit.json"
    cfg = {
        "command": "fit",
        "problem": {"thetas": [0.3, 0.5], "horizon": 20},
        "options": {"test": "msprt", "alphas": [1e-6, 1e-6], "max_evaluations": 10},
    }
    status, report = run(write(tmp_path, cfg), output=str(out))
    assert status == 3
    assert json.loads(out.read_text())["results"]["converged"] is False


def test_determinism_modulo_metadata(tmp_path):
    cfg = ROOT / "configs/simulate_table1.json"
    sets = ["options.replications=20000", "problem.horizon=800"]
    _, a = run(cfg, overrides=sets, output=str(tmp_path / "a.json"))
    _, b = run(cfg, overrides=sets, output=str(tmp_path / "b.json"), threads=2)
    assert a.without_metadata() == b.without_metadata()
    assert a.metadata["seed"] == 20240611


def test_thread_flag_is_reported(tmp_path):
    _, rep = run(ROOT / "configs/stop_at_one.json", output=str(tmp_path / "r.json"), threads=3)
    assert rep.metadata["threads"] == 3


def test_command_mismatch(tmp_path):
    assert run(ROOT / "configs/stop_at_one.json", command="design")[0] == 1


def test_main_entry_point(tmp_path, capsys):
    status = main(["evaluate", "--config", str(ROOT / "configs/stop_at_one.json"), "--format", "csv"])
    assert status == 0
    assert capsys.readouterr().out.startswith("theta,ess,accept_1")


def test_console_script_runs(tmp_path):
    out = tmp_path / "r.json"
    proc = subprocess.run(
        [sys.executable, "-m", "seqtest.cli", "evaluate", "--config", str(ROOT / "configs/stop_at_one.json"),
         "--output", str(out), "--set", "options.thetas=[0.25]"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    rows = json.loads(out.read_text())["results"]["rows"]
    assert [r["theta"] for r in rows] == [0.25]
