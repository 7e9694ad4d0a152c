import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_policy
from seqtest.design import backward_induce
from seqtest.errors import ArgumentError, PolicyFormatError
from seqtest.io import (
    BINARY_FORMAT,
    TEXT_FORMAT,
    ReportDocument,
    export_policy,
    import_policy,
    parse_table,
    report_table,
    rle_decode,
    rle_encode,
)
from seqtest.kiefer_weiss import KwProblem
from seqtest.model import Hypotheses, LambdaMatrix
from seqtest.msprt import MsprtSpec, build_msprt
from seqtest.policy import TestPolicy

FORMATS = [TEXT_FORMAT, BINARY_FORMAT]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=60))
def test_rle_round_trip(values):
    row = np.array(values, dtype=np.int16)
    codes, lengths = rle_encode(row)
    assert np.all(lengths > 0)
    assert np.array_equal(rle_decode(codes, lengths), row)


@pytest.mark.parametrize("fmt", FORMATS)
def test_stage_three_round_trip(tmp_path, fmt):
    policy = TestPolicy.from_rows(2, [[0, 0], [1, 0, 2], [1, 1, 2, 2]], provenance="external")
    path = tmp_path / "p.policy"
    export_policy(policy, path, fmt)
    back = import_policy(path)
    assert back == policy
    assert back.provenance == "external"


@pytest.mark.parametrize("fmt", FORMATS)
def test_msprt_round_trip_keeps_forced_mask_and_rule(tmp_path, fmt):
    policy = build_msprt(Hypotheses((0.3, 0.4, 0.5)), MsprtSpec.uniform(3, 20.0, 60))
    path = tmp_path / "m.policy"
    export_policy(policy, path, fmt)
    back = import_policy(path)
    assert back == policy
    assert back.truncation_rule == "AcceptMaxLikelihood"
    assert np.array_equal(back.forced, policy.forced)


def test_random_policies_round_trip(tmp_path, rng):
    for i in range(30):
        policy = random_policy(rng, int(rng.integers(2, 6)), int(rng.integers(1, 15)))
        for fmt in FORMATS:
            path = tmp_path / f"r{i}.{fmt}"
            export_policy(policy, path, fmt)
            assert import_policy(path) == policy


@pytest.mark.parametrize("fmt", FORMATS)
def test_kw_policy_round_trip(tmp_path, kw_hyp, fmt):
    problem = KwProblem(kw_hyp, LambdaMatrix.per_hypothesis([200.0] * 3), (0.5, 0.5), 1200)
    policy = backward_induce(problem.design_problem((0.4026, 0.5974))).policy
    path = tmp_path / "kw.policy"
    size = export_policy(policy, path, fmt)
    assert size == path.stat().st_size
    # the dense table has ~720k entries; run-length coding keeps it small
    assert size < 200_000
    assert import_policy(path) == policy


def test_text_stop_index_above_k_reports_line(tmp_path):
    policy = TestPolicy.from_rows(2, [[0, 0], [1, 1, 2]])
    path = tmp_path / "bad.txt"
    export_policy(policy, path, TEXT_FORMAT)
    text = path.read_text().replace("2 1:2 2:1", "2 1:2 3:1")
    path.write_text(text)
    with pytest.raises(PolicyFormatError, match="line 9") as err:
        import_policy(path)
    assert "exceeds k=2" in str(err.value)


def test_binary_stop_index_above_k_reports_offset(tmp_path):
    policy = TestPolicy.from_rows(2, [[0, 0], [1, 1, 2]])
    path = tmp_path / "bad.bin"
    export_policy(policy, path, BINARY_FORMAT)
    data = bytearray(path.read_bytes())
    # last run of the last stage: code field sits 6 bytes before the 8-byte end marker
    pos = len(data) - 8 - 6
    assert data[pos] == 2
    data[pos] = 7
    path.write_bytes(bytes(data))
    with pytest.raises(PolicyFormatError, match="offset") as err:
        import_policy(path)
    assert "exceeds k=2" in str(err.value)


@pytest.mark.parametrize(
    "mutate, where",
    [
        (lambda t: t.replace("seqtest-policy-text 1", "hello"), "line 1"),
        (lambda t: t.replace("provenance external", "provenance magic"), "line 4"),
        (lambda t: t.replace("2 1:2 2:1", "2 1:1 2:1"), "line 9"),
        (lambda t: t.replace("2 1:2 2:1", "2 1:2 0:1"), "line"),
        (lambda t: t.replace("end\n", ""), "line 10"),
        (lambda t: t.replace("1 0:2", "1 0-2"), "line 8"),
    ],
)
def test_malformed_text_files(tmp_path, mutate, where):
    policy = TestPolicy.from_rows(2, [[0, 0], [1, 1, 2]], provenance="external")
    path = tmp_path / "p.txt"
    export_policy(policy, path, TEXT_FORMAT)
    path.write_text(mutate(path.read_text()))
    with pytest.raises(PolicyFormatError, match=where):
        import_policy(path)


def test_truncated_binary_file(tmp_path):
    policy = build_msprt(Hypotheses((0.3, 0.5)), MsprtSpec.uniform(2, 20.0, 30))
    path = tmp_path / "p.bin"
    export_policy(policy, path, BINARY_FORMAT)
    path.write_bytes(path.read_bytes()[:-20])
    with pytest.raises(PolicyFormatError, match="offset"):
        import_policy(path)


def test_unknown_format_is_rejected(tmp_path):
    with pytest.raises(ArgumentError):
        export_policy(TestPolicy.constant(2), tmp_path / "x", "yaml")


def test_report_round_trip():
    doc = ReportDocument(
        {"command": "evaluate", "problem": {"thetas": [0.3, 0.4]}},
        {"rows": [{"theta": 0.1 + 0.2, "ess": 211.81234567890123, "flag": True}], "matrix": np.eye(2)},
        {"wall_time_s": 0.25},
    )
    text = doc.to_json()
    back = ReportDocument.from_json(text)
    assert back.to_json() == text
    assert back.results["rows"][0]["theta"] == 0.1 + 0.2
    assert back.results["matrix"] == [[1.0, 0.0], [0.0, 1.0]]


def test_report_nan_becomes_null():
    doc = ReportDocument({}, {"bounds": np.array([np.nan, 0.05])})
    assert json.loads(doc.to_json())["results"]["bounds"] == [None, 0.05]


ROWS = {"rows": [{"alpha": 0.1, "ess_1": 134.51234, "n": 3}, {"alpha": 0.05, "ess_1": 169.4, "n": 4}]}


def test_table_header_only_for_empty_columns():
    assert report_table(ROWS, []) == "\n"


def test_table_unknown_column():
    with pytest.raises(ArgumentError, match="bogus"):
        report_table(ROWS, ["alpha", "bogus"])


def test_table_precision_and_order():
    text = report_table(ROWS, ["ess_1", "alpha"], precision={"ess_1": 4})
    assert text.splitlines() == ["ess_1,alpha", "134.5,0.1", "169.4,0.05"]


def test_table_parse_back_is_exact():
    text = report_table(ROWS, ["alpha", "ess_1", "n"])
    assert parse_table(text) == ROWS["rows"]
