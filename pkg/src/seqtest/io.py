"""Policy files, report documents and delimited tables.

Policies are stored per stage as run-length-encoded action rows, in either a
line-oriented text form or a compact little-endian binary form. Reports are
JSON documents whose floats use Python's shortest round-trip representation.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import struct
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from seqtest.errors import ArgumentError, PolicyFormatError
from seqtest.policy import PROVENANCES, TIE_RULES, TRUNCATION_RULES, TestPolicy

TEXT_FORMAT = "portable-text-table"
BINARY_FORMAT = "compact-binary-table"
POLICY_FORMATS = (TEXT_FORMAT, BINARY_FORMAT)

_TEXT_MAGIC = "seqtest-policy-text 1"
_BIN_MAGIC = b"SQTPOL\x00\x01"
_BIN_END = b"SQTEND\x00\x00"
_RUN = np.dtype([("code", "<u2"), ("length", "<u4")])


# --------------------------------------------------------------------------
# run-length encoding


def rle_encode(row: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    row = np.asarray(row)
    starts = np.concatenate(([0], np.flatnonzero(np.diff(row)) + 1))
    lengths = np.diff(np.concatenate((starts, [row.size])))
    return row[starts], lengths


def rle_decode(codes, lengths) -> np.ndarray:
    return np.repeat(np.asarray(codes, dtype=np.int16), np.asarray(lengths, dtype=np.int64))


# --------------------------------------------------------------------------
# policies


def _meta(policy: TestPolicy) -> dict[str, Any]:
    return {
        "k": policy.k,
        "horizon": policy.horizon,
        "provenance": policy.provenance,
        "truncation_rule": policy.truncation_rule,
        "tie_rule": policy.tie_rule,
        "forced": policy.forced is not None,
    }


def export_policy(policy: TestPolicy, path: str | os.PathLike, format: str = TEXT_FORMAT) -> int:
    """Write ``policy`` to ``path``; returns the file size in bytes."""
    if format == TEXT_FORMAT:
        data = _to_text(policy).encode("utf-8")
    elif format == BINARY_FORMAT:
        data = _to_binary(policy)
    else:
        raise ArgumentError(f"unknown policy format {format!r}; expected one of {POLICY_FORMATS}")
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def import_policy(path: str | os.PathLike) -> TestPolicy:
    """Read a policy written by :func:`export_policy` (format detected from the content)."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ArgumentError(f"cannot read policy file {path}: {exc.strerror}") from None
    if data.startswith(_BIN_MAGIC):
        return _from_binary(data)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise PolicyFormatError("not a policy file", f"offset {exc.start}") from None
    return _from_text(text)


def _runs_text(row: np.ndarray) -> str:
    codes, lengths = rle_encode(row)
    return " ".join(f"{c}:{n}" for c, n in zip(codes.tolist(), lengths.tolist()))


def _to_text(policy: TestPolicy) -> str:
    lines = [_TEXT_MAGIC]
    for key, value in _meta(policy).items():
        if key == "forced":
            continue
        lines.append(f"{key} {'none' if value is None else value}")
    lines.append("forced " + (_runs_text(policy.forced.astype(np.int16)) if policy.forced is not None else "none"))
    for n, row in enumerate(policy.actions, start=1):
        lines.append(f"{n} {_runs_text(row)}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def _parse_runs(tokens: Sequence[str], size: int, lineno: int) -> np.ndarray:
    where = f"line {lineno}"
    codes, lengths = [], []
    for tok in tokens:
        code, sep, length = tok.partition(":")
        if not sep:
            raise PolicyFormatError(f"malformed run {tok!r}", where)
        try:
            codes.append(int(code))
            lengths.append(int(length))
        except ValueError:
            raise PolicyFormatError(f"malformed run {tok!r}", where) from None
        if lengths[-1] < 1 or codes[-1] < 0:
            raise PolicyFormatError(f"invalid run {tok!r}", where)
    if sum(lengths) != size:
        raise PolicyFormatError(f"runs cover {sum(lengths)} states, expected {size}", where)
    return rle_decode(codes, lengths)


def _from_text(text: str) -> TestPolicy:
    lines = text.splitlines()
    if not lines or lines[0].strip() != _TEXT_MAGIC:
        raise PolicyFormatError("missing policy header", "line 1")
    meta: dict[str, str] = {}
    lineno = 1
    for key in ("k", "horizon", "provenance", "truncation_rule", "tie_rule", "forced"):
        lineno += 1
        if lineno > len(lines):
            raise PolicyFormatError("unexpected end of file", f"line {lineno}")
        name, _, value = lines[lineno - 1].partition(" ")
        if name != key:
            raise PolicyFormatError(f"expected {key!r}, found {name!r}", f"line {lineno}")
        meta[key] = value.strip()
    forced_line = lineno
    try:
        k, horizon = int(meta["k"]), int(meta["horizon"])
    except ValueError:
        raise PolicyFormatError("k and horizon must be integers", "line 2") from None
    if k < 2 or horizon < 1:
        raise PolicyFormatError("k must be >= 2 and horizon >= 1", "line 2")
    _check_enum(meta["provenance"], PROVENANCES, "provenance", "line 4")
    trunc = None if meta["truncation_rule"] == "none" else meta["truncation_rule"]
    if trunc is not None:
        _check_enum(trunc, TRUNCATION_RULES, "truncation_rule", "line 5")
    _check_enum(meta["tie_rule"], TIE_RULES, "tie_rule", "line 6")
    forced = None
    if meta["forced"] != "none":
        forced = _parse_runs(meta["forced"].split(), horizon + 1, forced_line) != 0

    rows = []
    for n in range(1, horizon + 1):
        lineno += 1
        if lineno > len(lines):
            raise PolicyFormatError(f"missing stage {n}", f"line {lineno}")
        tokens = lines[lineno - 1].split()
        if not tokens or tokens[0] != str(n):
            raise PolicyFormatError(f"expected stage {n}", f"line {lineno}")
        row = _parse_runs(tokens[1:], n + 1, lineno)
        if row.max() > k:
            raise PolicyFormatError(f"stop index {int(row.max())} exceeds k={k}", f"line {lineno}")
        rows.append(row)
    lineno += 1
    if lineno > len(lines) or lines[lineno - 1].strip() != "end":
        raise PolicyFormatError("missing 'end' marker", f"line {lineno}")
    try:
        return TestPolicy(k, tuple(rows), meta["provenance"], trunc, meta["tie_rule"], forced)
    except ArgumentError as exc:
        raise PolicyFormatError(str(exc), f"line {lineno}") from None


def _check_enum(value: str, allowed, name: str, where: str) -> None:
    if value not in allowed:
        raise PolicyFormatError(f"unknown {name} {value!r}", where)


def _to_binary(policy: TestPolicy) -> bytes:
    header = json.dumps(_meta(policy), separators=(",", ":")).encode("utf-8")
    parts = [_BIN_MAGIC, struct.pack("<I", len(header)), header]

    def add_row(row):
        codes, lengths = rle_encode(row)
        runs = np.empty(codes.size, dtype=_RUN)
        runs["code"] = codes
        runs["length"] = lengths
        parts.append(struct.pack("<I", codes.size))
        parts.append(runs.tobytes())

    for row in policy.actions:
        add_row(row)
    if policy.forced is not None:
        add_row(policy.forced.astype(np.int16))
    parts.append(_BIN_END)
    return b"".join(parts)


def _from_binary(data: bytes) -> TestPolicy:
    pos = len(_BIN_MAGIC)

    def need(count: int) -> None:
        if pos + count > len(data):
            raise PolicyFormatError("unexpected end of data", f"offset {pos}")

    need(4)
    (hlen,) = struct.unpack_from("<I", data, pos)
    pos += 4
    need(hlen)
    try:
        meta = json.loads(data[pos : pos + hlen].decode("utf-8"))
        k, horizon = int(meta["k"]), int(meta["horizon"])
        provenance, trunc, tie = meta["provenance"], meta["truncation_rule"], meta["tie_rule"]
        has_forced = bool(meta["forced"])
    except (ValueError, KeyError, TypeError, UnicodeDecodeError):
        raise PolicyFormatError("corrupt header", f"offset {pos}") from None
    pos += hlen
    if k < 2 or horizon < 1:
        raise PolicyFormatError("k must be >= 2 and horizon >= 1", f"offset {len(_BIN_MAGIC) + 4}")

    def read_row(size: int) -> np.ndarray:
        nonlocal pos
        start = pos
        need(4)
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        need(count * _RUN.itemsize)
        runs = np.frombuffer(data, dtype=_RUN, count=count, offset=pos)
        pos += count * _RUN.itemsize
        if count == 0 or int(runs["length"].sum()) != size or np.any(runs["length"] == 0):
            raise PolicyFormatError(f"runs do not cover {size} states", f"offset {start}")
        row = rle_decode(runs["code"], runs["length"])
        if row.max() > k:
            raise PolicyFormatError(f"stop index {int(row.max())} exceeds k={k}", f"offset {start}")
        return row

    rows = [read_row(n + 1) for n in range(1, horizon + 1)]
    forced = read_row(horizon + 1) != 0 if has_forced else None
    if data[pos:] != _BIN_END:
        raise PolicyFormatError("missing end marker", f"offset {pos}")
    try:
        return TestPolicy(k, tuple(rows), provenance, trunc, tie, forced)
    except ArgumentError as exc:
        raise PolicyFormatError(str(exc), f"offset {pos}") from None


# --------------------------------------------------------------------------
# reports


def to_jsonable(obj: Any) -> Any:
    """Convert numpy containers and scalars to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


@dataclass
class ReportDocument:
    config: dict[str, Any]
    results: dict[str, Any]
    metadata: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {"config": self.config, "results": self.results, "metadata": self.metadata}
        return json.dumps(to_jsonable(doc), indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ReportDocument":
        doc = json.loads(text)
        return cls(doc["config"], doc["results"], doc.get("metadata", {}))

    def without_metadata(self) -> str:
        doc = {"config": self.config, "results": self.results}
        return json.dumps(to_jsonable(doc), indent=2, allow_nan=False)


def _format(value: Any, precision: int | None) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value)) if precision is None else f"{float(value):.{precision}g}"
    return str(value)


def report_table(
    report: ReportDocument | dict,
    columns: Sequence[str],
    precision: int | dict[str, int] | None = None,
    delimiter: str = ",",
) -> str:
    """Render ``results["rows"]`` as delimited text.

    ``precision`` is a number of significant digits, either global or per
    column; ``None`` gives shortest round-trip output.
    """
    results = report.results if isinstance(report, ReportDocument) else report
    rows = results.get("rows", [])
    columns = list(columns)
    known = set().union(*(r.keys() for r in rows)) if rows else set()
    unknown = [c for c in columns if c not in known]
    if rows and unknown:
        raise ArgumentError(f"unknown column(s): {', '.join(unknown)}")
    if not rows and columns:
        raise ArgumentError("report has no rows to tabulate")
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    writer.writerow(columns)
    if columns:
        for row in rows:
            out = []
            for col in columns:
                p = precision.get(col) if isinstance(precision, dict) else precision
                out.append(_format(row.get(col), p))
            writer.writerow(out)
    return buf.getvalue()


def parse_table(text: str, delimiter: str = ",") -> list[dict[str, Any]]:
    """Inverse of :func:`report_table` for numeric and text cells."""
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    header = next(reader, [])
    out = []
    for row in reader:
        rec = {}
        for key, cell in zip(header, row):
            rec[key] = _parse_cell(cell)
        out.append(rec)
    return out


def _parse_cell(cell: str) -> Any:
    if cell == "":
        return None
    if cell in ("true", "false"):
        return cell == "true"
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        return float(cell)
    except ValueError:
        return cell
