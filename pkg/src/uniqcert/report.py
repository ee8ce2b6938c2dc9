"""Problem-file and report schemas, and report rendering."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import jsonschema

from . import __version__

REPORT_SCHEMA_ID = "uniqcert.report/1"
KINDS = ("cov", "green", "equivalence", "uniqueness", "kamke", "th3", "gronwall", "funnel", "witness")
STATUSES = ("pass", "fail", "certified", "refuted", "inconclusive")
EXIT_CODES = {"pass": 0, "certified": 0, "fail": 1, "refuted": 1, "inconclusive": 2}
CRITERIA = ("osgood", "montel_tonelli", "van_kampen", "lasalle", "co1", "co2")

_expr = {"type": "string", "minLength": 1}
_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_count = {"type": "integer", "minimum": 3}

_IVP = {
    "type": "object",
    "required": ["f", "t0", "x0", "a", "b"],
    "properties": {
        "f": {"oneOf": [_expr, {"type": "array", "items": _expr, "minItems": 1}]},
        "t0": _num,
        "x0": {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 1}]},
        "a": _pos,
        "b": _pos,
        "forward": {"type": "boolean"},
    },
    "additionalProperties": False,
}

_CERTIFICATE = {
    "type": "object",
    "required": ["criterion"],
    "properties": {
        "criterion": {"enum": list(CRITERIA)},
        "p": _expr,
        "psi": _expr,
        "phi": _expr,
        "q1": _expr,
        "q2": _expr,
        "gamma": _num,
        "a": _pos,
        "b": _pos,
        "grid_n": _count,
    },
    "additionalProperties": False,
}

_CHECK = {
    "type": "object",
    "required": ["field"],
    "properties": {
        "field": {"type": "string"},
        "max": _num,
        "min": _num,
        "value": {"type": ["number", "string"]},
        "tol": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}

_EXPECT = {
    "type": "object",
    "required": ["status"],
    "properties": {
        "status": {"enum": list(STATUSES)},
        "criterion": {"type": "string"},
        "witness": {"type": "string"},
        "checks": {"type": "array", "items": _CHECK},
    },
    "additionalProperties": False,
}

_FIELDS = {
    "cov": ({"f": _expr, "x": _expr, "a": _num, "b": _num, "tol": _pos}, ["f", "x", "a", "b"]),
    "equivalence": ({"f": _expr, "x": _expr, "a": _num, "b": _num, "tol": _pos}, ["f", "x", "a", "b"]),
    "green": (
        {
            "f1": _expr,
            "f2": _expr,
            "region": {
                "type": "object",
                "required": ["a", "b", "phi", "psi"],
                "properties": {"a": _num, "b": _num, "phi": _expr, "psi": _expr},
                "additionalProperties": False,
            },
            "split": _num,
            "tol": _pos,
        },
        ["f1", "f2", "region"],
    ),
    "uniqueness": (dict(_CERTIFICATE["properties"]), ["criterion"]),
    "kamke": (
        {
            "ivp": _IVP,
            "mode": {"enum": ["self_bound", "difference_bound"]},
            "certificate": _CERTIFICATE,
            "bound": {
                "type": "object",
                "required": ["p", "psi"],
                "properties": {"p": _expr, "psi": _expr},
                "additionalProperties": False,
            },
            "grid_n": _count,
        },
        ["ivp", "mode", "certificate"],
    ),
    "th3": ({"ivp": _IVP, "psi": _expr, "grid_n": _count}, ["ivp", "psi"]),
    "gronwall": (
        {
            "alpha": _expr,
            "beta": _expr,
            "phi": _expr,
            "phi0": _num,
            "t0": _num,
            "a": _pos,
            "tol": _pos,
            "grid_n": _count,
        },
        ["alpha", "beta", "t0", "a"],
    ),
    "funnel": (
        {
            "ivp": _IVP,
            "t_end": _num,
            "deltas": {"type": "array", "items": _pos, "minItems": 4},
            "rtol": _pos,
            "atol": _pos,
        },
        ["ivp", "t_end"],
    ),
    "witness": ({"c": _num, "a": _pos}, ["c", "a"]),
}


def _kind_schema(kind: str) -> dict:
    props, required = _FIELDS[kind]
    return {
        "type": "object",
        "required": ["version", "kind", *required],
        "properties": {
            "version": {"const": 1},
            "kind": {"const": kind},
            "name": {"type": "string"},
            "description": {"type": "string"},
            "expect": _EXPECT,
            **props,
        },
        "additionalProperties": False,
    }


PROBLEM_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$id": "uniqcert.problem/1",
    "type": "object",
    "required": ["version", "kind"],
    "properties": {"version": {"const": 1}, "kind": {"enum": list(KINDS)}},
    "allOf": [
        {"if": {"properties": {"kind": {"const": k}}, "required": ["kind"]}, "then": _kind_schema(k)}
        for k in KINDS
    ],
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$id": REPORT_SCHEMA_ID,
    "type": "object",
    "required": ["schema", "tool_version", "kind", "status", "exit_code", "summary", "payload", "evidence", "wall_time"],
    "properties": {
        "schema": {"const": REPORT_SCHEMA_ID},
        "tool_version": {"type": "string"},
        "kind": {"enum": [*KINDS, "fixtures"]},
        "status": {"enum": list(STATUSES)},
        "exit_code": {"enum": [0, 1, 2]},
        "summary": {"type": "string"},
        "payload": {"type": "object"},
        "evidence": {"type": "object"},
        "wall_time": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}


class SchemaError(ValueError):
    pass


def _check(instance, schema):
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(instance), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise SchemaError(f"{where}: {err.message}")


def validate_problem(data: dict) -> None:
    _check(data, PROBLEM_SCHEMA)


def validate_report(data: dict) -> None:
    _check(data, REPORT_SCHEMA)


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings so the output stays strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else repr(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):
        return _clean(obj.item())
    return obj


@dataclass
class Report:
    kind: str
    status: str
    summary: str
    payload: dict = field(default_factory=dict)
    evidence: dict = field(default_factory=dict)
    series: dict | None = None  # column name -> list of floats, for CSV
    wall_time: float = 0.0

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.status]

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA_ID,
            "tool_version": __version__,
            "kind": self.kind,
            "status": self.status,
            "exit_code": self.exit_code,
            "summary": self.summary,
            "payload": _clean(self.payload),
            "evidence": _clean(self.evidence),
            "wall_time": self.wall_time,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False, allow_nan=False)

    def to_text(self) -> str:
        d = self.to_dict()
        lines = [
            f"kind: {d['kind']}",
            f"status: {d['status']}",
            f"summary: {d['summary']}",
        ]
        lines += [f"{k}: {_fmt(v)}" for k, v in _flatten(d["payload"])]
        evidence = list(_flatten(d["evidence"]))
        if evidence:
            lines.append("evidence:")
            lines += [f"  {k}: {_fmt(v)}" for k, v in evidence]
        lines.append(f"tool_version: {d['tool_version']}")
        lines.append(f"wall_time: {d['wall_time']:.3f}s")
        return "\n".join(lines)

    def to_csv(self) -> str:
        if not self.series:
            raise ValueError(f"{self.kind} reports carry no series")
        names = list(self.series)
        rows = zip(*(self.series[n] for n in names))
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(names)
        for row in rows:
            writer.writerow([format(float(v), ".17g") for v in row])
        return buf.getvalue()


def _flatten(obj, prefix=""):
    if isinstance(obj, dict) and obj:
        for k, v in obj.items():
            yield from _flatten(v, f"{prefix}.{k}" if prefix else str(k))
    else:
        yield prefix, obj


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        if all(isinstance(x, (int, float)) for x in v):
            return "[" + ", ".join(_fmt(x) for x in v) + "]"
        return json.dumps(v)
    return str(v)


def write_atomic(path: str, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".uniqcert-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
