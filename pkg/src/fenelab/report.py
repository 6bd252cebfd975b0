"""Writing experiment results to disk.

Every file carries the SHA-256 of the resolved configuration.  CSV files
start with a ``# config_sha256=...`` comment line followed by the header
row; floats are written with 17 significant digits so that equal inputs
give byte-identical files.  Wall-clock timings go to a separate
``timings.json`` so that all other files stay reproducible.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import jsonschema

from .errors import InvalidArgument

FORMATS = ("csv", "json-summary")

SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["experiment", "version", "config_sha256", "config", "summary", "checks",
                 "passed"],
    "properties": {
        "experiment": {"enum": ["corrector", "stationary", "singular-limit", "pathwise"]},
        "version": {"type": "string", "pattern": "^v[0-9]"},
        "config_sha256": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "config": {"type": "object"},
        "summary": {"type": "object"},
        "checks": {"type": "object", "additionalProperties": {"type": "boolean"}},
        "passed": {"type": "boolean"},
    },
    "additionalProperties": False,
}

TIMINGS_SCHEMA = {
    "type": "object",
    "required": ["config_sha256", "wall_seconds"],
    "properties": {
        "config_sha256": {"type": "string"},
        "wall_seconds": {"type": "object", "additionalProperties": {"type": "number"}},
    },
}


def version_string() -> str:
    from . import __version__
    return f"v{__version__}"


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class Table:
    columns: list
    rows: list


@dataclass
class ExperimentResult:
    """Tables, scalar summary and pass/fail checks of one experiment run."""

    experiment: str
    config: dict
    tables: dict
    summary: dict
    checks: dict
    timings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    return str(v)


def _json_safe(v):
    if isinstance(v, dict):
        return {str(k): _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if hasattr(v, "item"):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def write_csv(path, table: Table, digest: str):
    lines = [f"# config_sha256={digest}", ",".join(table.columns)]
    for row in table.rows:
        if len(row) != len(table.columns):
            raise InvalidArgument(f"row of length {len(row)} for {len(table.columns)} columns")
        lines.append(",".join(_fmt(x) for x in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path):
    """Inverse of :func:`write_csv`: ``(digest, columns, rows as strings)``."""
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        cols = fh.readline().rstrip("\n").split(",")
        rows = [ln.rstrip("\n").split(",") for ln in fh if ln.strip()]
    return first.split("=", 1)[1], cols, rows


def summary_document(res: ExperimentResult) -> dict:
    doc = {
        "experiment": res.experiment,
        "version": version_string(),
        "config_sha256": config_hash(res.config),
        "config": _json_safe(res.config),
        "summary": _json_safe(res.summary),
        "checks": {k: bool(v) for k, v in res.checks.items()},
        "passed": res.passed,
    }
    jsonschema.validate(doc, SUMMARY_SCHEMA)
    return doc


def emit_report(results: ExperimentResult, format=FORMATS, out_dir=".") -> list:
    """Write tables and/or the JSON summary into ``out_dir``.

    ``format`` is ``"csv"``, ``"json-summary"`` or a sequence of both.
    Returns the written paths.  An unwritable directory raises ``OSError``.
    """
    formats = (format,) if isinstance(format, str) else tuple(format)
    bad = [f for f in formats if f not in FORMATS]
    if bad or not formats:
        raise InvalidArgument(f"unknown output format(s) {bad or formats}")
    if not results.tables and not results.summary:
        raise InvalidArgument("nothing to write")
    os.makedirs(out_dir, exist_ok=True)
    digest = config_hash(results.config)
    paths = []
    if "csv" in formats:
        for name, table in results.tables.items():
            path = os.path.join(out_dir, f"{name}.csv")
            write_csv(path, table, digest)
            paths.append(path)
    if "json-summary" in formats:
        path = os.path.join(out_dir, "summary.json")
        with open(path, "w") as fh:
            json.dump(summary_document(results), fh, indent=2, sort_keys=True)
            fh.write("\n")
        paths.append(path)
        timings = {"config_sha256": digest,
                   "wall_seconds": {k: float(v) for k, v in results.timings.items()}}
        jsonschema.validate(timings, TIMINGS_SCHEMA)
        path = os.path.join(out_dir, "timings.json")
        with open(path, "w") as fh:
            json.dump(timings, fh, indent=2, sort_keys=True)
            fh.write("\n")
        paths.append(path)
    return paths
