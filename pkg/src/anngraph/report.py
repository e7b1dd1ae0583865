"""Experiment reports: a fixed column schema per suite, CSV/JSON emission and a self-audit."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .fileio import write_atomic


class AuditError(AssertionError):
    """A reported value does not recompute from the raw counts in its row."""


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


@dataclass
class ExperimentReport:
    suite: str
    columns: list[str]
    rows: list[dict] = field(default_factory=list)
    sources: dict[str, str] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    timing: dict[str, float] = field(default_factory=dict)

    def add_row(self, row: dict) -> None:
        unknown = set(row) - set(self.columns)
        if unknown:
            raise KeyError(f"{self.suite}: columns not in schema: {sorted(unknown)}")
        self.rows.append({c: row.get(c) for c in self.columns})

    def column(self, name: str) -> list:
        return [row[name] for row in self.rows]

    def row_for(self, model_label: str) -> dict:
        for row in self.rows:
            if row.get("model") == model_label:
                return row
        raise KeyError(model_label)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([fmt(row[c]) for c in self.columns])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "suite": self.suite,
            "config": self.config,
            "columns": self.columns,
            "rows": [{k: _jsonable(v) for k, v in row.items()} for row in self.rows],
            "sources": self.sources,
            "timing_seconds": self.timing,
        }
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"

    def write(self, directory, stem: str | None = None) -> tuple[Path, Path]:
        directory = Path(directory)
        stem = stem or f"report_{self.suite.replace('-', '_')}"
        csv_path = directory / f"{stem}.csv"
        json_path = directory / f"{stem}.json"
        write_atomic(csv_path, self.to_csv().encode())
        write_atomic(json_path, self.to_json().encode())
        return csv_path, json_path


def check_close(row: dict, column: str, expected, rel: float = 1e-9, abs_tol: float = 1e-12) -> None:
    got = row[column]
    if expected is None or got is None:
        if expected is not got and not (expected is None and got is None):
            raise AuditError(f"{column}: reported {got!r}, recomputed {expected!r}")
        return
    if isinstance(expected, bool) or isinstance(got, bool):
        if bool(got) != bool(expected):
            raise AuditError(f"{column}: reported {got!r}, recomputed {expected!r}")
        return
    if math.isinf(expected) or math.isinf(got):
        if expected != got:
            raise AuditError(f"{column}: reported {got!r}, recomputed {expected!r}")
        return
    if not math.isclose(got, expected, rel_tol=rel, abs_tol=abs_tol):
        raise AuditError(f"{column}: reported {got!r}, recomputed {expected!r}")


def proportion_stderr(successes: int, trials: int) -> float:
    p = successes / trials
    return math.sqrt(p * (1.0 - p) / trials)
