"""Run reports: check records, deterministic JSON and CSV rows."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__

__all__ = ["Check", "RunReport", "dumps_json", "checks_csv", "history_csv",
           "EXIT_PASS", "EXIT_CHECK_FAILED", "EXIT_NONCONVERGED", "EXIT_CONFIG",
           "EXIT_OBSTRUCTION"]

EXIT_PASS = 0
EXIT_CHECK_FAILED = 2
EXIT_NONCONVERGED = 3
EXIT_CONFIG = 4
EXIT_OBSTRUCTION = 5


@dataclass
class Check:
    name: str
    measured: float
    bound: float
    passed: bool
    size: int | None = None
    note: str | None = None

    @classmethod
    def at_most(cls, name, measured, bound, size=None, note=None) -> "Check":
        measured = float(measured)
        return cls(name, measured, float(bound), bool(measured <= bound), size, note)

    def to_dict(self) -> dict:
        d = {"name": self.name, "measured": self.measured, "bound": self.bound,
             "pass": self.passed}
        if self.size is not None:
            d["size"] = self.size
        if self.note is not None:
            d["note"] = self.note
        return d


@dataclass
class RunReport:
    scenario: dict
    checks: list[Check] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)
    results: dict = field(default_factory=dict)
    solver: dict | None = None
    exit_code: int = EXIT_PASS
    diagnostic: str | None = None
    wall_clock_seconds: float | None = None
    version: str = __version__

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        d = {
            "tool": "qlab",
            "version": self.version,
            "scenario": self.scenario,
            "pass": self.passed and self.exit_code == EXIT_PASS,
            "exit_code": self.exit_code,
            "diagnostic": self.diagnostic,
            "checks": [c.to_dict() for c in self.checks],
            "skipped": self.skipped,
            "results": self.results,
            "solver": self.solver,
        }
        if self.wall_clock_seconds is not None:
            d["wall_clock_seconds"] = self.wall_clock_seconds
        return d


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def _emit(obj, indent: int, level: int, out: list[str]):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        out.append("null")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = list(obj.items())
        for k, (key, val) in enumerate(items):
            out.append(pad)
            _emit(str(key), indent, level + 1, out)
            out.append(": ")
            _emit(val, indent, level + 1, out)
            out.append(",\n" if k < len(items) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            out.append("[]")
            return
        out.append("[\n")
        for k, val in enumerate(seq):
            out.append(pad)
            _emit(val, indent, level + 1, out)
            out.append(",\n" if k < len(seq) - 1 else "\n")
        out.append(end + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj, indent: int = 2) -> str:
    """JSON text with floats fixed at 17 significant digits.

    Non-finite floats are written as the strings ``"nan"``, ``"inf"``,
    ``"-inf"`` so the output stays valid JSON.
    """
    out: list[str] = []
    _emit(obj, indent, 0, out)
    return "".join(out) + "\n"


def _csv_float(x: float) -> str:
    return _fmt_float(x).strip('"')


def checks_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "size", "measured", "bound", "pass", "note"])
    for c in report.checks:
        w.writerow([c.name, "" if c.size is None else c.size, _csv_float(c.measured),
                    _csv_float(c.bound), "true" if c.passed else "false", c.note or ""])
    return buf.getvalue()


def history_csv(history) -> str:
    """Residual history as ``iteration,residual`` columns."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "residual"])
    for k, r in enumerate(history):
        w.writerow([k, _csv_float(float(r))])
    return buf.getvalue()
