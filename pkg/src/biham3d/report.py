"""Residual reports: summaries, verdicts, provenance and JSON output."""

from __future__ import annotations

import json
import math
import platform
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

__all__ = ["Check", "Report", "EXIT_PASS", "EXIT_FAIL", "EXIT_ERROR"]

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _clean(obj):
    """Convert numpy scalars/arrays and non-finite floats into plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


@dataclass
class Check:
    """One verdict: ``value <= tolerance`` (kind "upper") or ``value >= tolerance`` ("lower")."""

    name: str
    value: float
    tolerance: float
    kind: str = "upper"
    mean: float | None = None
    location: list | None = None
    note: str | None = None

    @property
    def passed(self) -> bool:
        if self.value is None or not math.isfinite(self.value):
            return False
        if self.kind == "upper":
            return self.value <= self.tolerance
        return self.value >= self.tolerance

    def to_dict(self):
        d = {"value": self.value, "tolerance": self.tolerance, "kind": self.kind, "pass": self.passed}
        if self.mean is not None:
            d["mean"] = self.mean
        if self.location is not None:
            d["location"] = self.location
        if self.note:
            d["note"] = self.note
        return d


def summarize(name, values, tolerance, points=None, kind="upper", note=None) -> Check:
    """Check from pointwise residuals: max |value| with its location, and the mean."""
    a = np.abs(np.asarray(values, dtype=float)).ravel()
    if a.size == 0:
        return Check(name, float("nan"), tolerance, kind, note="no samples")
    if kind == "upper":
        k = int(np.nanargmax(a)) if np.any(np.isfinite(a)) else 0
    else:
        k = int(np.nanargmin(a)) if np.any(np.isfinite(a)) else 0
    loc = None
    if points is not None:
        loc = np.asarray(points, dtype=float).reshape(-1, 3)[k].tolist()
    return Check(name, float(a[k]), float(tolerance), kind, float(np.nanmean(a)), loc, note)


@dataclass
class Report:
    command: str
    scenario_name: str
    config: dict
    config_hash: str
    checks: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)
    error: dict | None = None

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks)

    @property
    def exit_code(self) -> int:
        if self.error is not None:
            return EXIT_ERROR
        return EXIT_PASS if self.passed else EXIT_FAIL

    @property
    def verdict(self) -> str:
        return {EXIT_PASS: "pass", EXIT_FAIL: "fail", EXIT_ERROR: "error"}[self.exit_code]

    def body(self) -> dict:
        """Everything except the timestamp; deterministic for a given scenario."""
        from . import __version__

        return _clean(
            {
                "command": self.command,
                "scenario": self.scenario_name,
                "verdict": self.verdict,
                "exit_code": self.exit_code,
                "checks": {c.name: c.to_dict() for c in self.checks},
                "verdicts": self.verdicts,
                "diagnostics": self.diagnostics,
                "tables": self.tables,
                "error": self.error,
                "config": self.config,
                "provenance": {
                    "version": __version__,
                    "config_hash": self.config_hash,
                    "numpy": np.__version__,
                    "python": platform.python_version(),
                },
            }
        )

    def to_dict(self, timestamp: bool = True) -> dict:
        d = self.body()
        if timestamp:
            d["provenance"]["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
        return d

    def to_json(self, timestamp: bool = True) -> str:
        return json.dumps(self.to_dict(timestamp), indent=2, sort_keys=True, allow_nan=False)

    def summary_lines(self) -> list[str]:
        lines = [f"{self.command} {self.scenario_name}: {self.verdict.upper()} (exit {self.exit_code})"]
        if self.error:
            lines.append(f"  error: {self.error['type']}: {self.error['message']}")
        for c in self.checks:
            op = "<=" if c.kind == "upper" else ">="
            val = "nan" if c.value is None else f"{c.value:.3e}"
            lines.append(f"  [{'ok' if c.passed else 'FAIL'}] {c.name}: {val} {op} {c.tolerance:.3e}")
        for v in self.verdicts:
            lines.append(f"  verdict: {v}")
        return lines
