"""Machine-readable experiment reports.

Every metric carries its target, tolerance, pass/fail, and a provenance tag
("paper" for values the source results pin down, "derived" for oracle- or
calibration-backed values, "trivial" for arithmetic identities, "diagnostic"
for reported-but-not-gated numbers).  Reports serialize to schema-stable JSON
with sorted keys; wall-clock and timestamp live under a separate "timing" key
so reruns are bitwise-identical modulo timing.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

SCHEMA_VERSION = "1"

TAGS = ("paper", "derived", "trivial", "diagnostic")


@dataclass
class Metric:
    name: str
    value: float
    tag: str
    target: float | str | None = None
    tolerance: float | None = None
    passed: bool | None = None
    note: str = ""

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown provenance tag {self.tag!r}")
        if self.passed is None and self.tag != "diagnostic":
            raise ValueError(f"metric {self.name}: only diagnostics may omit pass/fail")

    @classmethod
    def within(cls, name: str, value: float, target: float, tolerance: float,
               tag: str, note: str = "") -> "Metric":
        return cls(name, value, tag, target, tolerance,
                   passed=bool(abs(value - target) <= tolerance), note=note)

    @classmethod
    def below(cls, name: str, value: float, bound: float, tag: str, note: str = "") -> "Metric":
        return cls(name, value, tag, f"< {bound:.6g}", bound,
                   passed=bool(value < bound), note=note)

    @classmethod
    def at_least(cls, name: str, value: float, bound: float, tag: str, note: str = "") -> "Metric":
        return cls(name, value, tag, f">= {bound:.6g}", bound,
                   passed=bool(value >= bound), note=note)

    @classmethod
    def diagnostic(cls, name: str, value: float, note: str = "") -> "Metric":
        return cls(name, value, "diagnostic", note=note)


@dataclass
class Report:
    experiment: str
    seed: int
    config: dict
    metrics: list = field(default_factory=list)
    wallclock_s: float = 0.0
    timestamp: str = ""

    def add(self, metric: Metric) -> Metric:
        self.metrics.append(metric)
        return metric

    @property
    def all_passed(self) -> bool:
        return all(m.passed for m in self.metrics if m.passed is not None)

    def payload(self) -> dict:
        """Deterministic part of the report (excludes timing)."""
        return {
            "artifact_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "seed": self.seed,
            "config": dict(sorted(self.config.items())),
            "passed": self.all_passed,
            "metrics": [
                {
                    "name": m.name,
                    "value": m.value,
                    "target": m.target,
                    "tolerance": m.tolerance,
                    "passed": m.passed,
                    "tag": m.tag,
                    "note": m.note,
                }
                for m in self.metrics
            ],
        }

    def to_json(self) -> str:
        data = self.payload()
        data["timing"] = {"wallclock_s": self.wallclock_s, "timestamp": self.timestamp}
        return json.dumps(data, sort_keys=True, indent=2)

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{self.experiment}-report.json"
        path.write_text(self.to_json())
        return path

    def summary_lines(self):
        for m in self.metrics:
            if m.passed is None:
                flag = "INFO"
            else:
                flag = "PASS" if m.passed else "FAIL"
            tgt = "" if m.target is None else f" target={m.target}" + (
                f" tol={m.tolerance:.6g}" if m.tolerance is not None and not isinstance(m.target, str) else ""
            )
            yield f"[{flag}] {m.name} = {m.value:.6g}{tgt} ({m.tag})"


def stamp(report: Report, t_start: float) -> Report:
    report.wallclock_s = round(time.perf_counter() - t_start, 3)
    report.timestamp = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())
    return report


def write_csv(out_dir, name: str, header, rows) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path
