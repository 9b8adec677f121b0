"""Regression table over the acceptance criteria."""
from __future__ import annotations

import csv
from pathlib import Path

from .criteria import CriterionResult, run_all
from .runner import format_value

__all__ = ["regression_suite", "format_table", "write_table"]


def regression_suite(numbers=None, tamper: dict | None = None) -> list[CriterionResult]:
    """Run the selected criteria (all by default); failures are rows, not exceptions."""
    return run_all(numbers, tamper)


def format_table(results: list[CriterionResult]) -> str:
    head = f"{'#':>2}  {'status':6}  {'seconds':>8}  {'criterion':26}  observed  |  expected"
    lines = [head, "-" * len(head)]
    for r in results:
        lines.append(f"{r.number:>2}  {'PASS' if r.passed else 'FAIL':6}  {r.seconds:8.1f}  "
                     f"{r.title:26}  {r.observed}  |  {r.expected}")
    n_pass = sum(r.passed for r in results)
    lines.append(f"{n_pass}/{len(results)} criteria passed")
    return "\n".join(lines)


def write_table(results: list[CriterionResult], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["criterion", "title", "passed", "observed", "expected", "seconds"])
        for r in results:
            writer.writerow([r.number, r.title, int(r.passed), r.observed, r.expected, format_value(r.seconds)])
    return path
