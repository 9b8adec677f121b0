"""Sweep execution and persistence.

Tasks run in a process pool; ``Executor.map`` returns results in submission
order, so the written rows are ordered by grid index regardless of the
worker count. Each CSV starts with ``#`` comment lines holding the schema tag
and the resolved configuration, followed by one header row. Wall-clock data
goes to a JSON sidecar only, which keeps identical configurations producing
byte-identical CSV files.
"""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import SweepConfig
from .experiments import (
    COLUMNS,
    SCHEMA_VERSION,
    enumerate_tasks,
    evaluate,
    fit_scaling_rows,
    transient_maxima,
    wigner_tables,
)

__all__ = ["SweepResult", "run_experiment", "write_result", "format_value", "schema_tag"]


def schema_tag(kind: str) -> str:
    return f"lmgdpt/{kind}/v{SCHEMA_VERSION}"


@dataclass
class SweepResult:
    """Rows in grid order plus the configuration and run metadata."""

    config: SweepConfig
    rows: list[dict]
    wall_clock: float
    summary: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def schema(self) -> str:
        return schema_tag(self.config.kind)

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.rows if r["error_flag"])


def _evaluate_star(args):
    return evaluate(*args)


def run_experiment(config: SweepConfig) -> SweepResult:
    """Evaluate every grid point of ``config``; failures are recorded per row."""
    start = time.perf_counter()
    tasks = enumerate_tasks(config.kind, config.grids)
    jobs = [(config.kind, task, config.chi, config.options, config.grids) for task in tasks]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_evaluate_star, jobs))
    else:
        chunks = [_evaluate_star(j) for j in jobs]
    rows = [row for chunk in chunks for row in chunk]
    summary = {}
    extras = {}
    if config.kind == "scaling":
        summary["fits"] = fit_scaling_rows(rows)
    if config.kind == "qfi-sweep" and len(config.grids["t"]) >= 3:
        summary["first_transient_maximum"] = transient_maxima(rows)
    if config.kind == "echo" and "wigner_t" in config.options and tasks:
        extras["wigner"] = wigner_tables(tasks[0], config.chi, config.options)
    return SweepResult(config, rows, time.perf_counter() - start, summary, extras)


def format_value(value) -> str:
    """Deterministic text form: shortest round-trip repr for floats."""
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return "nan" if math.isnan(value) else repr(value)
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_result(result: SweepResult, out_dir: str | Path) -> dict[str, Path]:
    """Write ``<kind>.csv`` and ``<kind>.json`` (plus Wigner tables) into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kind = result.config.kind
    stem = kind.replace("-", "_")
    csv_path = out / f"{stem}.csv"
    cols = COLUMNS[kind]
    with csv_path.open("w", newline="") as fh:
        fh.write(f"# schema: {result.schema}\n")
        fh.write(f"# config: {result.config.to_json()}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for row in result.rows:
            writer.writerow([format_value(row[c]) for c in cols])
    meta = {
        "schema": result.schema,
        "config": result.config.to_dict(),
        "n_rows": len(result.rows),
        "n_failed": result.n_failed,
        "wall_clock_seconds": result.wall_clock,
        "summary": result.summary,
    }
    json_path = out / f"{stem}.json"
    json_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    paths = {"csv": csv_path, "json": json_path}
    for name, table in result.extras.get("wigner", {}).items():
        p = out / f"wigner_{name}.csv"
        with p.open("w", newline="") as fh:
            fh.write(f"# schema: lmgdpt/wigner/v{SCHEMA_VERSION}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["r", "phi", "W"])
            for r, ph, w in table.as_array():
                writer.writerow([format_value(float(r)), format_value(float(ph)), format_value(float(w))])
        paths[f"wigner_{name}"] = p
    return paths
