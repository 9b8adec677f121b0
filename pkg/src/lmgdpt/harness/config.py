"""Plain-text sweep configuration.

One ``key = value`` pair per line; ``#`` starts a comment. Values may be

* a scalar or arithmetic expression: ``0.5``, ``pi``, ``pi/2``, ``1e-4``
* a comma list: ``100, 200, 400``
* an inclusive linear grid ``start:stop:count``: ``0:1:41``
* a bare word: ``axis = x`` or ``method = exact``

Expressions are evaluated with a restricted AST walker that accepts numbers,
``pi`` and ``e``, the four arithmetic operators, powers and unary signs.
"""
from __future__ import annotations

import ast
import json
import math
import operator
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError

__all__ = ["KINDS", "GRID_KEYS", "SweepConfig", "parse_config", "load_config", "evaluate_expression"]

KINDS = ("phase-diagram", "qfi-sweep", "scaling", "spectrum", "echo", "open-sweep")
GRID_KEYS = ("N", "Omega", "omega", "theta", "phi", "t", "gamma", "axis", "window")

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_NAMES = {"pi": math.pi, "e": math.e}

# per-kind defaults; every resolved value is written into the output metadata
_DEFAULTS: dict[str, dict] = {
    "phase-diagram": {"N": [1], "Omega": np.linspace(0, 1, 41).tolist(),
                      "omega": np.linspace(-0.3, 0.3, 41).tolist(),
                      "theta": [math.pi], "phi": [0.0], "T": 100.0, "threshold": 0.05},
    "qfi-sweep": {"N": [300], "Omega": np.linspace(0.3, 0.7, 41).tolist(), "omega": [1e-4],
                  "theta": [math.pi], "phi": [0.0], "t": [1000.0], "axis": ["x", "z"], "method": "exact"},
    "scaling": {"N": [100, 200, 400, 800], "Omega": np.linspace(0.4, 0.6, 21).tolist(), "omega": [1e-4],
                "theta": [math.pi], "phi": [0.0], "t": [1000.0], "axis": ["x", "z"],
                "method": "exact", "refine": 11, "quantity": "qfi", "observable": "y"},
    "spectrum": {"N": [500], "Omega": [0.5], "omega": [1e-4], "theta": [math.pi], "phi": [0.0],
                 "axis": ["x", "z"], "window": [3.0], "weighted": "yes"},
    "echo": {"N": [100], "Omega": [0.5], "omega": [0.0], "theta": [math.pi], "phi": [0.0],
             "t": np.linspace(0.5, 40, 80).tolist(), "axis": ["z"], "observable": "y",
             "method": "eigen", "delta": 0.0},
    "open-sweep": {"N": [100], "Omega": [0.5], "omega": [0.0], "theta": [math.pi], "phi": [0.0],
                   "t": np.linspace(0.25, 20, 80).tolist(), "gamma": [0.01], "axis": ["z"],
                   "observable": "y", "order": 20},
}

# keys accepted on top of the grids, per kind
_OPTIONS = {
    "phase-diagram": {"T", "threshold", "chi"},
    "qfi-sweep": {"method", "chi"},
    "scaling": {"method", "refine", "quantity", "observable", "chi"},
    "spectrum": {"weighted", "chi"},
    "echo": {"observable", "method", "delta", "chi", "wigner_t", "wigner_delta", "wigner_n_theta", "wigner_n_phi"},
    "open-sweep": {"observable", "order", "chi", "backward_gamma"},
}
_COMMON = {"kind", "out", "workers", "seedless"}


def evaluate_expression(text: str) -> float:
    """Evaluate a numeric expression without ``eval``."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse {text!r}") from exc

    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](walk(node.left), walk(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](walk(node.operand))
        raise ConfigError(f"unsupported expression {text!r}")

    return float(walk(tree))


def _is_word(text: str) -> bool:
    return text.replace("-", "").replace("_", "").isalpha() and text not in _NAMES


def _parse_value(text: str):
    text = text.strip()
    if not text:
        raise ConfigError("empty value")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid must read start:stop:count, got {text!r}")
        start, stop = evaluate_expression(parts[0]), evaluate_expression(parts[1])
        count = evaluate_expression(parts[2])
        if count != int(count) or count < 1:
            raise ConfigError(f"grid count must be a positive integer in {text!r}")
        return np.linspace(start, stop, int(count)).tolist()
    if "," in text:
        return [_parse_value(p) for p in text.split(",") if p.strip()]
    if _is_word(text):
        return text
    return evaluate_expression(text)


def _as_list(value) -> list:
    return value if isinstance(value, list) else [value]


@dataclass
class SweepConfig:
    """Fully resolved sweep description."""

    kind: str
    grids: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    chi: float = 1.0
    out: str = "results"
    workers: int = 1
    seedless: bool = True

    def grid(self, key: str) -> list:
        return self.grids[key]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def n_points(self) -> int:
        return int(np.prod([len(v) for v in self.grids.values()])) if self.grids else 0


def _validate(cfg: SweepConfig) -> None:
    for key, values in cfg.grids.items():
        if len(values) == 0:
            raise ConfigError(f"grid {key!r} is empty")
    for n in cfg.grids.get("N", []):
        if not isinstance(n, (int, float)) or n != int(n) or n < 1:
            raise ConfigError(f"N must be a positive integer, got {n!r}")
    for a in cfg.grids.get("axis", []):
        if a not in ("x", "z"):
            raise ConfigError(f"axis must be x or z, got {a!r}")
    for key in ("Omega", "omega", "theta", "phi", "t", "gamma", "window"):
        for v in cfg.grids.get(key, []):
            if not isinstance(v, float) or not math.isfinite(v):
                raise ConfigError(f"{key} values must be finite numbers, got {v!r}")
    if any(v < 0 for v in cfg.grids.get("t", [])):
        raise ConfigError("times must be non-negative")
    if any(v < 0 for v in cfg.grids.get("gamma", [])):
        raise ConfigError("dephasing rates must be non-negative")
    if cfg.chi < 0:
        raise ConfigError("chi must be non-negative")
    if cfg.workers < 1:
        raise ConfigError("workers must be at least 1")
    if cfg.kind == "open-sweep" and 0.0 in cfg.grids.get("t", []):
        raise ConfigError("open-sweep times must be positive")


def parse_config(text: str, overrides: dict | None = None) -> SweepConfig:
    """Parse configuration text and fill in the per-kind defaults."""
    raw: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value if key == "out" else _parse_value(value)
    overrides = dict(overrides or {})
    if "kind" in overrides and "kind" in raw and raw["kind"] != overrides["kind"]:
        raise ConfigError(f"config is for {raw['kind']!r} but {overrides['kind']!r} was requested")
    raw.update(overrides)
    kind = raw.pop("kind", None)
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {', '.join(KINDS)}; got {kind!r}")
    allowed = set(_DEFAULTS[kind]) | _OPTIONS[kind] | _COMMON
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown keys for {kind}: {sorted(unknown)}")

    merged = {k: v for k, v in _DEFAULTS[kind].items()}
    merged.update(raw)
    grids, options = {}, {}
    for key, value in merged.items():
        if key in _COMMON or key == "chi":
            continue
        if key in GRID_KEYS:
            values = _as_list(value)
            if key == "N":
                values = [int(v) if isinstance(v, float) and v == int(v) else v for v in values]
            grids[key] = values
        else:
            options[key] = value
    seedless = merged.get("seedless", True)
    cfg = SweepConfig(
        kind=kind,
        grids=grids,
        options=options,
        chi=float(merged.get("chi", 1.0)),
        out=str(merged.get("out", "results")),
        workers=int(merged.get("workers", 1)),
        seedless=seedless not in ("no", "false", 0.0),
    )
    _validate(cfg)
    return cfg


def load_config(path: str | Path, overrides: dict | None = None) -> SweepConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, overrides)
