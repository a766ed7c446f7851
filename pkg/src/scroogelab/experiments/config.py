"""Flat key-value experiment configuration.

Grammar (one entry per line)::

    # comment
    key = value
    key = [v1, v2, v3]        # grid axis

Values are integers, floats, ``true``/``false``, bare or quoted strings, or
arithmetic on numbers and ``pi`` (``pi/4``, ``2*pi/3``).  ``inf`` parses as
a float.  List-valued keys named in a kind's grid axes are swept as a
Cartesian product in the order they appear in the file; other lists are
passed through as plain values.
"""

from __future__ import annotations

import ast
import hashlib
import itertools
import math
import operator
from dataclasses import dataclass, field
from pathlib import Path

from ..exceptions import ConfigError

KINDS = ("commuting", "doped_clifford", "ground_state", "theorem_check")
CHECKS = ("T1", "T2", "C1", "T3", "P1", "stabilizer_basis")

GRID_AXES = {
    "commuting": ("N_A", "N_B", "theta", "k"),
    "doped_clifford": ("N", "N_A", "chi", "depth", "N_T", "k"),
    "ground_state": ("model", "N_A", "N_B", "h", "basis", "k"),
    "theorem_check": ("N", "N_A", "N_B", "h", "beta", "chi", "basis", "k"),
}

REQUIRED = {
    "commuting": ("N_A", "N_B", "theta"),
    "doped_clifford": ("N", "N_A", "chi", "depth", "N_T"),
    "ground_state": ("model", "N_A", "N_B", "h", "basis"),
    "theorem_check": ("check",),
}

CHECK_REQUIRED = {
    "T1": ("N",),
    "T2": ("N_A", "N_B", "beta"),
    "C1": ("N_A", "N_B"),
    "T3": ("N_A", "N_B", "chi"),
    "P1": ("N_A", "N_B"),
    "stabilizer_basis": ("N_A", "N_B", "basis"),
}

DEFAULTS = {
    "k": 2,
    "instances": 10,
    "base_seed": 0,
    "mc_samples": 100_000,
    "mc_seed": 0,
    "shots": 0,
    "out": "results",
}

KIND_DEFAULTS = {
    "commuting": {"include_infinite": False},
    "doped_clifford": {"cnot_pattern": "staircase", "region": "B"},
    "ground_state": {"periodic": True, "dip_window": [0.7, 1.3], "fit_h": 1.0},
    "theorem_check": {"model": "tfim", "h": 0.8, "longitudinal": 1.0, "periodic": False, "time_window": 1.0e4, "instances": 1},
}

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv, ast.Pow: operator.pow}
_NAMES = {"pi": math.pi, "inf": math.inf, "e": math.e}


def _eval_number(node):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return node.value
    if isinstance(node, ast.Name) and node.id in _NAMES:
        return _NAMES[node.id]
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_number(node.left), _eval_number(node.right))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval_number(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    raise ValueError("not a numeric expression")


def parse_scalar(text: str):
    """Parse one scalar value (see module docstring)."""
    t = text.strip()
    if not t:
        raise ConfigError("empty value")
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if len(t) >= 2 and t[0] == t[-1] and t[0] in "'\"":
        return t[1:-1]
    try:
        return _eval_number(ast.parse(t, mode="eval").body)
    except (SyntaxError, ValueError, ZeroDivisionError, OverflowError):
        return t


def _split_list(body: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in body:
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
            continue
        depth += ch in "(["
        depth -= ch in ")]"
        cur.append(ch)
    parts.append("".join(cur))
    return [p for p in parts if p.strip()]


def parse_value(text: str):
    t = text.strip()
    if t.startswith("["):
        if not t.endswith("]"):
            raise ConfigError(f"unterminated list: {text!r}")
        return [parse_scalar(p) for p in _split_list(t[1:-1])]
    return parse_scalar(t)


def parse_config_text(text: str) -> dict:
    """Parse config text into an ordered ``dict``; later keys override earlier ones."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = line.split("=", 1)
        key = key.strip()
        if not key.isidentifier():
            raise ConfigError(f"line {lineno}: invalid key {key!r}")
        out[key] = parse_value(val)
    return out


@dataclass
class ExperimentConfig:
    """Validated configuration: kind, parameters, seed, instance count, output directory."""

    kind: str
    params: dict
    base_seed: int = 0
    instances: int = 10
    out: str = "results"
    source: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def check(self) -> str | None:
        return self.params.get("check")

    @property
    def experiment(self) -> str:
        return self.kind if self.check is None else f"{self.kind}:{self.check}"

    def grid_axes(self) -> list[str]:
        axes = GRID_AXES[self.kind]
        return [k for k in self.params if k in axes]

    def grid_points(self) -> list[dict]:
        """All fully specified points, axes varying fastest on the right."""
        axes = self.grid_axes()
        fixed = {k: v for k, v in self.params.items() if k not in axes}
        values = [self.params[a] if isinstance(self.params[a], list) else [self.params[a]] for a in axes]
        return [dict(fixed, **dict(zip(axes, combo))) for combo in itertools.product(*values)]

    def get(self, key, default=None):
        return self.params.get(key, default)

    def config_hash(self) -> str:
        blob = repr((self.kind, sorted(self.params.items(), key=lambda kv: kv[0]), self.base_seed, self.instances))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def echo(self) -> dict:
        return {"kind": self.kind, "base_seed": self.base_seed, "instances": self.instances, "out": self.out, "params": self.params}


def _check_int(params: dict, key: str, lo: int = 0) -> None:
    vals = params[key] if isinstance(params[key], list) else [params[key]]
    for v in vals:
        if isinstance(v, float) and math.isinf(v) and key == "N_B":
            continue
        if isinstance(v, bool) or not isinstance(v, int) or v < lo:
            raise ConfigError(f"{key} must be an integer >= {lo}, got {v!r}")


def build_config(raw: dict, kind: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Validate a parsed mapping and fill defaults.

    ``kind`` (from the CLI subcommand) must agree with any ``kind`` key in
    the file.  Every required key is checked before anything is computed.
    """
    raw = dict(raw)
    if overrides:
        raw.update(overrides)
    file_kind = raw.pop("kind", None)
    if kind is None:
        kind = file_kind
    elif file_kind is not None and file_kind != kind:
        raise ConfigError(f"config is for {file_kind!r} but subcommand is {kind!r}")
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; expected one of {KINDS}")
    params = dict(KIND_DEFAULTS.get(kind, {}))
    params.update({k: v for k, v in DEFAULTS.items() if k not in ("instances", "base_seed", "out")})
    params.update(raw)
    base_seed = params.pop("base_seed", DEFAULTS["base_seed"])
    instances = params.pop("instances", KIND_DEFAULTS.get(kind, {}).get("instances", DEFAULTS["instances"]))
    out = str(params.pop("out", DEFAULTS["out"]))
    missing = [k for k in REQUIRED[kind] if k not in params]
    if kind == "theorem_check":
        chk = params.get("check")
        if chk not in CHECKS:
            raise ConfigError(f"unknown check {chk!r}; expected one of {CHECKS}")
        missing += [k for k in CHECK_REQUIRED[chk] if k not in params]
    if missing:
        raise ConfigError(f"{kind}: missing required keys {missing}")
    if isinstance(base_seed, bool) or not isinstance(base_seed, int) or base_seed < 0:
        raise ConfigError(f"base_seed must be a nonnegative integer, got {base_seed!r}")
    if isinstance(instances, bool) or not isinstance(instances, int) or instances < 1:
        raise ConfigError(f"instances must be a positive integer, got {instances!r}")
    for key, lo in (("N_A", 1), ("N_B", 1), ("N", 2), ("depth", 0), ("N_T", 0), ("k", 1), ("mc_samples", 100), ("shots", 0)):
        if key in params:
            _check_int(params, key, lo)
    if kind == "ground_state":
        models = params["model"] if isinstance(params["model"], list) else [params["model"]]
        for m in models:
            if m not in ("ising", "tfim", "heisenberg", "xxz"):
                raise ConfigError(f"unknown model {m!r}")
    if "basis" in params:
        bases = params["basis"] if isinstance(params["basis"], list) else [params["basis"]]
        for b in bases:
            if b not in ("identity", "local_haar", "clifford", "haar", "t_basis"):
                raise ConfigError(f"unknown basis kind {b!r}")
    return ExperimentConfig(kind, params, int(base_seed), int(instances), out)


def load_config(path, kind: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Read, parse and validate a config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = build_config(parse_config_text(text), kind, overrides)
    cfg.source = str(path)
    return cfg
