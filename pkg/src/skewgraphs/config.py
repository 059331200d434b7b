"""Run configuration: a line-oriented ``[section]`` / ``key = value`` format.

The parser keeps the line and column of every value so that conversion
errors point at the offending text, which ``configparser`` cannot do.
Serialization is canonical (schema order, ``repr`` floats), so
parse -> serialize -> parse is a fixed point.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from typing import Any, Callable

from .fiber_maps import BumpProfile
from .skew_system import SkewSystem, default_system


class ConfigParseError(ValueError):
    def __init__(self, message, line=0, col=0, source="<config>"):
        super().__init__(f"{source}:{line}:{col}: {message}")
        self.line, self.col, self.source = line, col, source


# -- value types ---------------------------------------------------------------------


def _pos_int(s):
    v = int(s)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


def _nonneg_float(s):
    v = float(s)
    if not v >= 0:
        raise ValueError("must be >= 0")
    return v


def _pos_float(s):
    v = float(s)
    if not v > 0:
        raise ValueError("must be > 0")
    return v


def _list(conv):
    def parse(s):
        items = [p.strip() for p in s.split(",") if p.strip()]
        if not items:
            raise ValueError("empty list")
        return tuple(conv(p) for p in items)
    return parse


def _interval(s):
    a, sep, b = s.partition(":")
    if not sep:
        raise ValueError("interval must look like lo:hi")
    lo, hi = float(a), float(b)
    if not lo < hi:
        raise ValueError("interval needs lo < hi")
    return (lo, hi)


def _bins(s):
    a, sep, b = s.lower().partition("x")
    if not sep:
        raise ValueError("bins must look like <t>x<x>")
    return (_pos_int(a), _pos_int(b))


def _choice(*opts):
    def parse(s):
        if s not in opts:
            raise ValueError(f"must be one of {', '.join(opts)}")
        return s
    return parse


def _fmt(v):
    if isinstance(v, tuple):
        return ", ".join(_fmt(a) for a in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass(frozen=True)
class Key:
    conv: Callable
    default: Any
    fmt: Callable = _fmt
    doc: str = ""


def _fmt_interval(v):
    return f"{v[0]!r}:{v[1]!r}"


def _fmt_intervals(v):
    return ", ".join(_fmt_interval(p) for p in v)


def _fmt_bins(v):
    return f"{v[0]}x{v[1]}"


SCHEMA: dict[str, dict[str, Key]] = {
    "run": {
        "seed": Key(int, None, doc="64-bit seed (SEED env var or --seed override it)"),
    },
    "system": {
        "base": Key(_choice("baker", "solenoid", "circle"), "baker"),
        "bands": Key(_list(_interval), ((0.08, 0.42), (0.58, 0.92)), _fmt_intervals),
        "pinches": Key(_list(_interval), ((0.18, 0.32), (0.68, 0.82)), _fmt_intervals),
        "c": Key(_nonneg_float, 2.0),
        "l0": Key(_interval, (0.0, 0.25), _fmt_interval),
        "l1": Key(_interval, (0.5, 0.75), _fmt_interval),
        "delta": Key(_pos_float, 0.02),
        "eta": Key(_nonneg_float, 0.0),
        "w": Key(_pos_float, 0.04),
        "eta_band": Key(int, 0),
    },
    "budgets": {
        "depth": Key(_pos_int, 400),
        "count": Key(_pos_int, 1000),
        "n": Key(_pos_int, 10000),
        "burn_in": Key(_pos_int, 1000),
        "bins": Key(_bins, (128, 256), _fmt_bins),
        "bone_tol": Key(_pos_float, 1e-4),
        "srb_points": Key(_pos_int, 500),
        "kingman_count": Key(_pos_int, 100),
        "kingman_m": Key(_pos_int, 256),
        "resolution": Key(_list(_pos_int), (256, 512, 1024)),
        "epsilons": Key(_list(_pos_float), (0.0625, 0.03125, 0.015625)),
        "n_max": Key(_pos_int, 6),
        "baker_epsilons": Key(_list(_pos_float), (0.125,)),
        "baker_n_max": Key(_pos_int, 5),
    },
    "pressure": {
        "potentials": Key(_list(str), ("zero", "neglog4", "cos:0.5")),
    },
    "sweep": {
        "command": Key(_choice("graph", "bones", "lyapunov", "srb", "equilibrium"), "graph"),
        "etas": Key(_list(_nonneg_float), (0.0, 0.1, 0.2, 0.3)),
    },
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)  # section -> key -> typed value
    source: str = "<config>"

    def get(self, section, key):
        return self.values[section][key]

    def __getitem__(self, dotted):
        sec, key = dotted.split(".", 1)
        return self.values[sec][key]

    @property
    def seed(self):
        return self.values["run"]["seed"]

    def serialize(self) -> str:
        out = []
        for sec, keys in SCHEMA.items():
            out.append(f"[{sec}]")
            for key, spec in keys.items():
                v = self.values[sec][key]
                if v is None:
                    continue
                out.append(f"{key} = {spec.fmt(v)}")
            out.append("")
        return "\n".join(out)

    def hash(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()[:16]

    def with_value(self, section, key, text, source="<override>"):
        vals = {s: dict(k) for s, k in self.values.items()}
        vals[section][key] = _convert(section, key, text, 0, 0, source)
        return RunConfig(vals, self.source)

    def system(self) -> SkewSystem:
        s = self.values["system"]
        if len(s["bands"]) != len(s["pinches"]):
            raise ValueError("bands and pinches must have the same length")
        prof = BumpProfile(s["l0"], s["l1"], s["delta"])
        return default_system(s["base"], s["c"], s["bands"], s["pinches"], prof,
                              s["eta"], s["w"], s["eta_band"])


def _convert(section, key, text, line, col, source):
    if section not in SCHEMA:
        raise ConfigParseError(f"unknown section [{section}]", line, col, source)
    if key not in SCHEMA[section]:
        raise ConfigParseError(f"unknown key {key!r} in [{section}]", line, col, source)
    try:
        return SCHEMA[section][key].conv(text)
    except (ValueError, TypeError) as e:
        raise ConfigParseError(f"bad value for {section}.{key}: {text!r} ({e})", line, col, source)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    vals = {sec: {k: spec.default for k, spec in keys.items()} for sec, keys in SCHEMA.items()}
    section = None
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped[0] in "#;":
            continue
        indent = len(raw) - len(raw.lstrip())
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigParseError("unterminated section header", lineno, len(raw.rstrip()) + 1,
                                       source)
            section = stripped[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigParseError(f"unknown section [{section}]", lineno, indent + 2, source)
            continue
        if "=" not in stripped:
            raise ConfigParseError("expected 'key = value'", lineno, indent + 1, source)
        if section is None:
            raise ConfigParseError("key outside of any section", lineno, indent + 1, source)
        key, _, value = raw.partition("=")
        key = key.strip()
        vcol = len(raw) - len(raw.partition("=")[2].lstrip()) + 1
        if (section, key) in seen:
            raise ConfigParseError(f"duplicate key {key!r}", lineno, indent + 1, source)
        seen.add((section, key))
        if key not in SCHEMA[section]:
            raise ConfigParseError(f"unknown key {key!r} in [{section}]", lineno, indent + 1, source)
        vals[section][key] = _convert(section, key, value.strip(), lineno, vcol, source)
    return RunConfig(vals, source)


def load_config(path, overrides=(), seed=None, env=None) -> RunConfig:
    """Parse ``path``, apply ``section.key=value`` overrides and resolve the seed.

    Seed precedence: ``seed`` argument, then the ``SEED`` environment
    variable, then ``[run] seed``.  A missing seed is a parse error.
    """
    with open(path) as fh:
        cfg = parse_config(fh.read(), str(path))
    for k, item in enumerate(overrides, start=1):
        lhs, sep, rhs = item.partition("=")
        sec, dot, key = lhs.strip().partition(".")
        if not sep or not dot:
            raise ConfigParseError(f"override {item!r} must look like section.key=value", 0, k,
                                   "--set")
        cfg = cfg.with_value(sec, key, rhs.strip(), "--set")
    env = os.environ if env is None else env
    if seed is None and env.get("SEED"):
        try:
            seed = int(env["SEED"])
        except ValueError:
            raise ConfigParseError(f"SEED={env['SEED']!r} is not an integer", 0, 0, "SEED")
    if seed is not None:
        cfg = cfg.with_value("run", "seed", str(seed), "--seed")
    if cfg.seed is None:
        raise ConfigParseError("a seed is required ([run] seed, SEED or --seed)", 0, 0, cfg.source)
    if not 0 <= cfg.seed < 2**64:
        raise ConfigParseError("seed must fit in 64 bits", 0, 0, cfg.source)
    return cfg


def default_config(seed: int = 1) -> RunConfig:
    vals = {sec: {k: spec.default for k, spec in keys.items()} for sec, keys in SCHEMA.items()}
    vals["run"]["seed"] = seed
    return RunConfig(vals, "<default>")
