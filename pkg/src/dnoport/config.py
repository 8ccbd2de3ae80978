"""Key-value run configuration.

A config file is plain ``key = value`` lines; ``#`` starts a comment and an
optional ``[section]`` header is ignored. Algorithm keys:

    N, F, CR, eta_m, p_m, T, n_r, p_delta, eval_cap, time_cap, mode, seed, workers

Problem keys:

    K, eps, ups, tau, preassigned   (preassigned is a comma list of 0-based indices)
    constraints = benchmark          (K=10, eps=0.01, ups=1, asset index 29 held, tau=0.008)
    split                            (last in-sample date for price-history CSVs)

Bookkeeping keys: ``label`` names the method in tables and ``reference``
points at a reference front used for the per-generation metrics.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .dno import DnoConfig
from .instances import ConstraintSet, benchmark_constraints, make_constraints

ALGO_KEYS = {f.name for f in fields(DnoConfig)}
PROBLEM_KEYS = {"K", "eps", "ups", "tau", "preassigned", "constraints", "split"}
META_KEYS = {"label", "reference", "backend"}
KNOWN = ALGO_KEYS | PROBLEM_KEYS | META_KEYS


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    algo: DnoConfig = field(default_factory=DnoConfig)
    problem: dict = field(default_factory=dict)
    label: str = "dno-moead"
    reference: str | None = None
    backend: str | None = None

    def constraints(self, n: int) -> ConstraintSet:
        p = self.problem
        if p.get("constraints") == "benchmark":
            extra = set(p) - {"constraints", "split"}
            if extra:
                raise ConfigError(f"constraints = benchmark cannot be combined with {sorted(extra)}")
            return benchmark_constraints(n)
        if "constraints" in p:
            raise ConfigError(f"unknown constraint preset {p['constraints']!r}")
        if "K" not in p:
            raise ConfigError("config needs K (or constraints = benchmark)")
        return make_constraints(
            n,
            K=p["K"],
            eps=p.get("eps", 0.0),
            ups=p.get("ups", 1.0),
            preassigned=p.get("preassigned", ()),
            tau=p.get("tau", 0.0),
        )

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.algo.as_dict().items()}
        out.update({k: (list(v) if isinstance(v, tuple) else v) for k, v in self.problem.items()})
        out["label"] = self.label
        if self.reference is not None:
            out["reference"] = self.reference
        if self.backend is not None:
            out["backend"] = self.backend
        return out


def _num(key, raw, kind):
    try:
        if kind is int:
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key} = {raw!r} is not a valid {kind.__name__}") from None


def _coerce(key: str, raw) -> object:
    if not isinstance(raw, str):
        return tuple(raw) if isinstance(raw, list) else raw
    raw = raw.strip()
    if key in ("N", "T", "eval_cap", "seed", "workers", "K"):
        return _num(key, raw, int)
    if key in ("F", "CR", "eta_m", "p_delta", "p_de", "eps", "ups", "tau"):
        return _num(key, raw, float)
    if key == "n_r":
        return math.inf if raw.lower() in ("inf", "infinity") else _num(key, raw, int)
    if key == "p_m":
        return None if raw.lower() in ("auto", "1/n", "") else _num(key, raw, float)
    if key == "time_cap":
        return None if raw.lower() in ("none", "") else _num(key, raw, float)
    if key == "preassigned":
        return tuple(_num(key, x, int) for x in raw.replace(";", ",").split(",") if x.strip())
    return raw


def from_mapping(values: dict) -> RunConfig:
    unknown = set(values) - KNOWN
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    vals = {k: _coerce(k, v) for k, v in values.items()}
    algo = DnoConfig(**{k: v for k, v in vals.items() if k in ALGO_KEYS})
    try:
        algo.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    problem = {k: v for k, v in vals.items() if k in PROBLEM_KEYS}
    return RunConfig(
        algo, problem, str(vals.get("label", "dno-moead")), vals.get("reference"), vals.get("backend")
    )


def parse_text(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string("[__top__]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    values: dict = {}
    for section in cp.sections():
        for key, val in cp.items(section):
            if key in values:
                raise ConfigError(f"duplicate key {key!r}")
            values[key] = val
    return from_mapping(values)


def load(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    return parse_text(path.read_text())
