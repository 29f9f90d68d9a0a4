"""Experiment configuration: ``key = value`` lines grouped in sections.

A config file looks like::

    [experiment]
    subcommand = hitting
    d = 5
    N = 2
    set = A.txt
    master_seed = 7

    [params]
    shells = 20,40,80
    replicas = 400

Everything under ``[params]`` is kept typed (int, float, number list or
string) so that parsing, serializing and parsing again is the identity.
"""
from __future__ import annotations

import configparser
import hashlib
import io
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .lattice import PointSet, parse_pointset, read_pointset

WORKERS_ENV = "SAUSAGE_WORKERS"

SUBCOMMANDS = ("capacity", "bcap", "sausage", "hitting", "iequiv", "d4rate",
               "tree-chain", "verify")

_EXPERIMENT_KEYS = ("subcommand", "d", "N", "law", "set", "points", "master_seed",
                    "workers", "output")


class ConfigError(ValueError):
    """Invalid configuration; names the offending field and constraint."""

    def __init__(self, field_name: str, constraint: str):
        super().__init__(f"{field_name}: {constraint}")
        self.field = field_name
        self.constraint = constraint


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(WORKERS_ENV, f"must be an integer, got {raw!r}") from None


def parse_value(text: str):
    """Typed reading of one parameter value."""
    t = text.strip()
    if t in ("true", "false"):
        return t == "true"
    if "," in t:
        parts = [p.strip() for p in t.split(",") if p.strip()]
        try:
            return [_number(p) for p in parts]
        except ValueError:
            return parts
    try:
        return _number(t)
    except ValueError:
        return t


def _number(t: str):
    try:
        return int(t)
    except ValueError:
        pass
    v = float(t)
    # 1e5 style integers stay integers
    if v.is_integer() and "." not in t and abs(v) < 2**63:
        return int(v)
    return v


def format_value(v) -> str:
    if isinstance(v, (list, tuple)):
        return ",".join(format_value(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class ExperimentConfig:
    subcommand: str
    d: int | None = None
    N: int | None = None
    law: str | None = None
    set: str | None = None
    points: str | None = None
    master_seed: int = 0
    workers: int = field(default_factory=default_workers)
    output: str = "results"
    params: dict[str, Any] = field(default_factory=dict)

    # -- serialization -----------------------------------------------------

    def to_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        exp = {}
        for k in _EXPERIMENT_KEYS:
            v = getattr(self, k)
            if v is not None:
                exp[k] = format_value(v)
        cp["experiment"] = exp
        cp["params"] = {k: format_value(self.params[k]) for k in sorted(self.params)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError("config", f"unreadable: {exc}") from None
        if "experiment" not in cp:
            raise ConfigError("experiment", "section missing")
        exp = dict(cp["experiment"])
        params = {k: parse_value(v) for k, v in cp["params"].items()} if "params" in cp else {}
        return cls.from_mapping(exp, params)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())

    @classmethod
    def from_mapping(cls, exp: dict, params: dict | None = None) -> "ExperimentConfig":
        unknown = set(exp) - set(_EXPERIMENT_KEYS)
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown experiment field")
        if "subcommand" not in exp:
            raise ConfigError("subcommand", "required")
        kw: dict[str, Any] = {"subcommand": str(exp["subcommand"])}
        for k in ("d", "N", "master_seed", "workers"):
            if exp.get(k) is not None:
                kw[k] = _as_int(k, exp[k])
        for k in ("law", "set", "points", "output"):
            if exp.get(k) is not None:
                kw[k] = str(exp[k])
        return cls(params=dict(params or {}), **kw)

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        """Flags win over file values; unknown keys become params."""
        exp = {k: overrides[k] for k in _EXPERIMENT_KEYS if k in overrides}
        params = dict(self.params)
        for k, v in overrides.items():
            if k not in _EXPERIMENT_KEYS:
                params[k] = parse_value(v) if isinstance(v, str) else v
        new = replace(self, params=params)
        for k, v in exp.items():
            if k in ("d", "N", "master_seed", "workers"):
                v = _as_int(k, v)
            setattr(new, k, v)
        return new

    def digest(self) -> str:
        """Hash of everything except the worker count and output root."""
        body = replace(self, workers=1, output="results").to_text()
        return hashlib.sha256(body.encode()).hexdigest()[:12]

    # -- helpers -----------------------------------------------------------

    def param(self, name: str, default=None):
        return self.params.get(name, default)

    def int_param(self, name: str, default=None) -> int:
        v = self.params.get(name, default)
        if v is None:
            raise ConfigError(name, "required")
        if isinstance(v, float) and v.is_integer():
            v = int(v)
        if not isinstance(v, int):
            raise ConfigError(name, f"must be an integer, got {v!r}")
        return v

    def float_param(self, name: str, default=None) -> float:
        v = self.params.get(name, default)
        if v is None:
            raise ConfigError(name, "required")
        if not isinstance(v, (int, float)):
            raise ConfigError(name, f"must be a number, got {v!r}")
        return float(v)

    def list_param(self, name: str, default=None) -> list:
        v = self.params.get(name, default)
        if v is None:
            raise ConfigError(name, "required")
        return list(v) if isinstance(v, (list, tuple)) else [v]

    def point_set(self) -> PointSet:
        if self.points is not None:
            rows = [r for r in self.points.replace(";", "\n").splitlines() if r.strip()]
            rows = [r.replace(",", " ") for r in rows]
            dim = self.d if self.d is not None else len(rows[0].split())
            try:
                return parse_pointset(f"d={dim}\n" + "\n".join(rows))
            except ValueError as exc:
                raise ConfigError("points", str(exc)) from None
        if self.set is None:
            raise ConfigError("set", "a point-set file or inline points are required")
        try:
            A = read_pointset(self.set)
        except FileNotFoundError:
            raise ConfigError("set", f"file not found: {self.set}") from None
        if self.d is not None and A.d != self.d:
            raise ConfigError("set", f"dimension {A.d} does not match d={self.d}")
        return A


def _as_int(name, v) -> int:
    try:
        f = float(v)
    except (TypeError, ValueError):
        raise ConfigError(name, f"must be an integer, got {v!r}") from None
    if not f.is_integer():
        raise ConfigError(name, f"must be an integer, got {v!r}")
    return int(f)
