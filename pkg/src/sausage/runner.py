"""Experiment dispatch, parallel job scheduling and result persistence.

Every stochastic job draws from streams fixed by the master seed and its
position in the job list, never by which worker runs it, so records are
identical for any worker count.
"""
from __future__ import annotations

import csv
import importlib
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np
from filelock import FileLock

from . import __version__
from .config import SUBCOMMANDS, ConfigError, ExperimentConfig
from .laws import LAW_NAMES
from .rng import SeedSpec
from .stats import MCEstimate

EXIT_OK, EXIT_WARN, EXIT_ERROR = 0, 1, 2

# default n-sequence for the sausage limit experiments
N_GRID = (250, 500, 1000, 2000, 4000)


@dataclass
class ResultRecord:
    subcommand: str
    config: str
    estimates: list[dict]
    trends: list[dict] = field(default_factory=list)
    details: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    wall_clock: float = 0.0
    version: str = __version__
    path: str | None = None

    @property
    def status(self) -> str:
        return "warnings" if self.warnings else "ok"

    @property
    def exit_code(self) -> int:
        return EXIT_WARN if self.warnings else EXIT_OK

    def numeric_payload(self) -> str:
        """Canonical JSON of everything computed; excludes timing and paths."""
        return json.dumps({"estimates": self.estimates, "trends": self.trends,
                           "details": self.details}, sort_keys=True)

    def to_dict(self) -> dict:
        return {"subcommand": self.subcommand, "config": self.config,
                "estimates": self.estimates, "trends": self.trends,
                "details": self.details, "warnings": self.warnings,
                "status": self.status, "wall_clock": self.wall_clock,
                "version": self.version}

    @classmethod
    def from_dict(cls, data: dict) -> "ResultRecord":
        keys = ("subcommand", "config", "estimates", "trends", "details", "warnings",
                "wall_clock", "version")
        return cls(**{k: data[k] for k in keys if k in data})


def clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, MCEstimate):
        return clean(obj.to_dict())
    if hasattr(obj, "to_dict"):
        return clean(obj.to_dict())
    return obj


def est_row(name: str, est: MCEstimate, **extra) -> dict:
    lo, hi = est.bias_bound or (0.0, 0.0)
    return clean({"name": name, "mean": est.mean, "stderr": est.stderr, "bias_lo": lo,
                  "bias_hi": hi, "replicas": est.replicas, **extra})


# --------------------------------------------------------------------------
# scheduling


def call(job):
    """Run ``(module:function, args, kwargs)``; picklable for worker pools."""
    target, args, kwargs = job
    mod, name = target.split(":")
    return getattr(importlib.import_module(f"sausage.{mod}"), name)(*args, **kwargs)


@contextmanager
def mapper(workers: int):
    """An order-preserving map running on ``workers`` processes."""
    if workers <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield pool.map


def run_jobs(jobs, workers: int) -> list:
    with mapper(workers) as m:
        return list(m(call, jobs))


# --------------------------------------------------------------------------
# validation


def _need(cfg: ExperimentConfig, *names):
    for n in names:
        if getattr(cfg, n) is None:
            raise ConfigError(n, f"required for {cfg.subcommand}")


def _need_law(cfg):
    _need(cfg, "law")
    if cfg.law not in LAW_NAMES:
        raise ConfigError("law", f"must be one of {', '.join(LAW_NAMES)}")


def _positive(cfg, name, default=None):
    v = cfg.int_param(name, default)
    if v < 1:
        raise ConfigError(name, "must be >= 1")
    return v


def _choice(cfg, name, options, default):
    v = cfg.param(name, default)
    if v not in options:
        raise ConfigError(name, f"must be one of {', '.join(options)}")
    return v


def _check_dim(cfg, A):
    if cfg.d is None:
        cfg.d = A.d
    elif A.d != cfg.d:
        raise ConfigError("d", f"point set has dimension {A.d}, config says {cfg.d}")


def _gap(cfg):
    _need(cfg, "d", "N")
    if cfg.N < 1:
        raise ConfigError("N", "must be >= 1")
    if cfg.d <= 2 * cfg.N:
        raise ConfigError("d", f"d > 2N required (got d={cfg.d}, N={cfg.N})")


def _shell_points(d, radii):
    out = []
    for rho in radii:
        z = [0] * d
        z[0] = int(round(float(rho)))
        out.append(z)
    return out


# --------------------------------------------------------------------------
# subcommands; each returns (estimates, trends, details, jobs-runner output)


def _capacity(cfg, A, seed, workers):
    kernel = str(cfg.param("kernel", "green"))
    if kernel == "green":
        if A.d < 3:
            raise ConfigError("d", "green kernel needs d >= 3")
        method = _choice(cfg, "method", ("exact", "qp", "mc"), "exact")
    elif kernel.startswith("gamma:"):
        try:
            gamma = float(kernel.split(":", 1)[1])
        except ValueError:
            raise ConfigError("kernel", "expected gamma:<positive number>") from None
        if gamma <= 0:
            raise ConfigError("kernel", "gamma must be > 0")
        method = _choice(cfg, "method", ("qp",), "qp")
    else:
        raise ConfigError("kernel", "must be green or gamma:<value>")
    if method == "mc":
        reps = _positive(cfg, "replicas", 100)
        horizon = _positive(cfg, "horizon", 10**6)
        est = call(("capacity:cap_escape_mc", (A.d, A, reps, horizon, seed), {}))
        return [est_row("capacity", est, method="escape_mc")], [], {"estimate": est}
    if kernel == "green":
        fn = "capacity:cap_green_exact" if method == "exact" else "capacity:cap_green_qp"
        res = call((fn, (A.d, A), {}))
    else:
        res = call(("capacity:cap_gamma", (gamma, A), {}))
    row = clean({"name": "capacity", "mean": res.value, "stderr": 0.0, "bias_lo": 0.0,
                 "bias_hi": 0.0, "replicas": 0, "energy": res.energy, "error": res.error,
                 "method": res.method})
    return [row], [], {"result": res}


def _bcap(cfg, A, seed, workers):
    _need_law(cfg)
    if A.d < 5:
        raise ConfigError("d", "branching capacity needs d >= 5")
    method = _choice(cfg, "method", ("lln", "escape"), "lln")
    reps = _positive(cfg, "replicas", 20)
    if method == "lln":
        n = _positive(cfg, "n", 1000)
        est = call(("branching:bcap_lln", (A.d, cfg.law, A, n, reps, seed), {}))
    else:
        spine = _positive(cfg, "spine_len", 10**5)
        kw = {"side": _choice(cfg, "side", ("future", "past"), "future"),
              "method": _choice(cfg, "estimator", ("conditional", "direct"), "conditional"),
              "spine_in_future": bool(cfg.param("spine_in_future", False))}
        est = call(("branching:bcap_escape", (A.d, cfg.law, A, spine, reps, seed), kw))
    return [est_row("bcap", est, method=method)], [], {"estimate": est}


def _sausage(cfg, A, seed, workers):
    method = _choice(cfg, "method", ("lln", "dual", "rate", "tree-chain"), "lln")
    if method == "tree-chain":
        return _tree_chain(cfg, A, seed, workers)
    _gap(cfg)
    reps = _positive(cfg, "replicas", 20)
    if method == "dual":
        trunc = cfg.param("trunc")
        if trunc is not None and int(trunc) < 1:
            raise ConfigError("trunc", "must be >= 1")
        est = call(("minkowski:f_N_dual", (cfg.d, cfg.N, A, trunc, reps, seed), {}))
        return [est_row("f_N_dual", est, N=cfg.N)], [], {"estimate": est}
    ns = [int(v) for v in cfg.list_param("n", list(N_GRID))]
    if min(ns) < 0:
        raise ConfigError("n", "must be >= 0")
    if method == "lln":
        jobs = [("minkowski:f_N_lln", (cfg.d, cfg.N, A, n, reps, seed), {}) for n in ns]
        name = "f_N_lln"
    else:
        gamma = cfg.float_param("gamma", cfg.d - 2 * (cfg.N - 1))
        if gamma <= 2:
            raise ConfigError("gamma", "must be > 2")
        kw = {"mc_fallback": bool(cfg.param("mc_fallback", False))}
        jobs = [("minkowski:sausage_capacity_rate", (cfg.d, gamma, A, n, reps, seed), kw)
                for n in ns]
        name = "capacity_rate"
    ests = run_jobs(jobs, workers)
    rows = [est_row(name, e, n=n) for n, e in zip(ns, ests)]
    trends = [{k: r[k] for k in ("n", "mean", "stderr", "bias_lo", "bias_hi")} for r in rows]
    return rows, trends, {"estimates": ests}


def _tree_chain(cfg, A, seed, workers):
    _need_law(cfg)
    if A.d < 5:
        raise ConfigError("d", "the chain needs d >= 5")
    n = _positive(cfg, "n", 200)
    reps = _positive(cfg, "replicas", 4)
    rep = call(("minkowski:tree_sausage_chain", (A.d, cfg.law, A, n, reps, seed),
                {"subsample": cfg.float_param("subsample", 0.1)}))
    rows = [est_row(k, e) for k, e in rep.links.items()]
    return rows, [], {"chain": rep}


def _hitting(cfg, A, seed, workers):
    _need(cfg, "N")
    _check_dim(cfg, A)
    if cfg.d < 1 + 2 * cfg.N:
        raise ConfigError("d", f"d >= 1 + 2N required (got d={cfg.d}, N={cfg.N})")
    shells = [float(s) for s in cfg.list_param("shells", [20, 40, 80])]
    diam = A.diameter()
    if min(shells) < 2 * diam:
        raise ConfigError("shells", f"radii must be >= 2 diam(A) = {2 * diam:g}")
    reps = _positive(cfg, "replicas", 200)
    hf = cfg.float_param("horizon_factor", 10.0)
    with mapper(workers) as m:
        table = call(("hitting:ks_ratio_experiment", (cfg.d, cfg.N, A, shells, reps, seed),
                      {"horizon_factor": hf, "mapper": m}))
    rows = [est_row("hit", r.probability, norm_z=float(np.linalg.norm(r.z)), ratio=r.ratio,
                    censored=r.censored) for r in table.rows]
    return rows, clean(table.csv_rows()), {"table": table}


def _iequiv(cfg, A, seed, workers):
    _need_law(cfg)
    _check_dim(cfg, A)
    if cfg.d < 5:
        raise ConfigError("d", "must be >= 5")
    xs = _shell_points(cfg.d, cfg.list_param("shells", [20, 40, 80]))
    diam = A.diameter()
    for x in xs:
        if np.linalg.norm(x) < 2 * diam:
            raise ConfigError("shells", f"radii must be >= 2 diam(A) = {2 * diam:g}")
    reps = _positive(cfg, "replicas", 100)
    spine = _positive(cfg, "spine_len", 2 * 10**5)
    horizon = cfg.param("horizon")
    est = _choice(cfg, "estimator", ("conditional", "direct"), "conditional")
    with mapper(workers) as m:
        table = call(("hitting:intersection_equivalence",
                      (cfg.d, cfg.law, A, xs, spine, horizon, reps, seed),
                      {"method": est, "mapper": m}))
    rows = [est_row("tree_hit", r.probability, norm_z=float(np.linalg.norm(r.z)),
                    walk_mean=r.normalizer, ratio=r.ratio, censored=r.censored)
            for r in table.rows]
    return rows, clean(table.csv_rows()), {"table": table}


def _d4rate(cfg, A, seed, workers):
    if A.d != 4:
        raise ConfigError("d", "d4rate needs a 4-dimensional set")
    ns = [int(v) for v in cfg.list_param("ns", [1000, 10000])]
    if min(ns) < 2:
        raise ConfigError("ns", "must be >= 2")
    reps = _positive(cfg, "replicas", 4)
    sub = cfg.float_param("subsample", 0.1)
    if not 0 < sub <= 1:
        raise ConfigError("subsample", "must lie in (0, 1]")
    with mapper(workers) as m:
        out = call(("hitting:d4_capacity_rate", (A, ns, reps, seed),
                    {"subsample": sub, "rel_bias": cfg.float_param("rel_bias", 1e-2),
                     "mapper": m}))
    rows = [est_row("d4_rate", r["estimate"], n=r["n"], ratio=r["ratio"],
                    bounded=r["bounded"]) for r in out["rows"]]
    trends = [{k: r[k] for k in ("n", "mean", "stderr", "bias_lo", "ratio")} for r in rows]
    return rows, trends, {"target": out["target"]}


def _verify(cfg, A, seed, workers):
    from .acceptance import run_suite

    suite = _choice(cfg, "suite", ("fast", "full"), "fast")
    report = run_suite(suite, cfg.master_seed, workers=workers)
    rows = [clean({"name": c["id"], "passed": c["passed"], "measured": c["measured"]})
            for c in report["criteria"]]
    return rows, [{"criterion": r["name"], "passed": int(r["passed"])} for r in rows], report


_HANDLERS = {"capacity": _capacity, "bcap": _bcap, "sausage": _sausage,
             "hitting": _hitting, "iequiv": _iequiv, "d4rate": _d4rate,
             "tree-chain": _tree_chain, "verify": _verify}
_NO_SET = {"verify"}


# --------------------------------------------------------------------------
# entry points


def validate(cfg: ExperimentConfig):
    if cfg.subcommand not in SUBCOMMANDS:
        raise ConfigError("subcommand", f"must be one of {', '.join(SUBCOMMANDS)}")
    if cfg.workers < 1:
        raise ConfigError("workers", "must be >= 1")
    if cfg.subcommand in _NO_SET:
        return None
    A = cfg.point_set()
    _check_dim(cfg, A)
    if len(A) == 0:
        raise ConfigError("set", "must be nonempty")
    if cfg.subcommand == "sausage" and cfg.param("method", "lln") != "tree-chain":
        _gap(cfg)
    return A


def _bias_warnings(rows) -> list[str]:
    out = []
    for r in rows:
        se = r.get("stderr")
        if not isinstance(se, float) or not isinstance(r.get("bias_lo"), float):
            continue
        width = max(abs(r["bias_lo"]), abs(r["bias_hi"]))
        if r.get("replicas", 0) >= 2 and width > se:
            out.append(f"{r['name']}: bias bound {width:.3g} exceeds stderr {se:.3g}")
    return out


def run(cfg: ExperimentConfig, write: bool = True) -> ResultRecord:
    """Validate, dispatch, and (optionally) persist one experiment."""
    t0 = time.perf_counter()
    cfg = replace(cfg, params=dict(cfg.params))
    A = validate(cfg)
    seed = SeedSpec(cfg.master_seed, 0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rows, trends, details = _HANDLERS[cfg.subcommand](cfg, A, seed, cfg.workers)
    msgs = sorted({str(w.message) for w in caught}) + _bias_warnings(rows)
    rec = ResultRecord(cfg.subcommand, cfg.to_text(), clean(rows), clean(trends),
                       clean(details), msgs, time.perf_counter() - t0)
    if write:
        rec.path = str(write_record(rec, cfg))
    return rec


def rerun(record: ResultRecord, write: bool = False) -> ResultRecord:
    return run(ExperimentConfig.from_text(record.config), write=write)


def write_record(rec: ResultRecord, cfg: ExperimentConfig) -> Path:
    """results/<subcommand>/<timestamp>-<hash>/{record.json, trends.csv, config.echo}."""
    root = Path(cfg.output) / cfg.subcommand
    root.mkdir(parents=True, exist_ok=True)
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    with FileLock(str(root / ".lock")):
        base = root / f"{stamp}-{cfg.digest()}"
        out, k = base, 1
        while out.exists():
            out = Path(f"{base}-{k}")
            k += 1
        out.mkdir()
    (out / "record.json").write_text(json.dumps(rec.to_dict(), indent=2, sort_keys=True))
    (out / "config.echo").write_text(rec.config)
    write_trends(out / "trends.csv", rec.trends or rec.estimates)
    return out


def write_trends(path, rows: list[dict]) -> None:
    cols: list[str] = []
    for r in rows:
        for k, v in r.items():
            if k not in cols and not isinstance(v, (dict, list)):
                cols.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


def execute(cfg: ExperimentConfig, write: bool = True) -> tuple[int, dict[str, Any]]:
    """run() with errors folded into an exit code and a JSON-ready body."""
    try:
        rec = run(cfg, write=write)
    except ConfigError as exc:
        return EXIT_ERROR, {"error": str(exc), "field": exc.field, "kind": "config"}
    except (ValueError, MemoryError, OverflowError, RuntimeError) as exc:
        return EXIT_ERROR, {"error": str(exc), "kind": type(exc).__name__}
    body = rec.to_dict()
    body["path"] = rec.path
    return rec.exit_code, body
