"""Command-line client.

    sausage <subcommand> [--config FILE] [--d D] [--N N] [--law NAME]
            [--set FILE | --points "x y; ..."] [--seed S] [--workers W]
            [--server URL] [--no-write] [--<param> VALUE ...]

Any ``--key value`` pair not listed above becomes an experiment parameter
and overrides the config file.  The JSON record goes to stdout; the exit
status is 0 (ok), 1 (bias bound above the standard error) or 2 (error).
"""
from __future__ import annotations

import argparse
import json
import sys

from .config import SUBCOMMANDS, ConfigError, ExperimentConfig
from .lattice import read_pointset
from .runner import EXIT_ERROR, EXIT_OK, EXIT_WARN, execute


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sausage", description=__doc__.split("\n\n")[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--d", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--law")
    p.add_argument("--set", dest="set_file", help="point-set file")
    p.add_argument("--points", help="inline points, e.g. '0 0 0; 1 0 0'")
    p.add_argument("--seed", type=int, dest="master_seed")
    p.add_argument("--workers", type=int)
    p.add_argument("--output")
    p.add_argument("--server", help="base URL of a running service")
    p.add_argument("--no-write", action="store_true", help="skip writing results/")
    return p


def parse_extra(tokens: list[str]) -> dict:
    """``--key value`` / ``--key=value`` pairs; a bare flag means true."""
    out: dict[str, str] = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--"):
            raise ConfigError(tok, "unexpected argument")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
        elif i + 1 < len(tokens) and not tokens[i + 1].startswith("--"):
            i += 1
            val = tokens[i]
        else:
            val = "true"
        out[key.replace("-", "_")] = val
        i += 1
    return out


def make_config(args, extra: dict) -> ExperimentConfig:
    cfg = (ExperimentConfig.from_file(args.config) if args.config
           else ExperimentConfig(args.subcommand))
    over = dict(extra)
    over["subcommand"] = args.subcommand
    for name in ("d", "N", "law", "points", "master_seed", "workers", "output"):
        v = getattr(args, name)
        if v is not None:
            over[name] = v
    if args.set_file is not None:
        over["set"] = args.set_file
    return cfg.with_overrides(over)


def _remote(cfg: ExperimentConfig, url: str, write: bool) -> tuple[int, dict]:
    import httpx

    pts = cfg.points
    if pts is None and cfg.set is not None:
        A = read_pointset(cfg.set)
        pts = [[int(c) for c in p] for p in A.points]
    body = {"d": cfg.d, "N": cfg.N, "law": cfg.law, "points": pts,
            "master_seed": cfg.master_seed, "workers": cfg.workers, "output": cfg.output,
            "write": write, "params": cfg.params}
    resp = httpx.post(f"{url.rstrip('/')}/run/{cfg.subcommand}", json=body, timeout=None)
    data = resp.json()
    if resp.status_code != 200:
        return EXIT_ERROR, data.get("detail", data)
    return int(data.get("exit_code", EXIT_OK)), data


def main(argv: list[str] | None = None) -> int:
    args, rest = build_parser().parse_known_args(argv)
    try:
        cfg = make_config(args, parse_extra(rest))
    except (ConfigError, OSError) as exc:
        print(json.dumps({"error": str(exc), "kind": "config"}), file=sys.stderr)
        return EXIT_ERROR
    if args.server:
        code, body = _remote(cfg, args.server, not args.no_write)
    else:
        code, body = execute(cfg, write=not args.no_write)
    stream = sys.stderr if code == EXIT_ERROR else sys.stdout
    print(json.dumps(body, indent=2, sort_keys=True), file=stream)
    if code == EXIT_WARN:
        for w in body.get("warnings", []):
            print(f"warning: {w}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
