"""Command-line entry point ``hookean-mkv``.

Examples
--------
::

    hookean-mkv simulate-fp --config fp.yaml --out runs/fp
    hookean-mkv simulate-kinetic --config kin.yaml --seed 3 --threads 4
    hookean-mkv compare-limit runs/kin runs/fp --out runs/cmp
    hookean-mkv report runs --out runs

The log level comes from ``HOOKEAN_MKV_LOG`` (default ``WARNING``).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from ._accel import set_threads
from .config import SimConfig, config_from_dict, load_config
from .errors import HookeanMKVError
from .harness import SCENARIOS, RunFailed, compare_report, report, run_scenario

log = logging.getLogger("hookean_mkv")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hookean-mkv", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SCENARIOS:
        s = sub.add_parser(name, help=SCENARIOS[name].__doc__.splitlines()[0] if SCENARIOS[name].__doc__ else None)
        s.add_argument("--config", type=Path, help="YAML configuration (or a previous run's manifest.json)")
        s.add_argument("--out", type=Path, help="output directory (overrides the config)")
        s.add_argument("--seed", type=int, help="random seed (overrides the config)")
        s.add_argument("--threads", type=int, default=0, help="numba worker threads")
    c = sub.add_parser("compare-limit", help="compare spatial marginals of finished runs")
    c.add_argument("runs", nargs="+", type=Path)
    c.add_argument("--out", type=Path)
    c.add_argument("--config", type=Path, help="ignored; accepted for uniformity")
    c.add_argument("--seed", type=int, help="ignored; accepted for uniformity")
    c.add_argument("--threads", type=int, default=0)
    r = sub.add_parser("report", help="collect run summaries into one report")
    r.add_argument("runs", nargs="+", type=Path)
    r.add_argument("--out", type=Path)
    r.add_argument("--config", type=Path, help="ignored; accepted for uniformity")
    r.add_argument("--seed", type=int, help="ignored; accepted for uniformity")
    r.add_argument("--threads", type=int, default=0)
    return p


def _config(args) -> SimConfig:
    cfg = load_config(args.config) if args.config else config_from_dict({})
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, out=str(args.out))
    return cfg


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("HOOKEAN_MKV_LOG", "WARNING").upper(),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    set_threads(args.threads)
    try:
        if args.command == "compare-limit":
            rep = compare_report(args.runs, args.out)
            json.dump({"pairs": rep["pairs"], "all_passed": rep["all_passed"]}, sys.stdout, indent=2)
            print()
            return 0
        if args.command == "report":
            rep = report(args.runs, args.out)
            for run, s in rep["runs"].items():
                print(f"{'PASS' if s.get('passed', False) else 'FAIL'} {run} ({s.get('scenario', '?')})")
            return 0 if rep["all_passed"] else 1
        cfg = _config(args)
        summary = run_scenario(cfg, args.command, cfg.out)
        print(json.dumps({k: v for k, v in summary.items() if k in ("scenario", "assertions", "passed")},
                         indent=2))
        return 0
    except RunFailed as exc:
        log.error("%s", exc)
        return 1
    except (HookeanMKVError, FileNotFoundError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
