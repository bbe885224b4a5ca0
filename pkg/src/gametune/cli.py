"""Command-line entry point: ``gametune {run,compare,ablate} CONFIG``.

Outputs (in the output directory):
  summary.json   aggregate view, rebuilt from the trace
  trace.jsonl    one JSON record per line; the source of truth
  metrics.csv    fixed header, one row per result plus per-label means

Exit codes: 0 success, 2 configuration error, 3 runner error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import BASELINES, CONFIG_VERSION, load_config
from .errors import ConfigError, GameFailed, InvalidArgument
from .experiments import (METRICS_HEADER, ablate_pipeline, compare_pipeline,
                          metrics_from_trace, run_pipeline, summary_from_trace)

OUT_ENV = "GAMETUNE_OUT_DIR"

EXIT_OK, EXIT_CONFIG, EXIT_RUNNER = 0, 2, 3

log = logging.getLogger("gametune")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gametune", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="experiment config (YAML)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--parallelism", type=int, default=1,
                       help="concurrent games (outputs do not depend on it)")
        p.add_argument("--out", default=None,
                       help=f"output directory (else ${OUT_ENV}, else the config's output_dir)")
        p.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("run", help="run the tournament"))
    p = sub.add_parser("compare", help="tournament against the baselines")
    common(p)
    p.add_argument("--methods", nargs="*", default=None)
    p.add_argument("--baseline", choices=BASELINES, default=None,
                   help="outer tuner for the integrated method")
    p.add_argument("--subspaces", type=int, default=None)
    p.add_argument("--outer-budget", type=int, default=None,
                   help="subspace evaluations the outer tuner may request")
    p = sub.add_parser("ablate", help="tournament structure ablations")
    common(p)
    p.add_argument("--variants", nargs="*", default=None,
                   help="variant names; combine with '+', e.g. no-swiss+no-barrage")
    return ap


def output_dir(flag: str | None, configured: str) -> Path:
    if flag:
        return Path(flag)
    env = os.environ.get(OUT_ENV)
    return Path(env) if env else Path(configured)


def write_outputs(out: Path, command: str, records: list[dict]) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trace.jsonl", "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    rows = metrics_from_trace(records)
    with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=METRICS_HEADER, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if row[k] is None else row[k]) for k in METRICS_HEADER})
    summary = summary_from_trace(records, command)
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def read_trace(path: str | os.PathLike) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        exp = load_config(args.config)
        if args.seed is not None:
            exp.seed = args.seed
        if args.parallelism < 1:
            raise ConfigError("--parallelism", "must be at least 1")
        if args.command == "compare":
            if args.baseline is not None:
                exp.baseline = args.baseline
            if args.subspaces is not None:
                if args.subspaces < 2:
                    raise ConfigError("--subspaces", "must be at least 2")
                exp.subspaces = args.subspaces
            if args.outer_budget is not None:
                if args.outer_budget < 1:
                    raise ConfigError("--outer-budget", "must be at least 1")
                exp.outer_budget = args.outer_budget
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = output_dir(args.out, exp.output_dir)
    records: list[dict] = [{"type": "header", "command": args.command, "seed": exp.seed,
                            "config_version": CONFIG_VERSION, "config": exp.source}]
    if args.command == "compare":
        records[0]["baseline"] = {"kind": exp.baseline, "subspaces": exp.subspaces,
                                  "outer_budget": exp.outer_budget}
    code = EXIT_OK
    try:
        if args.command == "run":
            run_pipeline(exp, args.parallelism, records=records)
        elif args.command == "compare":
            compare_pipeline(exp, args.methods, args.parallelism, records=records)
        else:
            ablate_pipeline(exp, args.variants, args.parallelism, records=records)
    except (ConfigError, InvalidArgument) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GameFailed, OSError) as exc:
        print(f"runner error: {exc}", file=sys.stderr)
        records.append({"type": "error", "message": str(exc)})
        code = EXIT_RUNNER

    summary = write_outputs(out, args.command, records)
    if code == EXIT_OK:
        print(json.dumps({k: summary[k] for k in ("command", "seed") if k in summary}
                         | {"out": str(out)}))
    return code


if __name__ == "__main__":
    sys.exit(main())
