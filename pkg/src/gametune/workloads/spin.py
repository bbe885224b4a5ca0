"""CPU spin of parameter-controlled length that reports progress to a file.

Usage: python -m gametune.workloads.spin --units N --progress PATH

Each unit is a fixed amount of arithmetic. Progress is rewritten atomically
(write to a sibling temp file, then rename) about a hundred times per run and
the token ``done`` is written at the end.
"""
import argparse
import os
import sys

UNIT = 20_000


def write_progress(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def spin(units: int, progress: str, scale: int = UNIT, stop_after: int | None = None) -> None:
    every = max(1, units // 100)
    write_progress(progress, "0")
    acc = 0
    last = units if stop_after is None else min(units, stop_after)
    for u in range(last):
        for i in range(scale):
            acc = (acc * 31 + i) % 1_000_003
        if (u + 1) % every == 0:
            write_progress(progress, f"{(u + 1) / units:.6f}")
    if last == units:
        write_progress(progress, "done")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--units", type=int, required=True)
    ap.add_argument("--progress", required=True)
    ap.add_argument("--scale", type=int, default=UNIT, help="arithmetic steps per unit")
    ap.add_argument("--fail-at", type=float, default=None,
                    help="exit with status 1 once this fraction is reached")
    args = ap.parse_args(argv)
    if args.units < 1:
        ap.error("--units must be positive")
    if args.fail_at is not None:
        spin(args.units, args.progress, args.scale, int(args.units * args.fail_at))
        return 1
    spin(args.units, args.progress, args.scale)
    return 0


if __name__ == "__main__":
    sys.exit(main())
