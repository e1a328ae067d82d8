"""Command line entry point: `plot adaptation|training|rate|tables`."""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from gsac_plots.figures import (
    CurveSpec,
    plot_adaptation,
    plot_estimation_rate,
    plot_tables,
    plot_training,
)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plot",
                                     description="Render figures from run CSVs")
    sub = parser.add_subparsers(dest="figure", required=True)
    for name, helptext in (
        ("adaptation", "few-shot adaptation curves, one panel per grid size"),
        ("training", "meta-training curves, one panel per grid size"),
        ("rate", "estimation error vs sample size on log-log axes"),
        ("tables", "raw vs compact policy feature counts per agent"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--csv", nargs="+", required=True, help="input CSV file(s)")
        p.add_argument("--out", required=True, help="output image path")
        p.add_argument("--smoothing", type=int, default=1,
                       help="moving-average window over episodes (curves only)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    spec = CurveSpec(csv_paths=tuple(args.csv), out_path=args.out,
                     smoothing=args.smoothing)
    try:
        if args.figure == "adaptation":
            out = plot_adaptation(spec)
        elif args.figure == "training":
            out = plot_training(spec)
        elif args.figure == "rate":
            out, slope = plot_estimation_rate(spec)
            if slope is not None:
                print(f"fitted slope: {slope:.4f}")
        else:
            out = plot_tables(spec)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
