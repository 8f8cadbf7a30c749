"""Command line: ``plots decay <csv...> --out fig.svg [--loglog]`` and
``plots liminf <csv...> --out fig.svg``."""

from __future__ import annotations

import argparse
import sys

from .frames import TraceFormatError
from .render import render_decay, render_liminf


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plots", description="Render figures from filterlab trace CSVs")
    sub = parser.add_subparsers(dest="command", required=True)

    decay = sub.add_parser("decay", help="distance-decay curves, seeds overlaid")
    decay.add_argument("traces", nargs="+", help="trace_<seed>.csv files")
    decay.add_argument("--out", required=True, help="output .svg or .pdf")
    decay.add_argument("--loglog", action="store_true",
                       help="log-log axes with the fitted slope annotated")
    decay.add_argument("--metric", choices=("bl", "tv"), default=None)

    liminf = sub.add_parser("liminf", help="n * cosine lower bound vs its limit")
    liminf.add_argument("traces", nargs="+", help="static-Gaussian trace CSVs")
    liminf.add_argument("--out", required=True, help="output .svg or .pdf")
    liminf.add_argument("--alpha", type=float, default=None)
    liminf.add_argument("--beta", type=float, default=None)
    liminf.add_argument("--sigma2", type=float, default=None)
    liminf.add_argument("--x0", type=float, default=None)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "decay":
            out = render_decay(args.traces, args.out,
                               scale="loglog" if args.loglog else "linear",
                               metric=args.metric)
        else:
            out = render_liminf(args.traces, args.out, alpha=args.alpha,
                                beta=args.beta, sigma2=args.sigma2, x0=args.x0)
        print(f"wrote {out}")
        return 0
    except (TraceFormatError, ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
