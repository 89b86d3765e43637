"""Command-line front end: ``pollenqpi <command> [options]``.

Exit status is 0 on success, 1 when any file in a batch failed, 2 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import METHODS, ConfigError, load_config

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2


def _global_flags(parser, suppress: bool):
    # SUPPRESS keeps a flag given before the command from being reset by the subparser
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", metavar="PATH", default=d, help="INI-style pipeline configuration")
    parser.add_argument("--seed", type=int, metavar="N", default=d, help="global random seed")
    parser.add_argument("--out", metavar="DIR", default=d, help="output directory")
    parser.add_argument("--workers", type=int, metavar="N", default=d, help="parallel worker processes")
    parser.add_argument("--threshold", type=float, metavar="RADIANS", default=d,
                        help="viability threshold on mean phase")
    parser.add_argument("--method", choices=METHODS, default=d, help="reconstruction method")
    parser.add_argument("-v", "--verbose", action="count", default=d, help="more logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pollenqpi",
                                     description="Off-axis hologram reconstruction and pollen phase analysis.")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    sub.add_parser("simulate", parents=[common], help="render a synthetic grain population")
    p = sub.add_parser("reconstruct", parents=[common], help="holograms -> wrapped phase maps")
    p.add_argument("inputs", nargs="*", help="hologram files or directories (default: OUT/holograms)")
    p = sub.add_parser("unwrap", parents=[common], help="wrapped -> unwrapped phase maps")
    p.add_argument("inputs", nargs="*", help="phase files or directories (default: OUT/recon)")
    p = sub.add_parser("analyze", parents=[common], help="features, statistics, t-test, histograms")
    p.add_argument("inputs", nargs="*", help="phase files or directories (default: OUT/recon)")
    p.add_argument("--manifest", metavar="CSV", help="truth manifest for grouping and accuracy")
    p.add_argument("--bin-width", type=float, metavar="RADIANS", help="histogram bin width")
    sub.add_parser("pipeline", parents=[common], help="run the configured stages end to end")
    sub.add_parser("bench", parents=[common], help="time each stage and each reconstruction")
    return parser


def _overrides(args) -> dict:
    out = {
        "seed": args.seed,
        "out": Path(args.out) if args.out else None,
        "workers": args.workers,
        "threshold": args.threshold,
        "method": args.method,
    }
    if getattr(args, "bin_width", None) is not None:
        out["bin_width"] = args.bin_width
    return out


def _report(results) -> int:
    failed = False
    for r in results:
        for msg in r.messages():
            print(msg, file=sys.stderr)
        failed |= not r.ok
    return EXIT_PARTIAL if failed else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose or 0, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
    except ConfigError as exc:
        print(f"pollenqpi: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.command == "simulate":
            results = [pipeline.simulate(cfg)]
        elif args.command == "reconstruct":
            results = [pipeline.reconstruct(cfg, args.inputs or None)]
        elif args.command == "unwrap":
            results = [pipeline.unwrap(cfg, args.inputs or None)]
        elif args.command == "analyze":
            res = pipeline.analyze(cfg, args.inputs or None, args.manifest)
            results = [res]
        elif args.command == "pipeline":
            results = pipeline.run_pipeline(cfg)
            print(Path(cfg.out) / pipeline.SUMMARY)
        else:
            print(pipeline.run_bench(cfg))
            results = []
    except (OSError, ValueError) as exc:
        print(f"pollenqpi {args.command}: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    return _report(results)


if __name__ == "__main__":
    sys.exit(main())
