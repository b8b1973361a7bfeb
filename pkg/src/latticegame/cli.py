"""Command line entry point.

Exit codes: 0 success, 2 config error, 3 invariant violation, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, InvariantViolation
from .harness import KINDS, load_config, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latticegame",
        description="Simulator and experiment harness for memory-strategy "
                    "spin games on long-range random lattice graphs.")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", required=True, help="path to the config document")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory (default: ./out)")
        p.add_argument("--replicas", type=int, default=None,
                       help="override the config replica count")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if cfg.kind != args.kind:
            raise ConfigError(
                f"config kind {cfg.kind!r} does not match subcommand {args.kind!r}")
        if args.seed is not None:
            cfg.seed = args.seed
        if args.replicas is not None:
            if args.replicas < 1:
                raise ConfigError("field 'replicas': must be at least 1")
            cfg.replicas = args.replicas
        if args.out is not None:
            cfg.out_dir = args.out
        cfg.quiet = args.quiet
        return run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
