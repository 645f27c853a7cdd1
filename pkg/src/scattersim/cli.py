"""Command line entry point: ``scattersim {profile,covert,exploit,predict}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .harness import KINDS, TABLE_CELLS, ExperimentSpec, SpecError, load_spec, run

DEFAULTS = {
    "profile": dict(cells=TABLE_CELLS),
    "covert": dict(geometries=((8, 11),), f=(0.05,), s=(64,)),
    "exploit": dict(cells=((8, 11, 8000),), t=(275,)),
    "predict": dict(cells=((8, 11, 8000),), t=(275,)),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scattersim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--spec", help="TOML experiment file")
        p.add_argument("--trials", type=int, help="trials per cell (default: desk scale)")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--out", help="report path (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--threads", type=int, help="worker processes, 0 = one per CPU")
        p.add_argument("--paper-scale", action="store_true",
                       help="reference trial counts instead of desk scale")
        p.add_argument("--dump-trials", help="write per-trial records as JSON lines")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.spec:
            spec = load_spec(args.spec)
            if spec.kind != args.command:
                raise SpecError(f"{args.spec}: kind {spec.kind!r} does not match "
                                f"subcommand {args.command!r}")
        else:
            spec = ExperimentSpec(kind=args.command, **DEFAULTS[args.command])
        overrides = {k: v for k, v in dict(trials=args.trials, master_seed=args.seed,
                                           out=args.out, format=args.format,
                                           threads=args.threads,
                                           dump_trials=args.dump_trials).items()
                     if v is not None}
        if args.paper_scale:
            overrides["paper_scale"] = True
        spec = replace(spec, **overrides)
    except SpecError as exc:
        print(f"scattersim: {exc}", file=sys.stderr)
        return 2
    try:
        stats = run(spec)
    except OSError as exc:
        print(f"scattersim: {exc}", file=sys.stderr)
        return 1
    return 0 if stats.ok else 1


if __name__ == "__main__":
    sys.exit(main())
