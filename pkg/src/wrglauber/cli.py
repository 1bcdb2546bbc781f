"""Command line entry point: ``wrglauber <experiment> --config FILE --out DIR``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import EXPERIMENTS, FORMAT_VERSION, ConfigError, parse_config
from .regime import check_vlasov_conditions

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("wrglauber")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wrglauber", description=__doc__)
    parser.add_argument(
        "--version", action="version",
        version=f"wrglauber {__version__} (format {FORMAT_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", required=True, type=Path)
        p.add_argument("--seed", type=int, default=None, help="override schedule.seed")
        p.add_argument("--parallel", type=int, default=None, help="worker processes")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; those are validation errors here
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        text = args.config.read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        spec = parse_config(text)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"{args.config}: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    if spec.experiment != args.command:
        spec = replace(spec, experiment=args.command)
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2**64:
            print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
            return EXIT_VALIDATION
        spec = replace(spec, seed=args.seed)
    if args.parallel is not None and args.parallel < 1:
        print("error: --parallel must be >= 1", file=sys.stderr)
        return EXIT_VALIDATION
    if spec.experiment == "mesoscopic":
        if spec.replicas < 4:
            print("error: mesoscopic sweeps need schedule.replicas >= 4", file=sys.stderr)
            return EXIT_VALIDATION
        rep = check_vlasov_conditions(spec.potentials, spec.weight, spec.domain.dimension)
        if not rep.passed:
            log.warning("Vlasov conditions FAIL (margins %s); proceeding", rep.margins)

    from .experiments import run_experiment

    try:
        manifest = run_experiment(spec, args.out, args.parallel)
    except Exception as exc:  # noqa: BLE001
        print(f"error: {spec.experiment} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {len(manifest.files)} files to {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
