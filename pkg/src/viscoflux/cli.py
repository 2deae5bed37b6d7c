"""Command line entry point.

Subcommands:
  run     execute one config and persist a run directory with a manifest
  check   run the built-in acceptance suite and print its table
  sweep   run many configs concurrently and aggregate a sweep summary
  paths   integrate flow-map paths through an existing run directory
  blowup  breakdown report for a run directory or a pure-parameter JSON

Exit codes: 0 all enabled checks passed, 1 a check failed, 2 configuration
problem (the message names the offending key), 3 numerical integrity failure.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigurationError, DomainError, IntegrityError
from .runner import blowup_command, paths_command, run_config_file, sweep_command


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viscoflux",
        description="Radial compressible-flow laboratory: solver runs, diagnostics, sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one config file")
    p_run.add_argument("--config", required=True, help="path to a JSON run config")
    p_run.add_argument("--out", default=None, help="output directory (default: config output_dir or runs/<label>)")
    p_run.add_argument("--snapshot-every", type=int, default=None, dest="snapshot_every",
                       help="record every N-th step (overrides time.snapshot_every)")

    p_check = sub.add_parser("check", help="run the acceptance suite")
    p_check.add_argument("--out", default="check_out", help="directory for the suite's artifacts")

    p_sweep = sub.add_parser("sweep", help="run many configs concurrently")
    p_sweep.add_argument("--config", required=True, action="append",
                         help="config file or glob; repeatable")
    p_sweep.add_argument("--out", default="sweep_out", help="root directory for the sweep outputs")
    p_sweep.add_argument("--jobs", type=int, default=None,
                         help="worker processes (default: VISCOFLUX_JOBS or up to 4)")

    p_paths = sub.add_parser("paths", help="flow-map paths through an existing run")
    p_paths.add_argument("run_dir", help="run directory written by the run subcommand")
    p_paths.add_argument("--seeds", default=None,
                         help="comma-separated seed radii (default: spread over the domain)")
    p_paths.add_argument("--out", default=None, help="where to write paths.csv (default: the run directory)")

    p_blow = sub.add_parser("blowup", help="breakdown report from a run directory or parameter JSON")
    p_blow.add_argument("target", help="run directory, or JSON with law parameters plus h0/m0/area0")
    p_blow.add_argument("--out", default=None, help="output directory (default: next to the target)")

    return parser


def _parse_seeds(text: str | None):
    if text is None:
        return None
    try:
        seeds = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigurationError(f"--seeds must be comma-separated numbers, got {text!r}")
    if not seeds:
        raise ConfigurationError("--seeds must name at least one radius")
    return seeds


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return run_config_file(args.config, out_dir=args.out, snapshot_every=args.snapshot_every)
        if args.command == "check":
            from .check import run_acceptance_suite

            return run_acceptance_suite(args.out)
        if args.command == "sweep":
            return sweep_command(args.config, args.out, jobs=args.jobs)
        if args.command == "paths":
            return paths_command(args.run_dir, seeds=_parse_seeds(args.seeds), out_dir=args.out)
        if args.command == "blowup":
            return blowup_command(args.target, out_dir=args.out)
        raise ConfigurationError(f"unknown command {args.command!r}")
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return 2
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
