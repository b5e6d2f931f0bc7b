"""Command-line front end.

Subcommands map one-to-one onto the experiments; `report` re-renders the
figures from an existing campaign report. Exit codes: 0 success, 1 runtime
error, 2 config error, 3 budget exhausted. PSYPROBE_LOG sets the log level.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .campaign import (
    EXPERIMENT_KINDS,
    config_from_dict,
    load_config,
    render_report,
    run,
)
from .errors import BudgetExhaustedError, ConfigError, PsyprobeError

log = logging.getLogger("psyprobe")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_BUDGET = 3


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="campaign config JSON")
    parser.add_argument("--seed", type=int, help="override config seed")
    parser.add_argument("--jobs", type=int, help="worker pool size")
    parser.add_argument("--out", help="override output directory")
    parser.add_argument("--budget", type=int, help="override oracle query budget")
    parser.add_argument("--oracle-endpoint", help="override remote oracle endpoint")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="psyprobe",
        description="Black-box probing of image classifiers and decoy-insertion fooling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        _add_common_flags(p)
    rep = sub.add_parser("report", help="re-render figures from a campaign report")
    rep.add_argument("report", help="path to an attack campaign report JSON")
    rep.add_argument("--out", required=True, help="output directory")
    return parser


def _apply_overrides(raw: dict, args: argparse.Namespace) -> dict:
    raw = dict(raw)
    raw.setdefault("io", {})
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.jobs is not None:
        raw["jobs"] = args.jobs
    if args.budget is not None:
        raw["budget"] = args.budget
    if args.out:
        raw["io"] = dict(raw["io"], out_dir=args.out)
    if args.oracle_endpoint:
        oracle = dict(raw.get("oracle") or {})
        params = dict(oracle.get("params") or {})
        params["endpoint"] = args.oracle_endpoint
        oracle["params"] = params
        raw["oracle"] = oracle
    return raw


def _run_experiment(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    raw = cfg.to_dict()
    declared = (raw.get("experiment") or {}).get("kind")
    if declared and declared != args.command:
        raise ConfigError(
            [f"config declares experiment {declared!r} but subcommand is {args.command!r}"]
        )
    raw["experiment"] = dict(raw["experiment"], kind=args.command)
    raw = _apply_overrides(raw, args)
    cfg = config_from_dict(raw)
    outcome = run(cfg)
    for path in outcome.outputs:
        print(path)
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("PSYPROBE_LOG", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            for path in render_report(args.report, args.out):
                print(path)
            return EXIT_OK
        return _run_experiment(args)
    except ConfigError as exc:
        for violation in exc.violations:
            print(f"config error: {violation}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExhaustedError as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except PsyprobeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
