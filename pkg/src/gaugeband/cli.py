"""Command line entry point: run one task from a JSON config."""

from __future__ import annotations

import argparse
import json
import sys

from .harness import TASKS, ConfigError, load_config, run_experiment, write_report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaugeband",
        description="Band structure and tunneling diagnostics for periodic "
                    "two-level models.")
    parser.add_argument("task", choices=TASKS, help="experiment to run")
    parser.add_argument("config", help="path to a JSON model config")
    parser.add_argument("--out", help="write the JSON report here (atomic); "
                                      "otherwise print to stdout")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        report = run_experiment(args.task, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    if args.out:
        write_report(report, args.out)
    else:
        json.dump(report, sys.stdout, indent=2, sort_keys=True)
        print()
    return 0 if report["ok"] else 1


if __name__ == "__main__":
    sys.exit(main())
