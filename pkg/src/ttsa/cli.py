"""Command-line entry point: ``ttsa run | validate | compare-projection | version``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .harness.config import ConfigError, parse_config
from .harness.runner import compare_projection, execute, execute_manifest, load_instance
from .schedules import validate_gradient_variant, validate_main

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _is_manifest(text: str) -> bool:
    try:
        data = json.loads(text)
    except ValueError:
        return False
    return isinstance(data, dict) and "config_text" in data


def _cmd_run(args) -> int:
    text = Path(args.config).read_text()
    if _is_manifest(text):
        manifest = execute_manifest(args.config, args.output_dir, args.workers)
    else:
        manifest = execute(parse_config(text), args.output_dir, args.workers)
    for entry in manifest.runs:
        print(f"{entry['schedule']}: {len(entry['statuses'])} runs, {entry['n_diverged']} diverged")
    for name in manifest.artifacts:
        print(f"wrote {name}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    config = parse_config(Path(args.config).read_text())
    c = load_instance(config).constants
    for sched in config.schedules:
        print(f"== {sched.label()} (K1={sched.offset:g})")
        print(f"-- main (mu={c.mu:.6g}, L={c.L:.6g})")
        print(validate_main(sched, c.mu, c.L).format())
        print("-- gradient variant")
        print(validate_gradient_variant(sched).format())
    return EXIT_OK


def _cmd_compare(args) -> int:
    config = parse_config(Path(args.config).read_text())
    manifest = compare_projection(config, args.output_dir, args.workers)
    cmp = manifest.fits[0]["comparison"]
    for key in sorted(cmp):
        print(f"{key}: {cmp[key]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ttsa", description="Two-time-scale stochastic approximation experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a config or re-run a manifest")
    p.add_argument("config", help="config file or manifest.json")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("validate", help="print step-size validation reports")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("compare-projection", help="projected vs plain Lagrangian runs")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("version", help="print the tool version")
    p.set_defaults(func=lambda args: print(__version__) or EXIT_OK)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, RuntimeError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
