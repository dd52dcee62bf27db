"""Command line entry point: ``agestruct <command> <config.json> [options]``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import dump_schema, parse_config
from .errors import ConfigError
from .runner import ENV_OUTPUT_DIR, EXIT_CONFIG, run, summary_lines

COMMANDS = {
    "simulate": "run the model and every check listed in the scenario",
    "bounds": "a priori bounds only",
    "spectral": "characteristic roots of the bounding systems",
    "compare": "sandwich check (ordered pairs for the general model)",
    "invariance": "sub-region invariance check",
    "probe": "sample the monotonicity hypotheses",
    "convergence": "grid refinement study",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="agestruct", description="Age-structured population models: simulation and verification.")
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", type=Path, help="scenario JSON file")
    common.add_argument("--output-dir", help=f"artifact directory (default: scenario value, ${ENV_OUTPUT_DIR}, ./agestruct-out)")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--quiet", action="store_true", help="suppress the summary")
    for name, text in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=text, description=text)
        if name == "convergence":
            p.add_argument("--levels", type=int, default=None, help="number of refinement levels (>= 2)")
    sch = sub.add_parser("schema", help="print the scenario JSON schema")
    sch.add_argument("--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        sys.stdout.write(dump_schema())
        return 0
    try:
        text = args.config.read_bytes()
        sc = parse_config(text)
        if args.seed is not None:
            sc.seed = args.seed
            sc.config["seed"] = args.seed
        levels = getattr(args, "levels", None)
        if levels is not None and levels < 2:
            raise ConfigError("levels must be at least 2", "/options/levels")
        res = run(sc, args.command, output_dir=args.output_dir, levels=levels)
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not args.quiet:
        print("\n".join(summary_lines(res)))
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
