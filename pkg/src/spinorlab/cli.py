"""Command line front end: ``spinorlab run`` and ``spinorlab study``."""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError
from .scenario import convergence_study, load_config, run_scenario


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spinorlab", description="Harmonic spinor experiments on Melvin-type metrics.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute the runs listed in a scenario config")
    run.add_argument("config")
    run.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    run.add_argument("--deterministic", action="store_true", help="omit wall times from reports")
    study = sub.add_parser("study", help="convergence study over refinement levels")
    study.add_argument("config")
    study.add_argument("--levels", type=int, required=True)
    study.add_argument("--out", default=None)
    study.add_argument("--deterministic", action="store_true")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = load_config(args.config)
        det = True if args.deterministic else None
        if args.command == "run":
            arts = run_scenario(config, out=args.out, deterministic=det)
        else:
            arts = convergence_study(config, args.levels, out=args.out, deterministic=det)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for r in arts.runs:
        line = f"{r['status']:5s} {r['name']}"
        if "error" in r:
            line += f"  ({r['error']})"
        print(line)
    print(f"manifest: {arts.manifest}")
    return arts.exit_code


if __name__ == "__main__":
    sys.exit(main())
