"""Run a convergence study from a scenario config and print the table.

    python3 scripts/convergence.py configs/manufactured.json --levels 4
"""

import argparse
import csv
import json
import tempfile
from pathlib import Path

from spinorlab.scenario import convergence_study, load_config


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--levels", type=int, default=3)
    ap.add_argument("--out", default=None, help="keep the CSV/JSON here (default: a temporary directory)")
    args = ap.parse_args(argv)

    config = load_config(args.config)
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(args.out or tmp)
        arts = convergence_study(config, args.levels, out=out, deterministic=True)
        kind = config.study.kind
        with open(out / f"convergence-{kind}.csv", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        summary = json.loads((out / f"convergence-{kind}.json").read_text(encoding="utf-8"))
    print(f"{kind} study, {args.levels} levels")
    print(f"{'n_r':>5} {'n_theta':>7} {'h':>10} {'error':>11} {'order':>6}")
    for r in rows:
        order = r["observed_order"] or "-"
        print(f"{r['n_r']:>5} {r['n_theta']:>7} {float(r['h']):10.4e} {float(r['error']):11.3e} "
              f"{order if order == '-' else f'{float(order):.2f}':>6}")
    print(f"fitted order {summary['fitted_order']}, status {summary['status']}")
    return arts.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
