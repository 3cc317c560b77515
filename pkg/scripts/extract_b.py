"""Solve for the harmonic correction and extract b by both formulas.

    python3 scripts/extract_b.py --B 2 --r-max 16 32 --n 64
"""

import argparse

from spinorlab import errors, make_metric
from spinorlab.asymptotics import estimate_b, flux_nonnegativity
from spinorlab.discretization import build_grid
from spinorlab.solver import solve_harmonic_correction


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--B", type=float, default=2.0)
    ap.add_argument("--r-min", type=float, default=1.0)
    ap.add_argument("--r-max", type=float, nargs="+", default=[16.0, 32.0])
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--measure", choices=("volume", "induced"), default="volume")
    args = ap.parse_args(argv)

    spec = make_metric("Melvin", B=args.B)
    print(f"Melvin B = {args.B} (b = {spec.b})")
    print(f"{'r_max':>6} {'boundary':>10} {'volume':>10} {'min flux':>11} {'strong res':>10} iters")
    for r_max in args.r_max:
        grid = build_grid(args.r_min, r_max, args.n, args.n)
        theta, rep = solve_harmonic_correction(spec, grid)
        bnd = estimate_b(spec, theta, "boundary", measure=args.measure).value
        try:
            vol = f"{estimate_b(spec, theta, 'volume').value:10.4f}"
        except errors.NotHarmonic:
            vol = f"{'refused':>10}"
        flux = flux_nonnegativity(spec, theta).flux.min()
        print(f"{r_max:6.1f} {bnd:10.4f} {vol} {flux:11.3e} {rep.residual:10.3e} {rep.iterations}")


if __name__ == "__main__":
    main()
