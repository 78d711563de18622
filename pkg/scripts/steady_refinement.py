"""Stationary residuals under grid refinement, symmetric and asymmetric exponents.

    python scripts/steady_refinement.py [--out refinement.csv]
"""
import argparse
import csv
import sys

from critchemo.core import make_grid, partner_exponent, validate_params
from critchemo.stationary import solve_steady


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=None)
    ap.add_argument("--r-max", type=float, default=60.0)
    args = ap.parse_args(argv)
    cols = ("m1", "m2", "n", "iterations", "el_residual", "pohozaev", "free_energy", "norm_u_m1", "tail_mass_u")
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(cols)
    for m1 in (1.2, 1.25):
        p = validate_params(3, m1, partner_exponent(3, m1))
        for n in (512, 1024, 2048, 4096):
            s = solve_steady(p, make_grid(args.r_max, n))
            w.writerow([p.m1, p.m2, n, s.iterations, s.el_residual, s.pohozaev, s.free_energy,
                        s.norm_u_m1, s.tail_masses[0]])
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
