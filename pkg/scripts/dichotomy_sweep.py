"""Reference dichotomy sweep: one CSV row per amplitude multiplier.

    python scripts/dichotomy_sweep.py --config scripts/reference.cfg --out sweep.csv [--jobs 4]

Thin wrapper over ``critchemo sweep`` that also prints the verdict evidence.
"""
import argparse

from critchemo import cli
from critchemo.experiments import sweep, sweep_to_csv


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=None)
    ap.add_argument("--out", default="sweep.csv")
    ap.add_argument("--mu", default=None, help="'a:b:k' or comma list")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args(argv)
    cfg = cli.load_config(args.config)
    p = cli._params(cfg)
    steady = cli._steady(cfg, p)
    rc = cli._run_config(cfg)
    mus = cli.parse_mu(args.mu or cfg.sweep.mu)
    rows = sweep(mus, steady, p, rc, cli._spec(cfg), jobs=args.jobs)
    sweep_to_csv(rows, args.out, cli.header_lines(cfg, p))
    print(f"{'mu':>6} {'verdict':>10} {'event':>15} {'t_final':>9} {'max Linf':>9} {'m2 slope':>10}")
    for r in rows:
        v = r.verdict
        event = v.terminal_event.value if v.terminal_event else "-"
        print(f"{r.mu:6.3f} {v.label.value:>10} {event:>15} {v.t_final:9.3f} {v.max_linf_ratio:9.3g} {v.m2_slope:10.3g}")


if __name__ == "__main__":
    main()
