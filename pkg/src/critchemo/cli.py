"""Command-line entry point: ``critchemo <subcommand>``.

Exit codes: 0 success, 1 invalid input, 2 solver did not converge,
3 a verification check failed.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .core import ParamsError, make_grid, partner_exponent, validate_params
from .dynamics import Controls, evolve, initial_state
from .experiments import (
    Base,
    InitialDataSpec,
    NonMonotoneSweep,
    RunConfig,
    diffusive_time,
    make_initial,
    sweep,
    sweep_to_csv,
)
from .stationary import (
    Divergence,
    NoConvergence,
    critical_thresholds,
    estimate_sharp_constant,
    hls_sharp_symmetric,
    hls_upper_bound,
    load_steady,
    save_steady,
    solve_steady,
)
from .verify import VerifyConfig, run_all

EXIT_OK, EXIT_INVALID, EXIT_NO_CONVERGENCE, EXIT_VERIFY = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class ParamsSection:
    d: int = 3
    m1: float = 1.2
    m2: float | None = None  # defaults to the partner exponent on the critical curve
    curve_tol: float = 1e-12


@dataclass
class GridSection:
    r_max: float = 60.0
    n: int = 2048
    stretch: float = 1.0


@dataclass
class SteadySection:
    normalization: float = 1.0
    damping: float = 0.5
    tol: float = 1e-10
    max_iter: int = 2000
    seed: int = 0


@dataclass
class DynamicsSection:
    n: int = 1024
    r_max: float = 60.0
    lam: float = 2.0
    mu: float = 0.9
    base: str = "TaperedSteady"
    taper_radius: float | None = None
    taper_width: float | None = None
    horizon_factor: float = 20.0
    samples: int = 1000
    linf_cap: float = 100.0
    dt_min: float = 1e-12
    linf_bound: float = 1.5
    safety: float = 0.45
    eps: float = 0.0


@dataclass
class SweepSection:
    mu: str = "0.8,0.85,0.9,0.95,1.05,1.1,1.2"
    gate_tol: float = 1e-3
    jobs: int = 1


@dataclass
class Config:
    params: ParamsSection = field(default_factory=ParamsSection)
    grid: GridSection = field(default_factory=GridSection)
    steady: SteadySection = field(default_factory=SteadySection)
    dynamics: DynamicsSection = field(default_factory=DynamicsSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    def hash(self) -> str:
        canon = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _coerce(raw: str, default, name: str):
    text = raw.strip()
    if default is None and text.lower() in ("", "none"):
        return None
    try:
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float) or default is None:
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {text!r}") from exc
    return text


def load_config(path: str | Path | None) -> Config:
    cfg = Config()
    if path is None:
        return cfg
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(str(exc)) from exc
    for section in parser.sections():
        if not hasattr(cfg, section):
            raise ConfigError(f"unknown section [{section}]")
        target = getattr(cfg, section)
        known = {f.name: f for f in fields(target)}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            setattr(target, key, _coerce(raw, getattr(type(target)(), key), f"{section}.{key}"))
    return cfg


def parse_mu(text: str) -> list[float]:
    """'a:b:k' for k evenly spaced values or a comma-separated list."""
    try:
        if ":" in text:
            a, b, k = text.split(":")
            return [round(float(x), 12) for x in np.linspace(float(a), float(b), int(k))]
        return sorted(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"bad mu specification {text!r}") from exc


def _params(cfg: Config):
    pc = cfg.params
    m2 = pc.m2 if pc.m2 is not None else partner_exponent(pc.d, pc.m1)
    return validate_params(pc.d, pc.m1, m2, pc.curve_tol)


def _run_config(cfg: Config) -> RunConfig:
    dc = cfg.dynamics
    return RunConfig(n=dc.n, r_max=dc.r_max, horizon_factor=dc.horizon_factor, samples=dc.samples,
                     linf_cap=dc.linf_cap, dt_min=dc.dt_min, linf_bound=dc.linf_bound,
                     gate_tol=cfg.sweep.gate_tol, safety=dc.safety)


def _spec(cfg: Config, mu: float | None = None) -> InitialDataSpec:
    dc = cfg.dynamics
    return InitialDataSpec(Base(dc.base), dc.mu if mu is None else mu, dc.taper_radius, dc.taper_width, dc.lam)


def header_lines(cfg: Config, p) -> list[str]:
    g = cfg.grid
    return [
        f"critchemo {__version__}",
        f"params d={p.d} m1={p.m1!r} m2={p.m2!r}",
        f"grid r_max={g.r_max!r} n={g.n} stretch={g.stretch!r}",
        f"config_hash {cfg.hash()}",
    ]


def _steady(cfg: Config, p):
    if getattr(cfg, "_steady_path", None):
        return load_steady(cfg._steady_path)
    g, s = cfg.grid, cfg.steady
    grid = make_grid(g.r_max, g.n, g.stretch, d=p.d)
    return solve_steady(p, grid, s.normalization, s.damping, s.tol, s.max_iter)


def cmd_validate(args) -> int:
    m2 = args.m2 if args.m2 is not None else partner_exponent(args.d, args.m1)
    p = validate_params(args.d, args.m1, m2)
    beta = p.d - 2
    out = {
        "d": p.d,
        "m1": p.m1,
        "m2": p.m2,
        "alpha_d": p.alpha_d,
        "c_d": p.c_d,
        "scaling_exponents": list(p.scaling_exponents),
        "preserved_exponents": list(p.preserved_exponents),
        "hls_upper_bound": hls_upper_bound(p.d, beta, p.m1, p.m2),
    }
    if p.symmetric:
        out["hls_sharp_symmetric"] = hls_sharp_symmetric(p.d, beta)
    for k, v in out.items():
        print(f"{k} = {v}")
    return EXIT_OK


def cmd_steady(args, cfg: Config) -> int:
    p = _params(cfg)
    state = _steady(cfg, p)
    save_steady(state, args.out, {"lines": header_lines(cfg, p)})
    print(f"converged in {state.iterations} iterations; el_residual {state.el_residual:.3e}, "
          f"pohozaev {state.pohozaev:.3e}")
    return EXIT_OK


def cmd_hls(args, cfg: Config) -> int:
    p = _params(cfg)
    g = cfg.grid
    cs = estimate_sharp_constant(p, make_grid(g.r_max, g.n, g.stretch, d=p.d), seed=cfg.steady.seed)
    th = critical_thresholds(cs, p)
    doc = {
        "_header": {"lines": header_lines(cfg, p)},
        "cstar": cs.cstar,
        "upper_bound": cs.upper_bound,
        "exact_symmetric": cs.exact_symmetric,
        "iterations": cs.iterations,
        "thresholds": {"x_star": th.x_star, "y_star": th.y_star, "A": th.A},
    }
    text = json.dumps(doc, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_evolve(args, cfg: Config) -> int:
    p = _params(cfg)
    state = _steady(cfg, p) if cfg.dynamics.base == Base.TAPERED_STEADY.value else None
    rc = _run_config(cfg)
    grid = rc.grid(p.d)
    u0, v0 = make_initial(_spec(cfg, args.mu), state, grid)
    t_end = args.t_end if args.t_end is not None else rc.horizon_factor * diffusive_time(u0, p)
    controls = Controls(linf_cap=rc.linf_cap, dt_min=rc.dt_min, sample_every=t_end / rc.samples,
                        safety=rc.safety, keep_states=False)
    trace = evolve(initial_state(u0, v0, p, eps=cfg.dynamics.eps, safety=rc.safety), t_end, controls)
    head = header_lines(cfg, p) + [f"dynamics n={rc.n} r_max={rc.r_max!r} mu={_spec(cfg, args.mu).mu!r}"]
    trace.to_csv(args.out, head)
    if args.plot_out:
        keep = np.unique(np.linspace(0, len(trace.rows) - 1, min(len(trace.rows), args.plot_rows)).astype(int))
        sub = type(trace)(rows=[trace.rows[i] for i in keep], events=trace.events)
        sub.to_csv(args.plot_out, head)
    print(f"{trace.terminal_event.value} at t={trace.t_final:.6g} after {trace.steps} steps")
    return EXIT_OK


def cmd_sweep(args, cfg: Config) -> int:
    p = _params(cfg)
    state = _steady(cfg, p)
    mus = parse_mu(args.mu if args.mu else cfg.sweep.mu)
    jobs = args.jobs or int(os.environ.get("CRITCHEMO_JOBS", 0) or cfg.sweep.jobs)
    rc = _run_config(cfg)
    head = header_lines(cfg, p) + [f"dynamics n={rc.n} r_max={rc.r_max!r} lam={cfg.dynamics.lam!r}"]
    try:
        rows = sweep(mus, state, p, rc, _spec(cfg), jobs=jobs)
    except NonMonotoneSweep as exc:
        sweep_to_csv(exc.rows, args.out, head)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    sweep_to_csv(rows, args.out, head)
    for row in rows:
        print(f"mu={row.mu:g}: {row.verdict.label.value}")
    return EXIT_OK


def cmd_verify(args, cfg: Config) -> int:
    p = _params(cfg)
    rc = _run_config(cfg)
    if args.quick:
        rc = RunConfig(**{**asdict(rc), "n": min(rc.n, 512)})
    vc = VerifyConfig(d=p.d, m1=p.m1, r_max=cfg.grid.r_max, n=cfg.grid.n,
                      normalization=cfg.steady.normalization, run=rc, lam=cfg.dynamics.lam,
                      jobs=args.jobs or int(os.environ.get("CRITCHEMO_JOBS", 0) or cfg.sweep.jobs))
    results = run_all(vc, dynamics=not args.skip_dynamics)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="critchemo", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"critchemo {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check exponents and print derived constants")
    v.add_argument("--d", type=int, required=True)
    v.add_argument("--m1", type=float, required=True)
    v.add_argument("--m2", type=float)

    def with_config(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="run configuration file")
        return sp

    s = with_config("steady", "solve for the stationary pair")
    s.add_argument("--out", required=True)

    h = with_config("hls", "estimate the sharp HLS constant and thresholds")
    h.add_argument("--out")

    e = with_config("evolve", "run one simulation")
    e.add_argument("--out", required=True)
    e.add_argument("--mu", type=float)
    e.add_argument("--t-end", type=float)
    e.add_argument("--steady", help="reuse a stationary state written by 'steady'")
    e.add_argument("--plot-out", help="downsampled trace for plotting")
    e.add_argument("--plot-rows", type=int, default=200)

    w = with_config("sweep", "classify a range of amplitude multipliers")
    w.add_argument("--out", required=True)
    w.add_argument("--mu", help="'a:b:k' or comma list; overrides [sweep] mu")
    w.add_argument("--jobs", type=int)
    w.add_argument("--steady", help="reuse a stationary state written by 'steady'")

    f = with_config("verify", "run the identity and dynamics checks")
    f.add_argument("--jobs", type=int)
    f.add_argument("--quick", action="store_true", help="coarser dynamics grid")
    f.add_argument("--skip-dynamics", action="store_true")
    return ap


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args)
        cfg = load_config(args.config)
        if getattr(args, "steady", None):
            cfg._steady_path = args.steady
        handler = {"steady": cmd_steady, "hls": cmd_hls, "evolve": cmd_evolve,
                   "sweep": cmd_sweep, "verify": cmd_verify}[args.command]
        return handler(args, cfg)
    except (ParamsError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NoConvergence, Divergence) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
