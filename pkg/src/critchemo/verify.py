"""Identity suite behind ``critchemo verify``: one check per acceptance criterion."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma

from .core import make_grid, partner_exponent, validate_params
from .dynamics import Controls, Event, evolve, initial_state, moment_rate_check
from .experiments import InitialDataSpec, Label, RunConfig, diffusive_time, make_initial, sweep, write_sweep
from .functionals import free_energy, rescale
from .potential import lp_norm
from .stationary import (
    SteadyState,
    closed_form_steady,
    critical_thresholds,
    estimate_sharp_constant,
    solve_steady,
)


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number} {self.name}: {self.detail}"


@dataclass
class VerifyConfig:
    d: int = 3
    m1: float = 1.2
    r_max: float = 60.0
    n: int = 2048
    normalization: float = 1.0
    run: RunConfig = field(default_factory=lambda: RunConfig(n=1024))
    lam: float = 2.0
    sweep_mu: tuple[float, ...] = (0.8, 0.85, 0.9, 0.95, 1.05, 1.1, 1.2)
    asym_pair: tuple[float, float] = (1.25, 15 / 13)
    jobs: int = 1


def check_curve_algebra(d: int = 3, count: int = 20, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    hi = 2 - 2 / d
    lo = 1.0 / ((d + 2) / d - 1.0 / hi)  # partner of the upper end
    worst = 0.0
    for m1 in rng.uniform(lo, hi, count):
        p = validate_params(d, float(m1), partner_exponent(d, float(m1)))
        p1, p2 = p.preserved_exponents
        worst = max(worst, abs(p1 - p.m1), abs(p2 - p.m2))
    return CheckResult(1, "critical-curve algebra", worst <= 1e-12, f"max |p_i - m_i| = {worst:.2e}")


def check_stationary_identities(state: SteadyState) -> CheckResult:
    p = state.params
    wu, wv = state.weighted_norms
    balance = abs(wu - wv) / max(wu, wv)
    int_u = state.norm_u_m1**p.m1
    predicted = (p.m1 + p.m2 - p.m1 * p.m2) / ((p.m1 - 1) * p.m2) * int_u
    energy = abs(state.free_energy - predicted) / abs(state.free_energy)
    offs = max(abs(c) for c in state.potential_offsets) / state.energy_scale
    ok = state.pohozaev <= 1e-3 and balance <= 1e-3 and energy <= 1e-3 and offs <= 1e-2
    return CheckResult(
        2,
        "stationary identities",
        ok,
        f"pohozaev {state.pohozaev:.2e}, norm balance {balance:.2e}, energy {energy:.2e}, offsets {offs:.2e}",
    )


def aligned_closed_form(state: SteadyState) -> SteadyState:
    """Closed-form pair on the same grid with the same central value."""
    p = state.params
    probe = closed_form_steady(p, state.grid, 1.0)
    lam = (probe.amplitude / state.U.values[0]) ** (2.0 / (p.d + 2))
    return closed_form_steady(p, state.grid, lam)


def check_cross_solver(state: SteadyState) -> CheckResult:
    cf = aligned_closed_form(state)
    w = state.grid.weights
    diff = math.sqrt(np.dot((state.U.values - cf.U.values) ** 2, w) / np.dot(cf.U.values**2, w))
    return CheckResult(3, "fixed point vs closed form", diff <= 1e-2, f"relative L2 difference {diff:.2e}")


def hls_gamma_formula(d: int) -> float:
    beta = d - 2
    return (math.pi ** (beta / 2) * gamma((d - beta) / 2) / gamma(d - beta / 2)
            * (gamma(d / 2) / gamma(d)) ** (-1 + beta / d))


def check_sharp_constant(cfg: VerifyConfig) -> tuple[CheckResult, float]:
    grid = make_grid(cfg.r_max, cfg.n, d=cfg.d)
    p = validate_params(cfg.d, cfg.m1, partner_exponent(cfg.d, cfg.m1))
    cs = estimate_sharp_constant(p, grid)
    exact = hls_gamma_formula(cfg.d)
    rel = abs(cs.cstar - exact) / exact
    pa = validate_params(cfg.d, *cfg.asym_pair)
    ca = estimate_sharp_constant(pa, grid)
    ok = rel <= 1e-2 and ca.cstar <= ca.upper_bound
    return (
        CheckResult(4, "sharp HLS constant", ok,
                    f"C* {cs.cstar:.6f} vs {exact:.6f} ({rel:.2e}); asymmetric {ca.cstar:.4f} <= bound {ca.upper_bound:.4f}"),
        cs.cstar,
    )


def check_thresholds(state: SteadyState, cstar: float) -> CheckResult:
    p = state.params
    th = critical_thresholds(cstar, p)
    eu = abs(th.x_star ** (1 / p.m1) / state.norm_u_m1 - 1)
    ev = abs(th.y_star ** (1 / p.m2) / state.norm_v_m2 - 1)
    return CheckResult(5, "threshold consistency", max(eu, ev) <= 2e-2, f"norm mismatch {eu:.2e}, {ev:.2e}")


def check_dynamics(state: SteadyState, cfg: VerifyConfig) -> CheckResult:
    p = state.params
    grid = cfg.run.grid(p.d)
    u0, v0 = make_initial(InitialDataSpec(mu=0.9, lam=cfg.lam), state, grid)
    t_end = cfg.run.horizon_factor * diffusive_time(u0, p)
    trace = evolve(initial_state(u0, v0, p), t_end,
                   Controls(sample_every=t_end / cfg.run.samples, linf_cap=cfg.run.linf_cap))
    M1, M2, F = trace.column("M1"), trace.column("M2"), trace.column("F")
    drift = max(np.max(np.abs(M1 / M1[0] - 1)), np.max(np.abs(M2 / M2[0] - 1)))
    rise = float(np.max(np.diff(F))) / abs(F[0])
    gap = moment_rate_check(trace)
    ok = (drift <= 1e-10 and rise <= 1e-6 and gap <= 5e-2
          and trace.terminal_event is Event.HORIZON)
    return CheckResult(6, "conservation and dissipation", ok,
                       f"mass drift {drift:.1e}, max F rise {rise:.1e}, moment gap {gap:.2e}, "
                       f"{trace.terminal_event.value} at t={trace.t_final:.3g}")


def sweep_verdicts(rows, state: SteadyState) -> tuple[bool, str]:
    bad = []
    for row in rows:
        v = row.verdict
        expect = Label.GLOBAL if row.mu < 1 else Label.BLOWUP
        if v.label is not expect:
            bad.append(f"mu={row.mu}: {v.label.value}")
            continue
        m2 = v.trace.column("m2")
        if expect is Label.BLOWUP and not (m2.size >= 10 and np.all(np.diff(m2[-10:]) < 0)):
            bad.append(f"mu={row.mu}: m2 not decreasing at the end")
        if expect is Label.GLOBAL:
            nu, nv = v.trace.column("norm_u_m1"), v.trace.column("norm_v_m2")
            if not (np.all(nu < state.norm_u_m1) and np.all(nv < state.norm_v_m2)):
                bad.append(f"mu={row.mu}: norms reach the stationary norms")
    summary = ", ".join(f"{r.mu}:{r.verdict.label.value}" for r in rows)
    return not bad, (summary if not bad else "; ".join(bad))


def check_dichotomy(state: SteadyState, cfg: VerifyConfig) -> CheckResult:
    rows = sweep(cfg.sweep_mu, state, state.params, cfg.run, InitialDataSpec(lam=cfg.lam), jobs=cfg.jobs)
    ok, detail = sweep_verdicts(rows, state)
    return CheckResult(7, "dichotomy sweep", ok, detail)


def check_scaling(cfg: VerifyConfig) -> CheckResult:
    p = validate_params(cfg.d, cfg.m1, partner_exponent(cfg.d, cfg.m1))
    errs = {}
    for n in (cfg.n // 2, cfg.n):
        state = solve_steady(p, make_grid(cfg.r_max, n, d=cfg.d), cfg.normalization)
        U, V = state.extended()
        F = free_energy(U, V, p)
        nu, nv = lp_norm(U, p.m1), lp_norm(V, p.m2)
        worst_f = worst_n = 0.0
        for lam in (0.5, 2.0):
            u, v = rescale(U, V, lam, p)
            worst_f = max(worst_f, abs(free_energy(u, v, p) - F) / abs(F))
            worst_n = max(worst_n, abs(lp_norm(u, p.m1) / nu - 1), abs(lp_norm(v, p.m2) / nv - 1))
        errs[n] = (worst_f, worst_n)
    fine, coarse = errs[cfg.n], errs[cfg.n // 2]
    ok = fine[0] <= 1e-3 and fine[1] <= 2e-2 and fine[0] < coarse[0]
    return CheckResult(8, "scaling invariance", ok,
                       f"F drift {fine[0]:.2e} (coarser {coarse[0]:.2e}), norm drift {fine[1]:.2e}")


def check_determinism(state: SteadyState, cfg: VerifyConfig) -> CheckResult:
    small = RunConfig(n=256, samples=200)
    texts = []
    for _ in range(2):
        rows = sweep((0.9, 1.1), state, state.params, small, InitialDataSpec(lam=cfg.lam), jobs=cfg.jobs)
        buf = io.StringIO()
        write_sweep(rows, buf)
        texts.append(buf.getvalue())
    same = texts[0] == texts[1]
    return CheckResult(9, "determinism", same, "identical sweep CSVs" if same else "sweep CSVs differ")


def run_all(cfg: VerifyConfig | None = None, dynamics: bool = True, log=print) -> list[CheckResult]:
    cfg = cfg or VerifyConfig()
    p = validate_params(cfg.d, cfg.m1, partner_exponent(cfg.d, cfg.m1))
    results = []

    def emit(res: CheckResult) -> None:
        results.append(res)
        log(res.line())

    emit(check_curve_algebra(cfg.d))
    state = solve_steady(p, make_grid(cfg.r_max, cfg.n, d=cfg.d), cfg.normalization)
    emit(check_stationary_identities(state))
    emit(check_cross_solver(state))
    res, cstar = check_sharp_constant(cfg)
    emit(res)
    emit(check_thresholds(state, cstar))
    if dynamics:
        emit(check_dynamics(state, cfg))
        emit(check_dichotomy(state, cfg))
    emit(check_scaling(cfg))
    if dynamics:
        emit(check_determinism(state, cfg))
    return results
