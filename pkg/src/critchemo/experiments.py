"""Initial data, the global-versus-blow-up classification and parameter sweeps."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .core import Params, RadialField, RadialGrid, make_grid
from .dynamics import Controls, Event, SimTrace, evolve, initial_state
from .functionals import free_energy, resample
from .potential import lp_norm
from .stationary import NotConverged, SteadyState

SWEEP_COLUMNS = ("mu", "norm_u_m1", "norm_v_m2", "F0", "F_steady", "verdict", "terminal_event", "t_final")


class Base(str, Enum):
    TAPERED_STEADY = "TaperedSteady"
    GAUSSIAN = "Gaussian"
    BALL = "BallIndicator"


class Label(str, Enum):
    GLOBAL = "Global"
    BLOWUP = "BlowUp"
    UNDECIDED = "Undecided"


class NonMonotoneSweep(AssertionError):
    def __init__(self, message: str, rows: list):
        super().__init__(message)
        self.rows = rows


@dataclass(frozen=True)
class InitialDataSpec:
    base: Base = Base.TAPERED_STEADY
    mu: float = 1.0
    taper_radius: float | None = None  # default 0.6 r_max
    taper_width: float | None = None  # default 0.05 r_max
    lam: float = 1.0  # dilation applied to the steady profile, or width for the other bases

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        for name in ("taper_radius", "taper_width"):
            val = getattr(self, name)
            if val is not None and val <= 0:
                raise ValueError(f"{name} must be positive")


def taper(grid: RadialGrid, radius: float, width: float) -> np.ndarray:
    x = np.maximum(grid.r - radius, 0.0) / width
    return np.exp(-(x**2))


def make_initial(spec: InitialDataSpec, steady: SteadyState | None, grid: RadialGrid) -> tuple[RadialField, RadialField]:
    """Initial pair on ``grid``; the steady base is dilated by ``lam``, scaled by ``mu`` and tapered."""
    if spec.base is Base.GAUSSIAN:
        prof = spec.mu * np.exp(-((grid.r / spec.lam) ** 2))
        return RadialField(grid, prof), RadialField(grid, prof.copy())
    if spec.base is Base.BALL:
        prof = spec.mu * (grid.r < spec.lam).astype(float)
        return RadialField(grid, prof), RadialField(grid, prof.copy())
    if steady is None or not steady.converged:
        raise NotConverged("tapered initial data needs a converged steady state")
    a, b = steady.params.scaling_exponents
    x = spec.lam * grid.r
    chi = taper(
        grid,
        0.6 * grid.r_max if spec.taper_radius is None else spec.taper_radius,
        0.05 * grid.r_max if spec.taper_width is None else spec.taper_width,
    )
    u = spec.mu * spec.lam**a * resample(steady.U, x, tail="power") * chi
    v = spec.mu * spec.lam**b * resample(steady.V, x, tail="power") * chi
    return RadialField(grid, u), RadialField(grid, v)


def half_mass_radius(u: RadialField) -> float:
    cum = np.concatenate(([0.0], np.cumsum(u.values * u.grid.weights)))
    if cum[-1] == 0:
        return 0.0
    return float(np.interp(0.5 * cum[-1], cum, u.grid.r_edges))


def diffusive_time(u: RadialField, p: Params) -> float:
    """r_char^2 / (m1 |u|_inf^(m1-1)) with r_char the half-mass radius."""
    peak = float(u.values.max())
    if peak == 0:
        return 0.0
    return half_mass_radius(u) ** 2 / (p.m1 * peak ** (p.m1 - 1))


@dataclass(frozen=True)
class RunConfig:
    n: int = 512
    r_max: float = 60.0
    stretch: float = 1.0
    horizon_factor: float = 20.0  # t_end = horizon_factor * diffusive time
    samples: int = 1000
    linf_cap: float = 100.0  # multiple of the initial sup norm
    dt_min: float = 1e-12
    linf_bound: float = 1.5  # Global requires max |u|_inf ratio below this
    gate_tol: float = 1e-3
    safety: float = 0.45

    def grid(self, d: int) -> RadialGrid:
        return make_grid(self.r_max, self.n, self.stretch, d=d)


@dataclass
class Verdict:
    label: Label
    terminal_event: Event | None
    max_linf_ratio: float
    m2_slope: float
    F0: float
    F_steady: float
    norms: tuple[float, float]
    steady_norms: tuple[float, float]
    t_final: float = 0.0
    reason: str = ""
    trace: SimTrace | None = field(default=None, repr=False)


def _m2_slope(trace: SimTrace, last: int = 10) -> float:
    t = trace.column("t")[-last:]
    m2 = trace.column("m2")[-last:]
    if t.size < 2:
        return 0.0
    return float(np.polyfit(t - t[0], m2, 1)[0])


def gate(norms: tuple[float, float], steady_norms: tuple[float, float], F0: float, Fs: float,
         tol: float) -> str | None:
    """'below' or 'above' when the hypotheses of the dichotomy hold, else None."""
    if not F0 < Fs - tol * abs(Fs):
        return None
    ratios = [n / s for n, s in zip(norms, steady_norms)]
    if all(q < 1 - tol for q in ratios):
        return "below"
    if all(q > 1 + tol for q in ratios):
        return "above"
    return None


def classify(spec: InitialDataSpec, steady: SteadyState, p: Params, run_cfg: RunConfig | None = None) -> Verdict:
    cfg = run_cfg or RunConfig()
    grid = cfg.grid(p.d)
    u0, v0 = make_initial(spec, steady, grid)
    norms = (lp_norm(u0, p.m1), lp_norm(v0, p.m2))
    steady_norms = (steady.norm_u_m1, steady.norm_v_m2)
    F0 = free_energy(u0, v0, p)
    Fs = steady.free_energy
    side = gate(norms, steady_norms, F0, Fs, cfg.gate_tol)
    if side is None:
        return Verdict(Label.UNDECIDED, None, 1.0, 0.0, F0, Fs, norms, steady_norms,
                       reason="hypotheses not met: mixed norm ordering, equality, or energy above threshold")
    t_end = cfg.horizon_factor * diffusive_time(u0, p)
    controls = Controls(linf_cap=cfg.linf_cap, dt_min=cfg.dt_min, sample_every=t_end / cfg.samples,
                        safety=cfg.safety, keep_states=False)
    trace = evolve(initial_state(u0, v0, p, safety=cfg.safety), t_end, controls)
    linf = trace.column("linf_u") + trace.column("linf_v")
    ratio = float(linf.max() / linf[0])
    slope = _m2_slope(trace)
    event = trace.terminal_event
    if event in (Event.DT_COLLAPSE, Event.LINF_CAP) and slope < 0:
        label = Label.BLOWUP
    elif event is Event.HORIZON and ratio <= cfg.linf_bound:
        label = Label.GLOBAL
    else:
        label = Label.UNDECIDED
    return Verdict(label, event, ratio, slope, F0, Fs, norms, steady_norms, trace.t_final,
                   reason=f"hypotheses {side} threshold", trace=trace)


def _classify_job(args) -> Verdict:
    return classify(*args)


@dataclass
class SweepRow:
    mu: float
    verdict: Verdict

    def as_tuple(self) -> tuple:
        v = self.verdict
        return (
            self.mu,
            v.norms[0],
            v.norms[1],
            v.F0,
            v.F_steady,
            v.label.value,
            v.terminal_event.value if v.terminal_event else "none",
            v.t_final,
        )


def check_monotone(rows: list[SweepRow]) -> bool:
    """No Global verdict at a multiplier above any BlowUp verdict."""
    blow = [r.mu for r in rows if r.verdict.label is Label.BLOWUP]
    glob = [r.mu for r in rows if r.verdict.label is Label.GLOBAL]
    return not blow or not glob or max(glob) < min(blow)


def sweep(mu_values, steady: SteadyState, p: Params, run_cfg: RunConfig | None = None,
          spec: InitialDataSpec | None = None, jobs: int = 1) -> list[SweepRow]:
    """Classify every multiplier; results are ordered by mu whatever the pool does."""
    mus = [float(m) for m in mu_values]
    if mus != sorted(mus):
        raise ValueError("mu values must be sorted")
    template = spec or InitialDataSpec()
    specs = [InitialDataSpec(template.base, mu, template.taper_radius, template.taper_width, template.lam)
             for mu in mus]
    jobs_args = [(s, steady, p, run_cfg) for s in specs]
    if jobs > 1 and len(mus) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            verdicts = list(pool.map(_classify_job, jobs_args))
    else:
        verdicts = [_classify_job(a) for a in jobs_args]
    rows = [SweepRow(mu, v) for mu, v in zip(mus, verdicts)]
    if not check_monotone(rows):
        raise NonMonotoneSweep("Global verdict above a BlowUp verdict", rows)
    return rows


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else str(x)
    return str(x)


def write_sweep(rows: list[SweepRow], fh, header: list[str] | None = None) -> None:
    for line in header or []:
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in rows:
        w.writerow([_fmt(x) for x in row.as_tuple()])


def sweep_to_csv(rows: list[SweepRow], path: str | Path, header: list[str] | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        write_sweep(rows, fh, header)
