"""Explicit finite-volume time stepping with conservation and blow-up monitoring.

Each species is advanced by

    u_i <- u_i - dt / w_i (a_{i+1} J_{i+1} - a_i J_i),
    J_k = u_face xi_k,   xi_k = -(mu_k - mu_{k-1}) / (r_k - r_{k-1}) + c'(e_k),

with mu = m/(m-1) u^(m-1) the chemical potential, a_k the area of edge k
and u_face the minmod-reconstructed value upwind of xi_k. c'(e_k) comes
from Gauss's law for the partner density. Diffusion and drift share one
velocity, so the discrete free energy dissipates. Fluxes vanish at the
origin and at the wall, so mass telescopes exactly. The time step is
bounded cell by cell so that no cell can lose more than a fraction
``safety`` of its content in one step, which makes the update positive.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
from numba import njit

from .core import Params, RadialField, RadialGrid, unit_ball_volume
from .functionals import NonFinite, moment_rate_terms, power_integral
from .potential import integrate, lp_norm, newtonian_potential, regularized_matrix, regularized_potential

TRACE_COLUMNS = ("t", "M1", "M2", "norm_u_m1", "norm_v_m2", "linf_u", "linf_v", "F", "m2", "dt")


class Event(str, Enum):
    DT_COLLAPSE = "DtCollapse"
    LINF_CAP = "LinfCap"
    HORIZON = "HorizonReached"
    ENERGY_VIOLATION = "EnergyViolation"


class TooFewSamples(ValueError):
    pass


class PositivityLost(AssertionError):
    pass


class StepBudgetExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class SimState:
    t: float
    u: RadialField
    v: RadialField
    dt: float
    params: Params
    eps: float = 0.0
    step_count: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def grid(self) -> RadialGrid:
        return self.u.grid


@dataclass(frozen=True)
class Controls:
    """Run controls; the caps are relative to the initial state."""

    linf_cap: float = 1e6  # multiple of the initial |u|_inf + |v|_inf
    dt_min: float = 1e-12  # multiple of the initial stable step
    sample_every: float = 1.0
    safety: float = 0.45
    energy_tol: float = 1e-6  # allowed rise of F between samples, relative to |F(0)|
    keep_states: bool = True
    max_steps: int = 200_000_000


@dataclass
class SimTrace:
    rows: list[tuple[float, ...]] = field(default_factory=list)
    events: list[tuple[Event, float]] = field(default_factory=list)
    states: list[SimState] = field(default_factory=list)
    grid_too_small: bool = False
    steps: int = 0

    def column(self, name: str) -> np.ndarray:
        return np.array([row[TRACE_COLUMNS.index(name)] for row in self.rows])

    @property
    def terminal_event(self) -> Event | None:
        for tag, _ in reversed(self.events):
            if tag is not Event.ENERGY_VIOLATION:
                return tag
        return None

    @property
    def t_final(self) -> float:
        return self.rows[-1][0] if self.rows else 0.0

    def to_csv(self, path: str | Path, header: list[str] | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for line in header or []:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for row in self.rows:
                w.writerow([repr(float(x)) for x in row])
            for tag, t in self.events:
                fh.write(f"# event,{tag.value},{t!r}\n")


# ---------------------------------------------------------------- kernel


@njit(cache=True)
def _edge_gradients(u, v, mats, eps_mode, r, edges, w, surface, d, gu, gv):
    """Potential gradients at interior edges: gu drives u (from v), gv drives v."""
    n = u.size
    if eps_mode:
        cu = mats @ v
        cv = mats @ u
        for k in range(1, n):
            h = r[k] - r[k - 1]
            gu[k] = (cu[k] - cu[k - 1]) / h
            gv[k] = (cv[k] - cv[k - 1]) / h
    else:
        qv = 0.0
        qu = 0.0
        for k in range(1, n):
            qv += v[k - 1] * w[k - 1]
            qu += u[k - 1] * w[k - 1]
            a = surface * edges[k] ** (d - 1)
            gu[k] = -qv / a
            gv[k] = -qu / a


@njit(cache=True)
def _velocities(f, m, g, r, xi):
    """Edge velocities -d/dr(m/(m-1) f^(m-1)) + c'(e) at interior edges."""
    n = f.size
    k_m = m / (m - 1.0)
    for k in range(1, n):
        lo = f[k - 1]
        hi = f[k]
        if lo < 1e-300 and hi < 1e-300:
            xi[k] = 0.0
            continue
        xi[k] = -k_m * (hi ** (m - 1.0) - lo ** (m - 1.0)) / (r[k] - r[k - 1]) + g[k]


@njit(cache=True)
def _minmod(a, b):
    if a * b <= 0.0:
        return 0.0
    return a if abs(a) < abs(b) else b


@njit(cache=True)
def _faces(f, r, left, right):
    """Minmod-limited linear reconstruction: values at each cell's inner and outer edge.

    Zero slope in the first cell (even symmetry) and the last cell (wall).
    Face values lie between neighbouring cell values, so they are nonnegative.
    """
    n = f.size
    left[0] = f[0]
    right[0] = f[0]
    left[n - 1] = f[n - 1]
    right[n - 1] = f[n - 1]
    for i in range(1, n - 1):
        s = _minmod((f[i] - f[i - 1]) / (r[i] - r[i - 1]), (f[i + 1] - f[i]) / (r[i + 1] - r[i]))
        half = 0.5 * (r[i + 1] - r[i - 1]) * 0.5
        left[i] = f[i] - s * half
        right[i] = f[i] + s * half


@njit(cache=True)
def _outflow_rate(f, xi, left, right, area, w):
    """max_i (outflow of cell i per unit time) / (content of cell i)."""
    n = f.size
    worst = 0.0
    for i in range(n):
        if f[i] <= 0.0:
            continue
        out = 0.0
        if i > 0 and xi[i] < 0.0:
            out -= area[i] * xi[i] * left[i]
        if i < n - 1 and xi[i + 1] > 0.0:
            out += area[i + 1] * xi[i + 1] * right[i]
        worst = max(worst, out / (w[i] * f[i]))
    return worst


@njit(cache=True)
def _stable_dt(u, v, m1, m2, xu, xv, lu, ru, lv, rv, r, area, w, safety):
    """Largest dt keeping every cell's outflow below ``safety`` of its content.

    Also respects the explicit diffusive limit h^2 / (2 d D_max).
    """
    n = u.size
    worst = max(_outflow_rate(u, xu, lu, ru, area, w), _outflow_rate(v, xv, lv, rv, area, w))
    dmax = 0.0
    for i in range(n):
        if u[i] > 0.0:
            dmax = max(dmax, m1 * u[i] ** (m1 - 1.0))
        if v[i] > 0.0:
            dmax = max(dmax, m2 * v[i] ** (m2 - 1.0))
    for i in range(n):
        if i == 0:
            h = r[1] - r[0]
        elif i == n - 1:
            h = r[i] - r[i - 1]
        else:
            h = min(r[i] - r[i - 1], r[i + 1] - r[i])
        worst = max(worst, (area[i] + area[i + 1]) * dmax / (h * w[i]))
    if worst == 0.0:
        return np.inf
    return safety / worst


@njit(cache=True)
def _update(f, xi, left, right, area, w, dt, flux):
    n = f.size
    for k in range(1, n):
        up = right[k - 1] if xi[k] > 0.0 else left[k]
        flux[k] = area[k] * up * xi[k]
    flux[0] = 0.0
    flux[n] = 0.0
    for i in range(n):
        f[i] -= dt * (flux[i + 1] - flux[i]) / w[i]


@njit(cache=True)
def _advance(u, v, m1, m2, mats, eps_mode, r, edges, area, w, surface, d, t, t_stop,
             safety, dt_floor, linf_cap, max_steps):
    """Step in place until t_stop or an event.

    Status: 0 reached t_stop, 1 L-inf cap, 2 dt collapse, 3 non-finite,
    4 negative value, 5 step budget exhausted.
    """
    n = u.size
    gu = np.zeros(n + 1)
    gv = np.zeros(n + 1)
    xu = np.zeros(n + 1)
    xv = np.zeros(n + 1)
    lu, ru, lv, rv = np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n)
    flux = np.zeros(n + 1)
    dt = 0.0
    steps = 0
    while t < t_stop:
        if steps >= max_steps:
            return t, dt, steps, 5
        _edge_gradients(u, v, mats, eps_mode, r, edges, w, surface, d, gu, gv)
        _velocities(u, m1, gu, r, xu)
        _velocities(v, m2, gv, r, xv)
        _faces(u, r, lu, ru)
        _faces(v, r, lv, rv)
        dt = _stable_dt(u, v, m1, m2, xu, xv, lu, ru, lv, rv, r, area, w, safety)
        if dt < dt_floor:
            return t, dt, steps, 2
        remaining = t_stop - t
        if dt >= remaining:
            dt = remaining
        elif dt > 0.5 * remaining:
            dt = 0.5 * remaining
        _update(u, xu, lu, ru, area, w, dt, flux)
        _update(v, xv, lv, rv, area, w, dt, flux)
        steps += 1
        t = t_stop if dt == remaining else t + dt
        umax = 0.0
        vmax = 0.0
        for i in range(n):
            if not (np.isfinite(u[i]) and np.isfinite(v[i])):
                return t, dt, steps, 3
            if u[i] < 0.0 or v[i] < 0.0:
                return t, dt, steps, 4
            umax = max(umax, u[i])
            vmax = max(vmax, v[i])
        if umax + vmax > linf_cap:
            return t, dt, steps, 1
    return t, dt, steps, 0


# ---------------------------------------------------------------- driver


@dataclass(frozen=True)
class _Geometry:
    r: np.ndarray
    edges: np.ndarray
    area: np.ndarray
    w: np.ndarray
    surface: float
    d: int
    mats: np.ndarray
    eps_mode: bool


def _geometry(grid: RadialGrid, eps: float) -> _Geometry:
    surface = grid.d * unit_ball_volume(grid.d)
    if eps > 0:
        mats = np.ascontiguousarray(regularized_matrix(grid, eps))
    else:
        mats = np.zeros((1, 1))
    return _Geometry(
        r=grid.r,
        edges=grid.r_edges,
        area=surface * grid.r_edges ** (grid.d - 1),
        w=grid.weights,
        surface=surface,
        d=grid.d,
        mats=mats,
        eps_mode=eps > 0,
    )


def stable_dt(u: RadialField, v: RadialField, p: Params, eps: float = 0.0, safety: float = 0.45) -> float:
    geo = _geometry(u.grid, eps)
    n = u.grid.n
    gu, gv, xu, xv = (np.zeros(n + 1) for _ in range(4))
    lu, ru, lv, rv = (np.zeros(n) for _ in range(4))
    _edge_gradients(u.values, v.values, geo.mats, geo.eps_mode, geo.r, geo.edges, geo.w,
                    geo.surface, geo.d, gu, gv)
    _velocities(u.values, p.m1, gu, geo.r, xu)
    _velocities(v.values, p.m2, gv, geo.r, xv)
    _faces(u.values, geo.r, lu, ru)
    _faces(v.values, geo.r, lv, rv)
    return float(_stable_dt(u.values, v.values, p.m1, p.m2, xu, xv, lu, ru, lv, rv,
                            geo.r, geo.area, geo.w, safety))


def initial_state(u: RadialField, v: RadialField, p: Params, eps: float = 0.0, safety: float = 0.45) -> SimState:
    dt = stable_dt(u, v, p, eps, safety)
    return SimState(t=0.0, u=u, v=v, dt=dt if math.isfinite(dt) else 1.0, params=p, eps=eps)


def _run(s: SimState, t_stop: float, safety: float, dt_floor: float, linf_cap: float,
         max_steps: int, geo: _Geometry) -> tuple[SimState, int]:
    u = s.u.values.copy()
    v = s.v.values.copy()
    p = s.params
    t, dt, steps, status = _advance(u, v, p.m1, p.m2, geo.mats, geo.eps_mode, geo.r, geo.edges,
                                    geo.area, geo.w, geo.surface, geo.d, s.t, t_stop, safety,
                                    dt_floor, linf_cap, max_steps)
    if status == 4:
        raise PositivityLost(f"negative density at t={t}")
    if status == 3:
        return s, status
    g = s.grid
    new = SimState(t=t, u=RadialField(g, u), v=RadialField(g, v), dt=dt if dt > 0 else s.dt,
                   params=p, eps=s.eps, step_count=s.step_count + steps)
    return new, status


def step(s: SimState, safety: float = 0.45) -> SimState:
    """One explicit step with the largest admissible dt."""
    dt = stable_dt(s.u, s.v, s.params, s.eps, safety)
    if not math.isfinite(dt):
        # nothing moves (zero data): no step limit and no change
        return replace(s, step_count=s.step_count + 1)
    geo = _geometry(s.grid, s.eps)
    new, status = _run(s, s.t + dt, safety, 0.0, math.inf, 1, geo)
    if status == 3:
        raise NonFinite("non-finite value after one step")
    return new


def free_energy_eps(u: RadialField, v: RadialField, p: Params, eps: float = 0.0) -> float:
    ent = power_integral(u, p.m1) / (p.m1 - 1) + power_integral(v, p.m2) / (p.m2 - 1)
    c = regularized_potential(v, eps) if eps > 0 else newtonian_potential(v)
    return ent - float(np.dot(u.values * c.values, u.grid.weights))


def _row(s: SimState) -> tuple[float, ...]:
    u, v, p = s.u, s.v, s.params
    g = s.grid
    m2 = float(np.dot(g.r**2 * (u.values + v.values), g.weights))
    return (
        s.t,
        integrate(u),
        integrate(v),
        lp_norm(u, p.m1),
        lp_norm(v, p.m2),
        float(u.values.max()),
        float(v.values.max()),
        free_energy_eps(u, v, p, s.eps),
        m2,
        s.dt,
    )


def _inner_fraction(s: SimState) -> float:
    g = s.grid
    total = float(np.dot(s.u.values + s.v.values, g.weights))
    if total == 0:
        return 1.0
    inner = g.r < 0.8 * g.r_max
    return float(np.dot((s.u.values + s.v.values)[inner], g.weights[inner])) / total


def evolve(s0: SimState, t_end: float, controls: Controls | None = None) -> SimTrace:
    """Integrate to t_end, sampling every ``controls.sample_every`` time units."""
    c = controls or Controls()
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if c.linf_cap <= 0 or c.dt_min <= 0 or c.sample_every <= 0:
        raise ValueError("caps and sampling interval must be positive")
    geo = _geometry(s0.grid, s0.eps)
    linf0 = float(s0.u.values.max() + s0.v.values.max())
    cap = c.linf_cap * linf0 if linf0 > 0 else math.inf
    dt0 = stable_dt(s0.u, s0.v, s0.params, s0.eps, c.safety)
    dt_floor = c.dt_min * dt0 if math.isfinite(dt0) else 0.0

    trace = SimTrace()

    def record(s: SimState) -> None:
        row = _row(s)
        if trace.rows:
            f0 = trace.rows[0][7]
            if row[7] > trace.rows[-1][7] + c.energy_tol * abs(f0):
                trace.events.append((Event.ENERGY_VIOLATION, s.t))
        trace.rows.append(row)
        if c.keep_states:
            trace.states.append(s)
        if _inner_fraction(s) < 0.999:
            trace.grid_too_small = True

    s = s0
    record(s)
    k = 0
    budget = c.max_steps
    while True:
        k += 1
        t_next = min(k * c.sample_every, t_end)
        new, status = _run(s, t_next, c.safety, dt_floor, cap, budget, geo)
        budget -= new.step_count - s.step_count
        if status == 3:
            trace.events.append((Event.LINF_CAP, s.t))
            break
        s = new
        if status == 0:
            record(s)
            if s.t >= t_end:
                trace.events.append((Event.HORIZON, s.t))
                break
            continue
        if s.t > trace.rows[-1][0]:
            record(s)
        if status == 5:
            raise StepBudgetExhausted(f"{c.max_steps} steps used before t={t_end}")
        trace.events.append((Event.LINF_CAP if status == 1 else Event.DT_COLLAPSE, s.t))
        break
    trace.steps = s.step_count - s0.step_count
    return trace


def _virial(s: SimState) -> tuple[float, float]:
    """(analytic dm2/dt, sum of magnitudes of its terms)."""
    a, b, e = moment_rate_terms(s.u, s.v, s.params)
    return a + b + e, abs(a) + abs(b) + abs(e)


def moment_rate_check(trace: SimTrace, samples: list[SimState] | None = None,
                      until: float = 1.0) -> float:
    """Largest relative gap between the sampled dm2/dt and the virial identity.

    Uses centred differences at interior samples with t <= until * t_final.
    The gap is measured against the largest magnitude of the identity's
    terms over the checked samples.
    """
    states = trace.states if samples is None else samples
    if len(states) < 3:
        raise TooFewSamples(f"need at least 3 samples, got {len(states)}")
    t = np.array([s.t for s in states])
    m2 = np.array([float(np.dot(s.grid.r**2 * (s.u.values + s.v.values), s.grid.weights)) for s in states])
    gaps = []
    scales = []
    t_cut = until * t[-1]
    for k in range(1, len(states) - 1):
        if t[k + 1] > t_cut:
            break
        fd = (m2[k + 1] - m2[k - 1]) / (t[k + 1] - t[k - 1])
        rate, scale = _virial(states[k])
        gaps.append(abs(fd - rate))
        scales.append(scale)
    if not gaps:
        raise TooFewSamples("no interior samples before the cut-off")
    top = max(scales)
    return 0.0 if top == 0 else max(gaps) / top
