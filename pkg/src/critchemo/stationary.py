"""Stationary pairs, the sharp HLS constant and the critical thresholds.

Stationary pairs solve

    m1/(m1-1) U^(m1-1) = c_d |x|^(2-d) * V,   m2/(m2-1) V^(m2-1) = c_d |x|^(2-d) * U

on the whole space. They form a one-parameter dilation family; the solver
pins the gauge by fixing the central value U(0).

Stationary profiles decay algebraically, so part of their mass lies beyond
r_max. The truncated problem has no solution at all, hence solvers work on
a geometric extension of the grid and return the restriction together with
the exterior potential: mass outside r_max generates a potential that is
exactly constant inside the ball.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy.special import gamma

from .core import Params, RadialField, RadialGrid, extend_grid, make_grid, validate_params
from .functionals import (
    energy_report,
    hls_ratio,
    interaction,
    pohozaev_residual,
    power_integral,
    resample,
)
from .potential import integrate, pointwise_potential


class NoConvergence(RuntimeError):
    pass


class Divergence(RuntimeError):
    pass


class NotSymmetricCase(ValueError):
    pass


class NotConverged(ValueError):
    pass


@dataclass
class SteadyState:
    U: RadialField
    V: RadialField
    norm_u_m1: float
    norm_v_m2: float
    masses: tuple[float, float]
    free_energy: float
    pohozaev: float
    el_residual: float
    potential_offsets: tuple[float, float]
    iterations: int
    converged: bool
    hls_ratio: float = 0.0
    amplitude: float | None = None
    params: Params | None = None
    exterior_potential: tuple[float, float] = (0.0, 0.0)
    tail_masses: tuple[float, float] = (0.0, 0.0)
    # masses, norms and energies include the part of the profile beyond r_max;
    # exterior_potential is the constant potential that part adds inside r_max

    @property
    def grid(self) -> RadialGrid:
        return self.U.grid

    @property
    def weighted_norms(self) -> tuple[float, float]:
        """(m1/(m1-1) int U^m1, m2/(m2-1) int V^m2); equal for stationary pairs."""
        p = self.params
        return (
            p.m1 / (p.m1 - 1) * self.norm_u_m1**p.m1,
            p.m2 / (p.m2 - 1) * self.norm_v_m2**p.m2,
        )

    def extended(self) -> tuple[RadialField, RadialField]:
        """Profiles on the geometric extension of the grid, tails continued as power laws."""
        ext = extend_grid(self.grid)
        return (
            RadialField(ext, resample(self.U, ext.r, tail="power")),
            RadialField(ext, resample(self.V, ext.r, tail="power")),
        )

    @property
    def energy_scale(self) -> float:
        """Mass-averaged chemical energy of U, the natural unit of the offsets."""
        return self.weighted_norms[0] / self.masses[0]


def _species_map(partner: RadialField, m: float) -> np.ndarray:
    """((m-1)/m * c_d K*partner)^(1/(m-1)); c_d is already inside the potential."""
    c = pointwise_potential(partner).values
    return ((m - 1) / m * np.maximum(c, 0.0)) ** (1.0 / (m - 1))


def el_residuals(U: RadialField, V: RadialField, p: Params,
                 exterior: tuple[float, float] = (0.0, 0.0)) -> tuple[float, float]:
    """Relative sup-norm residuals of both Euler-Lagrange equations.

    ``exterior`` holds the constant potentials that mass beyond r_max adds
    to the U and V equations respectively.
    """
    out = []
    for f, partner, m, ext in ((U, V, p.m1, exterior[0]), (V, U, p.m2, exterior[1])):
        c = pointwise_potential(partner).values + ext
        lhs = m / (m - 1) * f.values ** (m - 1)
        scale = np.max(np.abs(c))
        out.append(float(np.max(np.abs(lhs - c)) / scale) if scale > 0 else 0.0)
    return out[0], out[1]


def potential_offsets(U: RadialField, V: RadialField, p: Params,
                      exterior: tuple[float, float] = (0.0, 0.0)) -> tuple[float, float]:
    """Mass-weighted mean chemical potentials (C1, C2); both vanish on the critical curve."""
    offs = []
    for f, partner, m, ext in ((U, V, p.m1, exterior[0]), (V, U, p.m2, exterior[1])):
        mass = integrate(f)
        if mass == 0:
            offs.append(0.0)
            continue
        chem = m / (m - 1) * power_integral(f, m) - interaction(f, partner) - ext * mass
        offs.append(chem / mass)
    return offs[0], offs[1]


def build_state(U: RadialField, V: RadialField, p: Params, iterations: int = 0,
                converged: bool = True, amplitude: float | None = None,
                exterior: tuple[float, float] = (0.0, 0.0),
                tail_masses: tuple[float, float] = (0.0, 0.0)) -> SteadyState:
    rep = energy_report(U, V, p)
    return SteadyState(
        U=U,
        V=V,
        norm_u_m1=rep.norms[0],
        norm_v_m2=rep.norms[1],
        masses=rep.masses,
        free_energy=rep.free_energy,
        pohozaev=pohozaev_residual(U, V, p),
        el_residual=max(el_residuals(U, V, p, exterior)),
        potential_offsets=potential_offsets(U, V, p, exterior),
        iterations=iterations,
        converged=converged,
        hls_ratio=rep.hls_ratio,
        amplitude=amplitude,
        params=p,
        exterior_potential=(float(exterior[0]), float(exterior[1])),
        tail_masses=(float(tail_masses[0]), float(tail_masses[1])),
    )


def _restrict(Ue: np.ndarray, Ve: np.ndarray, grid: RadialGrid, ext: RadialGrid, p: Params,
              **kw) -> SteadyState:
    """State on ``grid`` from profiles on its extension ``ext``.

    Diagnostics are whole-space quantities evaluated on the extension; the
    stored profiles are the restriction to ``grid``.
    """
    n = grid.n
    state = build_state(RadialField(ext, Ue), RadialField(ext, Ve), p, **kw)
    exterior = []
    for partner in (Ve, Ue):
        full = pointwise_potential(RadialField(ext, partner)).values[0]
        cut = pointwise_potential(RadialField(grid, partner[:n])).values[0]
        exterior.append(float(full - cut))
    tails = (float(np.dot(Ue[n:], ext.weights[n:])), float(np.dot(Ve[n:], ext.weights[n:])))
    return replace(
        state,
        U=RadialField(grid, Ue[:n].copy()),
        V=RadialField(grid, Ve[:n].copy()),
        exterior_potential=(exterior[0], exterior[1]),
        tail_masses=tails,
    )


def _log_resample(logf: np.ndarray, r: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Piecewise-linear log profile at radii x; power-law continuation past the grid."""
    out = np.interp(x, r, logf)
    beyond = x > r[-1]
    if np.any(beyond):
        slope = min((logf[-1] - logf[-2]) / (math.log(r[-1]) - math.log(r[-2])), 0.0)
        out[beyond] = logf[-1] + slope * (np.log(x[beyond]) - math.log(r[-1]))
    return out


def solve_steady(p: Params, grid: RadialGrid, normalization: float = 1.0, damping: float = 0.5,
                 tol: float = 1e-10, max_iter: int = 2000) -> SteadyState:
    """Damped fixed-point iteration for the stationary pair with U(0) = normalization.

    Each sweep computes U from V, brings its central value back to the gauge
    with an amplitude factor plus the dilation of the scaling family that
    restores consistency, damps in log space, then recomputes V from U.
    Near the fixed point the dilation tends to the identity, so the converged
    pair carries no interpolation error.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if normalization <= 0:
        raise ValueError("normalization must be positive")
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    ext = extend_grid(grid)
    r = ext.r
    alpha_u, _ = p.scaling_exponents
    pq = 1.0 / ((p.m1 - 1) * (p.m2 - 1))
    gauge_power = 1.0 / (alpha_u * (pq - 1.0))
    log_n = math.log(normalization)

    width = grid.r_max / 20.0
    logu = log_n - (p.d + 2) / 2.0 * np.log1p((r / width) ** 2)
    U = RadialField(ext, np.exp(logu))
    V = RadialField(ext, _species_map(U, p.m2))
    change = math.inf
    for it in range(1, max_iter + 1):
        raw = _species_map(V, p.m1)
        if not np.all(np.isfinite(raw)) or raw[0] <= 0:
            raise Divergence(f"profile left the representable range at iteration {it}")
        lograw = np.log(raw)
        stretch = math.exp(gauge_power * (lograw[0] - log_n))
        cand = _log_resample(lograw, r, stretch * r)
        cand += log_n - cand[0]
        new_logu = (1.0 - damping) * logu + damping * cand
        new_logu += log_n - new_logu[0]
        change = float(np.max(np.abs(np.exp(new_logu[: grid.n]) - np.exp(logu[: grid.n])))) / normalization
        logu = new_logu
        U = RadialField(ext, np.exp(logu))
        V = RadialField(ext, _species_map(U, p.m2))
        if not np.all(np.isfinite(V.values)):
            raise Divergence(f"partner profile overflowed at iteration {it}")
        if change <= tol:
            return _restrict(U.values, V.values, grid, ext, p, iterations=it, converged=True)
    raise NoConvergence(f"no convergence after {max_iter} iterations (last change {change:.3e})")


def extremal_amplitude(d: int) -> float:
    """Amplitude c(d) of the closed-form stationary profile, derived by hand.

    Used only as an independent check of the numerical collocation.
    """
    return (2.0 * d * d) ** ((d + 2) / 4.0)


def closed_form_steady(p: Params, grid: RadialGrid, lam: float = 1.0) -> SteadyState:
    """U = V = c (lam / (lam^2 + r^2))^((d+2)/2), c fixed by collocation at the centre."""
    if not p.symmetric:
        raise NotSymmetricCase("closed form exists only for m1 = m2 = 2d/(d+2)")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    m = p.m1
    ext = extend_grid(grid)
    shape = RadialField(ext, (lam / (lam * lam + ext.r**2)) ** ((p.d + 2) / 2.0))
    pot0 = pointwise_potential(shape).values[0]
    amp = (pot0 * (m - 1) / (m * shape.values[0] ** (m - 1))) ** (1.0 / (m - 2))
    U = amp * shape.values
    return _restrict(U, U.copy(), grid, ext, p, amplitude=float(amp))


def gauge_lambda(p: Params, center: float, amplitude: float) -> float:
    """Scale lam of the closed form whose central value equals ``center``."""
    return (amplitude / center) ** (2.0 / (p.d + 2))


# ---------------------------------------------------------------- sharp constant


def hls_upper_bound(d: int, beta: float, q: float, r: float) -> float:
    """General upper bound on the sharp HLS constant C(d, beta, q)."""
    s = beta / d
    return (
        d / (d - beta)
        * (math.pi ** (d / 2) / math.gamma(d / 2 + 1)) ** s
        / (q * r)
        * ((s / (1 - 1 / q)) ** s + (s / (1 - 1 / r)) ** s)
    )


def hls_sharp_symmetric(d: int, beta: float) -> float:
    """Lieb's sharp constant for q = r = 2d/(2d - beta)."""
    return (
        math.pi ** (beta / 2)
        * gamma(d / 2 - beta / 2)
        / gamma(d - beta / 2)
        * (gamma(d / 2) / gamma(d)) ** (-1 + beta / d)
    )


@dataclass
class SharpConstant:
    cstar: float
    upper_bound: float
    exact_symmetric: float | None
    extremal: SteadyState
    iterations: int
    history: list[float] = field(default_factory=list)


def _normalized(vals: np.ndarray, grid: RadialGrid, m: float) -> np.ndarray:
    return vals / float(np.dot(vals**m, grid.weights)) ** (1.0 / m)


def _random_profile(grid: RadialGrid, r_max: float, rng: np.random.Generator) -> np.ndarray:
    width = r_max * rng.uniform(0.03, 0.1)
    base = (1.0 + (grid.r / width) ** 2) ** (-rng.uniform(1.5, 3.0))
    k = np.arange(1, 6)
    ripple = 1.0 + 0.3 * np.sin(np.outer(grid.r / width, k) + rng.uniform(0, 2 * np.pi, 5)) @ (
        rng.uniform(-1, 1, 5) / k
    )
    return base * np.clip(ripple, 0.2, None)


def _to_stationary(u: np.ndarray, v: np.ndarray, p: Params, grid: RadialGrid, ext: RadialGrid,
                   iterations: int) -> SteadyState:
    """Rescale an HLS maximiser (u, v) into a stationary pair.

    With u ~ T1(v) and v ~ T2(u) up to constants, amplitudes a, b with
    a u = T1(b v) and b v = T2(a u) solve a 2x2 log-linear system.
    """
    pu, pv = 1.0 / (p.m1 - 1), 1.0 / (p.m2 - 1)
    k1 = math.log(_species_map(RadialField(ext, v), p.m1)[0] / u[0])
    k2 = math.log(_species_map(RadialField(ext, u), p.m2)[0] / v[0])
    # T1 is homogeneous of degree pu: log a = pu log b + k1, log b = pv log a + k2
    la = (pu * k2 + k1) / (1.0 - pu * pv)
    lb = pv * la + k2
    return _restrict(math.exp(la) * u, math.exp(lb) * v, grid, ext, p, iterations=iterations)


def estimate_sharp_constant(p: Params, grid: RadialGrid, seed: int = 0, tol: float = 1e-12,
                            max_iter: int = 5000, drift_tol: float = 1e-9) -> SharpConstant:
    """Maximise J(u, v) = h(u, v) / (|u|_m1 |v|_m2) by alternating exact maximisation.

    With v fixed, Hoelder's inequality is saturated by u ~ (K*v)^(1/(m1-1)),
    so each half step cannot decrease J. ``cstar`` is the ratio without c_d.

    Stops when the relative increase of J drops below ``tol``, or once the
    increases stop contracting while below ``drift_tol``: the discrete J is
    dilation invariant only up to quadrature error, so after the shape has
    converged the ascent creeps slowly along the dilation family.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    ext = extend_grid(grid)
    rng = np.random.default_rng(seed)
    v = _normalized(_random_profile(ext, grid.r_max, rng), ext, p.m2)
    u = v
    history: list[float] = []
    J = 0.0
    last_gain = math.inf
    for it in range(1, max_iter + 1):
        u = _normalized(_species_map(RadialField(ext, v), p.m1), ext, p.m1)
        v = _normalized(_species_map(RadialField(ext, u), p.m2), ext, p.m2)
        J_new = hls_ratio(RadialField(ext, u), RadialField(ext, v), p)
        history.append(J_new)
        gain = (J_new - J) / J_new
        J = J_new
        if it > 1 and (gain <= tol or (gain <= drift_tol and gain >= 0.5 * last_gain)):
            break
        last_gain = gain
    else:
        raise NoConvergence(f"HLS ascent did not settle in {max_iter} iterations")
    exact = hls_sharp_symmetric(p.d, p.d - 2) if p.symmetric else None
    return SharpConstant(
        cstar=J,
        upper_bound=hls_upper_bound(p.d, p.d - 2, p.m1, p.m2),
        exact_symmetric=exact,
        extremal=_to_stationary(u, v, p, grid, ext, it),
        iterations=it,
        history=history,
    )


def optimality_gap(state: SteadyState, cs: SharpConstant) -> float:
    """Relative gap between J at a stationary pair and the estimated sharp constant."""
    return abs(state.hls_ratio - cs.cstar) / cs.cstar


@dataclass(frozen=True)
class Thresholds:
    x_star: float
    y_star: float
    A: float


def critical_thresholds(cs: SharpConstant | float, p: Params) -> Thresholds:
    cstar = cs.cstar if isinstance(cs, SharpConstant) else float(cs)
    A = p.m1 * (p.m2 - 1) / (p.m2 * (p.m1 - 1))
    base = p.m1 / (p.c_d * cstar * (p.m1 - 1)) * A ** (-1.0 / p.m2)
    x = base ** (1.0 / (1.0 / p.m1 + 1.0 / p.m2 - 1.0))
    return Thresholds(x_star=x, y_star=A * x, A=A)


# ---------------------------------------------------------------- serialization


def steady_to_dict(state: SteadyState) -> dict:
    p = state.params
    diag = {f.name: getattr(state, f.name) for f in fields(state) if f.name not in ("U", "V", "params")}
    return {
        "params": {"d": p.d, "m1": p.m1, "m2": p.m2, "curve_tol": p.curve_tol},
        "grid": state.grid.spec,
        "profiles": {
            "r": state.grid.r.tolist(),
            "U": state.U.values.tolist(),
            "V": state.V.values.tolist(),
        },
        "diagnostics": {k: ([float(x) for x in v] if isinstance(v, tuple) else v) for k, v in diag.items()},
    }


def steady_from_dict(doc: dict) -> SteadyState:
    pp = doc["params"]
    p = validate_params(pp["d"], pp["m1"], pp["m2"], pp.get("curve_tol", 1e-12))
    gs = doc["grid"]
    grid = make_grid(gs["r_max"], gs["n"], gs.get("stretch", 1.0), d=gs["d"])
    U = RadialField(grid, np.array(doc["profiles"]["U"]))
    V = RadialField(grid, np.array(doc["profiles"]["V"]))
    diag = dict(doc["diagnostics"])
    for key in ("masses", "potential_offsets", "exterior_potential", "tail_masses"):
        diag[key] = tuple(diag[key])
    return SteadyState(U=U, V=V, params=p, **diag)


def save_steady(state: SteadyState, path: str | Path, header: dict | None = None) -> None:
    doc = {"_header": header or {}}
    doc.update(steady_to_dict(state))
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=False) + "\n", encoding="utf-8")


def load_steady(path: str | Path) -> SteadyState:
    return steady_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
