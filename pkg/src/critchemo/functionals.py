"""Free energy, HLS ratio, dilations and identity residuals."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .core import Params, RadialField, unit_ball_volume
from .potential import integrate, lp_norm, newtonian_potential, second_moment


class NonFinite(ArithmeticError):
    pass


@dataclass(frozen=True)
class EnergyReport:
    diffusion1: float
    diffusion2: float
    interaction: float
    free_energy: float
    hls_ratio: float
    masses: tuple[float, float]
    norms: tuple[float, float]
    second_moment: float

    def as_dict(self) -> dict:
        return {
            "diffusion1": self.diffusion1,
            "diffusion2": self.diffusion2,
            "interaction": self.interaction,
            "free_energy": self.free_energy,
            "hls_ratio": self.hls_ratio,
            "masses": list(self.masses),
            "norms": list(self.norms),
            "second_moment": self.second_moment,
        }


def power_integral(f: RadialField, m: float) -> float:
    return float(np.dot(f.values**m, f.grid.weights))


def interaction(u: RadialField, v: RadialField) -> float:
    """c_d h(u, v) = int u (c_d |x|^(2-d) * v) dx, via the potential solve."""
    c = newtonian_potential(v)
    return float(np.dot(u.values * c.values, u.grid.weights))


def hls_ratio(u: RadialField, v: RadialField, p: Params) -> float:
    nu, nv = lp_norm(u, p.m1), lp_norm(v, p.m2)
    if nu == 0 or nv == 0:
        return 0.0
    return interaction(u, v) / p.c_d / (nu * nv)


def energy_report(u: RadialField, v: RadialField, p: Params) -> EnergyReport:
    a = power_integral(u, p.m1) / (p.m1 - 1)
    b = power_integral(v, p.m2) / (p.m2 - 1)
    inter = interaction(u, v)
    nu, nv = lp_norm(u, p.m1), lp_norm(v, p.m2)
    ratio = inter / p.c_d / (nu * nv) if nu > 0 and nv > 0 else 0.0
    rep = EnergyReport(
        diffusion1=a,
        diffusion2=b,
        interaction=inter,
        free_energy=a + b - inter,
        hls_ratio=ratio,
        masses=(integrate(u), integrate(v)),
        norms=(nu, nv),
        second_moment=second_moment(u, v),
    )
    vals = [a, b, inter, ratio, nu, nv, rep.second_moment, *rep.masses]
    if not all(math.isfinite(x) for x in vals):
        raise NonFinite(f"non-finite energy component: {rep}")
    return rep


def free_energy(u: RadialField, v: RadialField, p: Params) -> float:
    return (
        power_integral(u, p.m1) / (p.m1 - 1)
        + power_integral(v, p.m2) / (p.m2 - 1)
        - interaction(u, v)
    )


def resample(f: RadialField, radii: np.ndarray, tail: str = "zero") -> np.ndarray:
    """Monotone (PCHIP) interpolation of a radial profile at arbitrary radii.

    Positive profiles are interpolated in log space. Beyond the outermost
    cell centre the profile vanishes (``tail="zero"``, the convention of the
    potential solve) or continues as the power law through the last two
    centres (``tail="power"``, for algebraically decaying profiles).
    """
    if tail not in ("zero", "power"):
        raise ValueError(f"unknown tail mode {tail!r}")
    g = f.grid
    r = np.concatenate(([-g.r[0]], g.r))
    vals = np.concatenate(([f.values[0]], f.values))
    radii = np.asarray(radii, dtype=float)
    out = np.zeros_like(radii)
    inside = radii <= g.r[-1]
    positive = bool(np.all(vals > 0))
    if positive:
        out[inside] = np.exp(PchipInterpolator(r, np.log(vals))(radii[inside]))
    else:
        out[inside] = np.maximum(PchipInterpolator(r, vals)(radii[inside]), 0.0)
    if tail == "power" and positive and not np.all(inside):
        slope = math.log(vals[-1] / vals[-2]) / math.log(g.r[-1] / g.r[-2])
        out[~inside] = vals[-1] * (radii[~inside] / g.r[-1]) ** min(slope, 0.0)
    return out


def rescale(u: RadialField, v: RadialField, lam: float, p: Params) -> tuple[RadialField, RadialField]:
    """Apply the dilation u -> lam^a u(lam x), v -> lam^b v(lam x) at t = 0."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if lam == 1:
        return RadialField(u.grid, u.values.copy()), RadialField(v.grid, v.values.copy())
    a, b = p.scaling_exponents
    x = lam * u.grid.r
    return (
        RadialField(u.grid, lam**a * resample(u, x, tail="power")),
        RadialField(v.grid, lam**b * resample(v, x, tail="power")),
    )


def pohozaev_residual(U: RadialField, V: RadialField, p: Params) -> float:
    d = p.d
    lhs = 2 * d * power_integral(U, p.m1) + 2 * d * power_integral(V, p.m2)
    rhs = 2 * (d - 2) * interaction(U, V)
    scale = max(abs(lhs), abs(rhs))
    return 0.0 if scale == 0 else abs(lhs - rhs) / scale


def moment_rate_terms(u: RadialField, v: RadialField, p: Params) -> tuple[float, float, float]:
    d = p.d
    return (
        (2 * d - 2 * (d - 2) / (p.m1 - 1)) * power_integral(u, p.m1),
        (2 * d - 2 * (d - 2) / (p.m2 - 1)) * power_integral(v, p.m2),
        2 * (d - 2) * free_energy(u, v, p),
    )


def moment_rate(u: RadialField, v: RadialField, p: Params) -> float:
    """Right-hand side of the virial identity for d/dt int |x|^2 (u + v)."""
    return float(sum(moment_rate_terms(u, v, p)))


def _species_dissipation(f: RadialField, partner: RadialField, m: float) -> float:
    g = f.grid
    vals = f.values
    if not np.any(vals > 0):
        return 0.0
    c = newtonian_potential(partner).values
    mu = m / (m - 1) * vals ** (m - 1) - c
    grad = np.diff(mu) / np.diff(g.r)
    support = vals > 1e-14 * vals.max()
    ok = support[1:] & support[:-1]
    edges = g.r_edges[1:-1]
    vol = g.d * unit_ball_volume(g.d) * edges ** (g.d - 1) * np.diff(g.r)
    dens = 0.5 * (vals[1:] + vals[:-1])
    return float(np.sum((dens * grad**2 * vol)[ok]))


def dissipation_rate(u: RadialField, v: RadialField, p: Params) -> float:
    """-(int u |grad mu_u|^2 + int v |grad mu_v|^2), centred differences at cell edges.

    Cells with density below 1e-14 of the species maximum are excluded.
    """
    return -(_species_dissipation(u, v, p.m1) + _species_dissipation(v, u, p.m2))


def energy_barrier(x: float, y: float, cstar: float, p: Params) -> float:
    return x / (p.m1 - 1) + y / (p.m2 - 1) - p.c_d * cstar * x ** (1 / p.m1) * y ** (1 / p.m2)
