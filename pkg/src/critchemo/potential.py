"""Radial quadrature, norms, moments and Newtonian / regularized potentials.

Densities are piecewise constant on the shells of a :class:`RadialGrid`.
The Newtonian potential returned here is the exact shell average of the
potential generated by that piecewise-constant density (which vanishes
beyond ``r_max``). Averaging over shells makes the discrete interaction
form ``sum_i u_i w_i c[v]_i`` exactly symmetric in ``u`` and ``v``.

``pointwise_potential`` instead treats the values as point samples of a
smooth profile; it is the fourth-order operator used for collocation of
the stationary equations.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import gamma, roots_jacobi

from .core import FieldKind, RadialField, RadialGrid, unit_ball_volume


def _pow_diff(big: np.ndarray, small: np.ndarray, k: int) -> np.ndarray:
    """big**k - small**k without cancellation (k a positive integer)."""
    acc = np.zeros(np.broadcast(big, small).shape)
    for j in range(k):
        acc = acc + big**j * small ** (k - 1 - j)
    return (big - small) * acc


def integrate(f: RadialField) -> float:
    return float(np.dot(f.values, f.grid.weights))


def lp_norm(f: RadialField, p: float) -> float:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return float(np.dot(np.abs(f.values) ** p, f.grid.weights) ** (1.0 / p))


def second_moment(u: RadialField, v: RadialField) -> float:
    g = u.grid
    return float(np.dot((u.values + v.values) * g.r**2, g.weights))


@lru_cache(maxsize=32)
def _shell_coefficients(grid: RadialGrid) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients (A, S) of the shell-averaged Green's function.

    For i != j the averaged interaction between shells is A[max(i, j)] per
    unit mass; S[i] is the self-interaction of shell i per unit density.
    """
    d = grid.d
    e, E = grid.r_edges[:-1], grid.r_edges[1:]
    w = grid.weights
    surface = d * unit_ball_volume(d)
    A = (E - e) * (E + e) / (2.0 * (d - 2) * w)
    # both self integrands are polynomials of degree d+1 in r
    xq, wq = np.polynomial.legendre.leggauss(d // 2 + 2)
    h = 0.5 * (E - e)
    rq = (e + h)[:, None] + h[:, None] * xq[None, :]
    ee, EE = e[:, None], E[:, None]
    i1 = rq * _pow_diff(rq, ee, d) / d
    i2 = rq ** (d - 1) * (EE - rq) * (EE + rq) / 2.0
    integral = h * ((i1 + i2) @ wq)
    S = surface * integral / ((d - 2) * w)
    return A, S


def newtonian_potential(f: RadialField) -> RadialField:
    """Shell-averaged solution of -Lap c = f that decays at infinity.

    Equivalent to ``c_d |x|^(2-d) * f`` for f vanishing beyond r_max.
    Linear cost: one prefix sum of shell masses and one suffix sum.
    """
    g = f.grid
    A, S = _shell_coefficients(g)
    mass = f.values * g.weights
    inner = np.concatenate(([0.0], np.cumsum(mass)[:-1]))
    outer_terms = mass * A
    outer = np.concatenate((np.cumsum(outer_terms[::-1])[::-1][1:], [0.0]))
    c = A * inner + outer + f.values * S
    return RadialField(g, c, FieldKind.POTENTIAL)


def pointwise_potential(f: RadialField) -> RadialField:
    """Potential at the cell centres of the spline through the centre values.

    Uses c(r) = (r^(2-d) int_0^r f s^(d-1) ds + int_r^inf f s ds) / (d-2)
    with both integrands splined through the origin, where they vanish.
    The profile is taken to end at the last centre.
    """
    g = f.grid
    d = g.d
    s = np.concatenate(([0.0], g.r))
    vals = np.concatenate(([0.0], f.values))
    inner = CubicSpline(s, vals * s ** (d - 1)).antiderivative()(g.r)
    cum = CubicSpline(s, vals * s).antiderivative()(s)
    outer = cum[-1] - cum[1:]
    c = (inner / g.r ** (d - 2) + outer) / (d - 2)
    return RadialField(g, np.maximum(c, 0.0) if np.all(f.values >= 0) else c, FieldKind.POTENTIAL)


def newtonian_matrix(grid: RadialGrid) -> np.ndarray:
    """Dense operator G with newtonian_potential(f).values == G @ f.values (for tests)."""
    A, S = _shell_coefficients(grid)
    n = grid.n
    idx = np.arange(n)
    G = A[np.maximum.outer(idx, idx)] * grid.weights[None, :]
    G[idx, idx] = S
    return G


def enclosed_mass(f: RadialField) -> np.ndarray:
    """Mass inside each cell edge (length n+1, starting with 0 at the origin)."""
    return np.concatenate(([0.0], np.cumsum(f.values * f.grid.weights)))


def edge_gradient(f: RadialField) -> np.ndarray:
    """Radial derivative of the Newtonian potential of f at the cell edges.

    Exact for piecewise-constant f: c'(r) = -Q(r) / r^(d-1), with Q the
    enclosed mass divided by the unit-sphere area. Zero at the origin.
    """
    g = f.grid
    d = g.d
    q = enclosed_mass(f) / (d * unit_ball_volume(d))
    out = np.zeros(g.n + 1)
    out[1:] = -q[1:] / g.r_edges[1:] ** (d - 1)
    return out


def radial_laplacian(c: RadialField, outer_slope: float | None = None) -> np.ndarray:
    """Finite-volume radial Laplacian of cell values.

    Zero flux at the origin; at r_max the flux uses ``outer_slope`` (c'(r_max))
    when given, otherwise a one-sided difference of the last two cells.
    """
    g = c.grid
    d = g.d
    surface = d * unit_ball_volume(d)
    grad = np.zeros(g.n + 1)
    grad[1:-1] = np.diff(c.values) / np.diff(g.r)
    grad[-1] = grad[-2] if outer_slope is None else outer_slope
    flux = surface * g.r_edges ** (d - 1) * grad
    return np.diff(flux) / g.weights


def _sphere_measure(d: int) -> float:
    return np.sqrt(np.pi) * gamma((d - 1) / 2.0) / gamma(d / 2.0)


@lru_cache(maxsize=8)
def regularized_matrix(grid: RadialGrid, eps: float, n_quad: int = 32) -> np.ndarray:
    """Dense operator for f -> R_eps * f with R_eps = c_d (|x|^2 + eps^2)^(-(d-2)/2).

    Row i holds the shell weights times the spherical mean of R_eps over the
    sphere of radius r_j seen from distance r_i. The polar integral is done in
    the chord length |x - y|, with a Gauss-Jacobi rule absorbing the
    (1 - cos^2)^((d-3)/2) endpoint factor.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    d = grid.d
    alpha = unit_ball_volume(d)
    c_d = 1.0 / (d * (d - 2.0) * alpha)
    a = (d - 3) / 2.0
    xq, wq = roots_jacobi(n_quad, a, a)
    norm = _sphere_measure(d)
    r = grid.r
    n = grid.n
    G = np.empty((n, n))
    s = r[None, :]
    for lo in range(0, n, 128):
        ri = r[lo:lo + 128, None]
        big, small = np.maximum(ri, s), np.minimum(ri, s)
        w = big[..., None] + small[..., None] * xq
        kern = (w * w + eps * eps) ** (-(d - 2) / 2.0) * w
        if a:
            summ, diff = (ri + s)[..., None], np.abs(ri - s)[..., None]
            kern = kern * ((summ + w) * (w + diff)) ** a * (small**2)[..., None] ** a / (2 * ri * s)[..., None] ** (2 * a)
        mean = (kern @ wq) * small / (ri * s) / norm
        G[lo:lo + 128] = c_d * mean * grid.weights[None, :]
    return G


def regularized_potential(f: RadialField, eps: float) -> RadialField:
    G = regularized_matrix(f.grid, float(eps))
    return RadialField(f.grid, G @ f.values, FieldKind.POTENTIAL)
