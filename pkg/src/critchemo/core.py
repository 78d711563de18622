"""Parameters, radial grids and field containers shared by every module."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class ParamsError(ValueError):
    pass


class CurveViolation(ParamsError):
    pass


class RangeViolation(ParamsError):
    pass


class DimensionTooSmall(ParamsError):
    pass


class BadGrid(ValueError):
    pass


@dataclass(frozen=True)
class Params:
    d: int
    m1: float
    m2: float
    alpha_d: float
    c_d: float
    surface_d: float
    curve_tol: float = 1e-12

    @property
    def symmetric(self) -> bool:
        ms = 2.0 * self.d / (self.d + 2.0)
        return abs(self.m1 - ms) <= self.curve_tol and abs(self.m2 - ms) <= self.curve_tol

    @property
    def scaling_exponents(self) -> tuple[float, float]:
        """Amplitude exponents (for u, for v) of the dilation family u -> lam^a u(lam x)."""
        den = self.m1 + self.m2 - self.m1 * self.m2
        return 2.0 * self.m2 / den, 2.0 * self.m1 / den

    @property
    def preserved_exponents(self) -> tuple[float, float]:
        """Lebesgue exponents (p1, p2) left invariant by the dilation family."""
        den = self.m1 + self.m2 - self.m1 * self.m2
        return den * self.d / (2.0 * self.m2), den * self.d / (2.0 * self.m1)


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def partner_exponent(d: int, m1: float) -> float:
    """Solve 1/m1 + 1/m2 = (d+2)/d for m2."""
    return 1.0 / ((d + 2.0) / d - 1.0 / m1)


def validate_params(d: int, m1: float, m2: float, curve_tol: float = 1e-12) -> Params:
    if d < 3:
        raise DimensionTooSmall(f"d={d}: the model needs d >= 3")
    upper = 2.0 - 2.0 / d
    for name, m in (("m1", m1), ("m2", m2)):
        if not 1.0 < m < upper:
            raise RangeViolation(f"{name}={m} outside (1, {upper})")
    gap = abs(1.0 / m1 + 1.0 / m2 - (d + 2.0) / d)
    if gap > curve_tol:
        raise CurveViolation(f"|1/m1 + 1/m2 - (d+2)/d| = {gap:.3e} > {curve_tol:.1e}")
    alpha = unit_ball_volume(d)
    return Params(
        d=int(d),
        m1=float(m1),
        m2=float(m2),
        alpha_d=alpha,
        c_d=1.0 / (d * (d - 2.0) * alpha),
        surface_d=d * alpha,
        curve_tol=curve_tol,
    )


def symmetric_params(d: int = 3) -> Params:
    m = 2.0 * d / (d + 2.0)
    return validate_params(d, m, m)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    r: np.ndarray
    r_edges: np.ndarray
    r_max: float
    weights: np.ndarray
    d: int
    stretch: float = 1.0

    @property
    def n(self) -> int:
        return self.r.size

    @property
    def dr(self) -> np.ndarray:
        return np.diff(self.r_edges)

    @property
    def spec(self) -> dict:
        return {"d": self.d, "r_max": self.r_max, "n": self.n, "stretch": self.stretch}


def make_grid(r_max: float, n: int, stretch: float = 1.0, d: int = 3) -> RadialGrid:
    """Cell-centred radial grid on [0, r_max].

    With ``stretch > 1`` consecutive cell widths grow geometrically by that
    ratio. Cell weights are the exact shell volumes in R^d.
    """
    if not r_max > 0:
        raise BadGrid(f"r_max must be positive, got {r_max}")
    if n < 16:
        raise BadGrid(f"need at least 16 cells, got {n}")
    if stretch < 1:
        raise BadGrid(f"stretch must be >= 1, got {stretch}")
    if stretch == 1.0:
        edges = np.linspace(0.0, r_max, n + 1)
    else:
        widths = stretch ** np.arange(n)
        edges = np.concatenate(([0.0], np.cumsum(widths)))
        edges *= r_max / edges[-1]
        edges[-1] = r_max
    return grid_from_edges(edges, d=d, stretch=stretch)


def grid_from_edges(edges: np.ndarray, d: int = 3, stretch: float = 1.0) -> RadialGrid:
    edges = np.asarray(edges, dtype=float)
    if edges[0] != 0.0 or np.any(np.diff(edges) <= 0):
        raise BadGrid("edges must start at 0 and increase strictly")
    # centre of each shell = midpoint; inside the cell for any widths
    r = 0.5 * (edges[1:] + edges[:-1])
    weights = unit_ball_volume(d) * np.diff(edges**d)
    return RadialGrid(r=r, r_edges=edges, r_max=float(edges[-1]), weights=weights, d=d, stretch=float(stretch))


def extend_grid(grid: RadialGrid, factor: float = 1e4, ratio: float = 1.03) -> RadialGrid:
    """Append geometrically widening cells from r_max out to ``factor * r_max``.

    The first n cells coincide with ``grid``.
    """
    w = grid.r_edges[-1] - grid.r_edges[-2]
    outer = [grid.r_max]
    while outer[-1] < factor * grid.r_max:
        w *= ratio
        outer.append(outer[-1] + w)
    return grid_from_edges(np.concatenate((grid.r_edges, outer[1:])), d=grid.d, stretch=grid.stretch)


class FieldKind(Enum):
    DENSITY = "density"
    POTENTIAL = "potential"


@dataclass(eq=False)
class RadialField:
    grid: RadialGrid
    values: np.ndarray
    kind: FieldKind = FieldKind.DENSITY

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.r.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid ({self.grid.n},)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field has non-finite values")
        if self.kind is FieldKind.DENSITY and np.any(self.values < 0):
            raise ValueError("density field has negative values")

    @classmethod
    def from_function(cls, grid: RadialGrid, f, kind: FieldKind = FieldKind.DENSITY) -> "RadialField":
        return cls(grid, np.asarray(f(grid.r), dtype=float), kind)

    @classmethod
    def zeros(cls, grid: RadialGrid) -> "RadialField":
        return cls(grid, np.zeros(grid.n))

    def scaled(self, a: float) -> "RadialField":
        return RadialField(self.grid, a * self.values, self.kind)

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0
