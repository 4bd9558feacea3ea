"""Shared numerical kernels.

Lattice grids covering centered balls, ball averages and Lebesgue-measure
helpers, adaptive 1-D quadrature, and bisection inversion of monotone
functions.  Everything in this module is a pure function of its inputs and
deterministic, so all operations are safe to call concurrently.

Conventions
-----------
* Grids are the integer lattice ``i * h`` restricted to the closed Euclidean
  ball of radius ``R``;  point ordering is lexicographic in the integer
  multi-index, which makes it reproducible across runs.
* Ball membership tests carry a relative slack of 1e-12 so that lattice
  points that lie exactly on the sphere are kept regardless of rounding.
* Integrals over a grid are plain Riemann sums ``sum(values) * h**d``; the
  error is controlled by ``h`` and is reported by the callers that assemble
  inequality verdicts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NumericsError",
    "GridError",
    "EmptyBallError",
    "QuadratureBudgetError",
    "BracketError",
    "InversionError",
    "PointGrid",
    "QuadratureResult",
    "make_grid",
    "ball_average",
    "ball_measure",
    "grid_integral",
    "integrate_1d",
    "invert_monotone",
]

# closed-ball membership slack, relative
MEMBERSHIP_SLACK = 1e-12

# volume of the unit ball per dimension (desk scale stops at d = 3)
BALL_VOLUME_COEFF = {1: 2.0, 2: float(np.pi), 3: 4.0 * float(np.pi) / 3.0}


class NumericsError(Exception):
    """Base class for failures of the numerical kernels."""


class GridError(NumericsError):
    """Invalid grid construction parameters."""


class EmptyBallError(NumericsError):
    """A ball average was requested over a ball containing no grid point."""


class QuadratureBudgetError(NumericsError):
    """Adaptive quadrature did not converge within its node budget."""


class BracketError(NumericsError):
    """Target value lies outside the bracket of a monotone inversion."""


class InversionError(NumericsError):
    """Bisection failed to reach the requested tolerance."""


@dataclass(frozen=True)
class PointGrid:
    """Lattice points ``i * h`` inside the closed ball ``B(radius)``.

    ``indices`` has shape (n, d) with integer entries, ordered
    lexicographically; ``points`` is ``indices * spacing``.  Instances are
    immutable after construction.
    """

    dimension: int
    spacing: float
    radius: float
    indices: np.ndarray
    points: np.ndarray

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dimension

    @property
    def n_points(self) -> int:
        return int(self.points.shape[0])

    def coords(self) -> np.ndarray:
        """Flat coordinate view, shape (n,) in d = 1 and (n, d) otherwise."""
        if self.dimension == 1:
            return self.points[:, 0]
        return self.points

    def __eq__(self, other) -> bool:  # structural equality for mesh checks
        if not isinstance(other, PointGrid):
            return NotImplemented
        return (
            self.dimension == other.dimension
            and self.spacing == other.spacing
            and self.radius == other.radius
            and np.array_equal(self.indices, other.indices)
        )


@dataclass(frozen=True)
class QuadratureResult:
    """Adaptive quadrature outcome: value, error estimate, node count."""

    value: float
    error: float
    nodes: int

    def __post_init__(self):
        if self.error < 0.0 or self.nodes < 1:
            raise NumericsError("quadrature result invariants violated")


def make_grid(dimension: int, radius: float, spacing: float) -> PointGrid:
    """Build the lattice grid covering the centered ball ``B(radius)``.

    Rejects ``spacing >= radius`` (a degenerate grid that cannot resolve the
    ball) and dimensions outside 1..3.
    """
    if dimension not in (1, 2, 3):
        raise GridError(f"dimension must be 1, 2 or 3, got {dimension}")
    if radius <= 0.0 or spacing <= 0.0:
        raise GridError("radius and spacing must be positive")
    if spacing >= radius:
        raise GridError(
            f"spacing {spacing} must be smaller than radius {radius}"
        )
    m = int(np.floor(radius / spacing * (1.0 + MEMBERSHIP_SLACK)))
    axis = np.arange(-m, m + 1, dtype=np.int64)
    mesh = np.meshgrid(*([axis] * dimension), indexing="ij")
    indices = np.stack(mesh, axis=-1).reshape(-1, dimension)
    sq = np.sum((indices.astype(np.float64) * spacing) ** 2, axis=1)
    keep = sq <= radius * radius * (1.0 + MEMBERSHIP_SLACK)
    indices = indices[keep]
    points = indices.astype(np.float64) * spacing
    return PointGrid(dimension, float(spacing), float(radius), indices, points)


def ball_measure(dimension: int, radius: float) -> float:
    """Lebesgue measure of a ball of the given radius."""
    if dimension not in BALL_VOLUME_COEFF:
        raise GridError(f"dimension must be 1, 2 or 3, got {dimension}")
    if radius < 0.0:
        raise GridError("radius must be nonnegative")
    return BALL_VOLUME_COEFF[dimension] * radius**dimension


def ball_points_mask(grid: PointGrid, center, radius: float) -> np.ndarray:
    """Boolean mask of grid points inside the closed ball B(center, radius)."""
    c = np.atleast_1d(np.asarray(center, dtype=np.float64))
    if c.shape != (grid.dimension,):
        raise GridError(
            f"center must have {grid.dimension} coordinates, got {c.shape}"
        )
    sq = np.sum((grid.points - c[None, :]) ** 2, axis=1)
    return sq <= radius * radius * (1.0 + MEMBERSHIP_SLACK)


def ball_average(
    grid: PointGrid, samples: np.ndarray, center, radius: float
) -> float:
    """Average of sampled values over grid points in ``B(center, radius)``.

    This is the discrete counterpart of the dashed-integral average; the
    error is first order in the grid spacing for Lipschitz integrands.
    """
    if radius <= 0.0:
        raise GridError("ball radius must be positive")
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[0] != grid.n_points:
        raise GridError("samples length does not match grid")
    mask = ball_points_mask(grid, center, radius)
    if not mask.any():
        raise EmptyBallError(
            f"no grid point inside ball of radius {radius} at {center}"
        )
    return float(samples[mask].mean())


def grid_integral(grid: PointGrid, samples: np.ndarray) -> float:
    """Riemann sum of sampled values over the grid, ``sum * h**d``."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[0] != grid.n_points:
        raise GridError("samples length does not match grid")
    return float(samples.sum() * grid.cell_volume)


def integrate_1d(
    f,
    a: float,
    b: float,
    tol: float,
    max_nodes: int = 1_000_000,
) -> QuadratureResult:
    """Adaptive Simpson quadrature of ``f`` on [a, b].

    Interval bisection with the classical |S2 - S1|/15 error estimate and a
    hard node budget (default 1e6 evaluations).  Exact for polynomials of
    degree <= 3.  Raises :class:`QuadratureBudgetError` when the budget is
    exhausted before every subinterval meets its share of ``tol``.
    """
    if not tol > 0.0:
        raise NumericsError("tol must be positive")
    if a > b:
        raise NumericsError("integration bounds must satisfy a <= b")
    if a == b:
        return QuadratureResult(0.0, 0.0, 1)

    fa = float(f(a))
    fb = float(f(b))
    m = 0.5 * (a + b)
    fm = float(f(m))
    if not (np.isfinite(fa) and np.isfinite(fb) and np.isfinite(fm)):
        raise NumericsError("integrand is not finite on [a, b]")
    nodes = 3
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    # stack entries: (a, m, b, fa, fm, fb, simpson(a, b), local tol)
    stack = [(a, m, b, fa, fm, fb, whole, tol)]
    total = 0.0
    err = 0.0
    min_width = abs(b - a) * 1e-15
    while stack:
        xa, xm, xb, ya, ym, yb, s_coarse, loc_tol = stack.pop()
        lm = 0.5 * (xa + xm)
        rm = 0.5 * (xm + xb)
        yl = float(f(lm))
        yr = float(f(rm))
        nodes += 2
        if nodes > max_nodes:
            raise QuadratureBudgetError(
                f"node budget {max_nodes} exceeded before reaching tol {tol}"
            )
        s_left = (xm - xa) / 6.0 * (ya + 4.0 * yl + ym)
        s_right = (xb - xm) / 6.0 * (ym + 4.0 * yr + yb)
        s_fine = s_left + s_right
        diff = s_fine - s_coarse
        if abs(diff) <= 15.0 * loc_tol or (xb - xa) <= min_width:
            total += s_fine + diff / 15.0
            err += abs(diff) / 15.0
        else:
            half = 0.5 * loc_tol
            stack.append((xa, lm, xm, ya, yl, ym, s_left, half))
            stack.append((xm, rm, xb, ym, yr, yb, s_right, half))
    return QuadratureResult(total, err, nodes)


def invert_monotone(
    f,
    target: float,
    lo: float,
    hi: float,
    tol: float,
    max_iter: int = 200,
) -> float:
    """Solve ``f(x) = target`` for increasing ``f`` on [lo, hi] by bisection.

    Bisection is used instead of Newton because it is unconditionally robust
    near steep or nearly flat regions.  Returns x with |f(x) - target| <= tol.
    """
    if not tol > 0.0:
        raise NumericsError("tol must be positive")
    if lo > hi:
        raise BracketError("bracket must satisfy lo <= hi")
    flo = float(f(lo))
    fhi = float(f(hi))
    scale = max(abs(flo), abs(fhi), abs(target), 1.0)
    slack = scale * 1e-12
    if target < flo - slack or target > fhi + slack:
        raise BracketError(
            f"target {target} outside bracket values [{flo}, {fhi}]"
        )
    if abs(flo - target) <= tol:
        return lo
    if abs(fhi - target) <= tol:
        return hi
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        x = 0.5 * (lo + hi)
        fx = float(f(x))
        if abs(fx - target) <= tol:
            return x
        if fx < target:
            lo = x
        else:
            hi = x
        if hi - lo <= abs(x) * 1e-16:
            break
    fx = float(f(x))
    if abs(fx - target) <= tol:
        return x
    raise InversionError(
        f"bisection stalled at residual {abs(fx - target)} > tol {tol}"
    )
