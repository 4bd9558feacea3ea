"""Ensemble integration of dX/dt = b_t(X) and flow-level measurements.

Trajectories start from every point of a lattice ball grid and are advanced
with classical fixed-step RK4.  A fixed uniform time mesh keeps ensembles
directly comparable: sup distances, the ball-average functionals and the
translation functionals all consume the stored ``(point, time, coordinate)``
position array.

Integration is data-parallel across initial points; a trajectory that ever
produces a non-finite field value keeps NaN positions from that step on and
is flagged, while the rest of the ensemble completes.

The limit flow of a rough field is represented downstream by its
highest-level mollified ensemble together with the Cauchy-tail diagnostics;
no separate object exists for it.  A discrete mesh cannot certify absolute
continuity in time, so the integral-equation residual check in the test
suite stands in for it.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .fields import VectorField
from .numerics import GridError, PointGrid, make_grid

__all__ = [
    "FlowError",
    "TrajectoryEnsemble",
    "CompressibilityEstimate",
    "integrate_ensemble",
    "sup_distance",
    "subsample_times",
    "compressibility",
    "save_ensemble",
    "load_ensemble",
]

GROWTH_SLACK_STEPS = 10.0  # growth bound slack, in units of tau


class FlowError(Exception):
    """Invalid ensemble construction or combination."""


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Flow maps sampled on a grid of initial conditions over a time mesh.

    ``positions`` has shape (n_points, n_times, d); positions at the first
    mesh time equal the grid points exactly.  ``flags`` marks trajectories
    aborted by non-finite field evaluations.
    """

    grid: PointGrid
    times: np.ndarray
    positions: np.ndarray
    flags: np.ndarray
    field_id: str
    mollification_level: int | None
    sup_bound: float
    tau: float
    method: str = "rk4"

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_times(self) -> int:
        return int(len(self.times))

    def growth_radius(self) -> float:
        """R + T ||b|| + 10 tau, the bound every trajectory must respect."""
        return (
            self.grid.radius
            + self.horizon * self.sup_bound
            + GROWTH_SLACK_STEPS * self.tau
        )

    def same_mesh(self, other: "TrajectoryEnsemble") -> bool:
        return (
            self.grid == other.grid
            and self.times.shape == other.times.shape
            and np.allclose(self.times, other.times, rtol=0.0, atol=1e-12)
        )

    def time_index(self, t: float) -> int:
        idx = int(round(t / self.tau))
        if idx < 0 or idx >= self.n_times or abs(idx * self.tau - t) > 1e-9:
            raise FlowError(f"time {t} is not on the mesh")
        return idx


@dataclass(frozen=True)
class CompressibilityEstimate:
    """Histogram push-forward bound and the analytic exponential when known."""

    cell_size: float
    l_hat: float
    argmax_time_index: int
    argmax_cell: int
    analytic: float | None

    def __post_init__(self):
        if not self.l_hat > 0.0:
            raise FlowError("histogram compressibility must be positive")


def integrate_ensemble(
    field: VectorField,
    grid: PointGrid,
    horizon: float,
    tau: float,
) -> TrajectoryEnsemble:
    """Classical RK4 over every grid point, storing all mesh positions."""
    if field.dimension != grid.dimension:
        raise FlowError("field and grid dimensions differ")
    if tau <= 0.0 or horizon <= 0.0:
        raise FlowError("horizon and step must be positive")
    n_steps = int(round(horizon / tau))
    if abs(n_steps * tau - horizon) > 1e-9 * max(1.0, horizon):
        raise FlowError(f"horizon/step = {horizon}/{tau} is not an integer")
    times = np.arange(n_steps + 1, dtype=np.float64) * tau
    n = grid.n_points
    d = grid.dimension
    positions = np.empty((n, n_steps + 1, d), dtype=np.float64)
    x = grid.points.copy()
    positions[:, 0, :] = x
    ev = field.evaluator
    half = 0.5 * tau
    sixth = tau / 6.0
    for step in range(n_steps):
        t = times[step]
        k1 = ev(t, x)
        k2 = ev(t + half, x + half * k1)
        k3 = ev(t + half, x + half * k2)
        k4 = ev(t + tau, x + tau * k3)
        x = x + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        positions[:, step + 1, :] = x
    flags = ~np.isfinite(positions).all(axis=(1, 2))
    return TrajectoryEnsemble(
        grid,
        times,
        positions,
        flags,
        field.catalog_id,
        field.mollification_level,
        field.sup_bound,
        float(tau),
    )


def sup_distance(a: TrajectoryEnsemble, b: TrajectoryEnsemble) -> np.ndarray:
    """Per initial point, max over mesh times of |X_t(x) - X~_t(x)|."""
    if not a.same_mesh(b):
        raise FlowError("ensembles must share the initial grid and time mesh")
    diff = a.positions - b.positions
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    return dist.max(axis=1)


def subsample_times(ensemble: TrajectoryEnsemble, stride: int) -> TrajectoryEnsemble:
    """Restrict an ensemble to every ``stride``-th mesh time.

    Aligns a finer-step run with a coarser mesh so the two can be compared
    on their common times (for example a step-halving uniqueness check).
    """
    if stride < 1 or (ensemble.n_times - 1) % stride != 0:
        raise FlowError("stride must divide the number of steps")
    tau = ensemble.tau * stride
    times = np.arange((ensemble.n_times - 1) // stride + 1) * tau
    return TrajectoryEnsemble(
        ensemble.grid,
        times,
        ensemble.positions[:, ::stride, :],
        ensemble.flags,
        ensemble.field_id,
        ensemble.mollification_level,
        ensemble.sup_bound,
        tau,
        ensemble.method,
    )


def compressibility(
    ensemble: TrajectoryEnsemble,
    cell_size: float,
    analytic: float | None = None,
) -> CompressibilityEstimate:
    """Histogram estimate of the push-forward density bound.

    Bins every time slice into cells of the given size; the estimate is the
    max over times and cells of (points in cell * h^d) / cell volume.  The
    histogram carries about 20% binning noise at desk scale, so the analytic
    exponential divergence bound remains the authoritative constant in
    reports.
    """
    grid = ensemble.grid
    if cell_size < 2.0 * grid.spacing:
        raise FlowError("cell size must be at least twice the grid spacing")
    reach = ensemble.growth_radius() + cell_size
    edges = np.arange(-reach, reach + cell_size, cell_size)
    n_cells_axis = len(edges) - 1
    d = grid.dimension
    mass_unit = grid.cell_volume / cell_size**d
    good = ~ensemble.flags
    best = 0.0
    best_t = 0
    best_cell = 0
    for ti in range(ensemble.n_times):
        pts = ensemble.positions[good, ti, :]
        idx = np.clip(
            np.floor((pts + reach) / cell_size).astype(np.int64),
            0,
            n_cells_axis - 1,
        )
        flat = idx[:, 0]
        for j in range(1, d):
            flat = flat * n_cells_axis + idx[:, j]
        counts = np.bincount(flat)
        top = int(counts.argmax())
        val = counts[top] * mass_unit
        if val > best:
            best, best_t, best_cell = float(val), ti, top
    return CompressibilityEstimate(
        float(cell_size), best, best_t, best_cell, analytic
    )


# --------------------------------------------------------------------------
# portable serialization: CSV positions + JSON-style sidecar metadata
# --------------------------------------------------------------------------


def save_ensemble(ensemble: TrajectoryEnsemble, csv_path, meta_path) -> None:
    d = ensemble.grid.dimension
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["point_index", "time_index"]
            + [f"x{j + 1}" for j in range(d)]
            + ["flag"]
        )
        for pi in range(ensemble.grid.n_points):
            flag = int(ensemble.flags[pi])
            for ti in range(ensemble.n_times):
                row = [pi, ti]
                row += [repr(float(c)) for c in ensemble.positions[pi, ti]]
                row.append(flag)
                writer.writerow(row)
    meta = {
        "field": ensemble.field_id,
        "n": ensemble.mollification_level,
        "tau": ensemble.tau,
        "T": ensemble.horizon,
        "R": ensemble.grid.radius,
        "h": ensemble.grid.spacing,
        "d": d,
        "sup_bound": ensemble.sup_bound,
        "method": ensemble.method,
    }
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_ensemble(csv_path, meta_path) -> TrajectoryEnsemble:
    with open(meta_path) as fh:
        meta = json.load(fh)
    grid = make_grid(int(meta["d"]), float(meta["R"]), float(meta["h"]))
    tau = float(meta["tau"])
    n_steps = int(round(meta["T"] / tau))
    times = np.arange(n_steps + 1, dtype=np.float64) * tau
    d = int(meta["d"])
    positions = np.empty((grid.n_points, n_steps + 1, d))
    flags = np.zeros(grid.n_points, dtype=bool)
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["point_index", "time_index"]:
            raise FlowError("unrecognized ensemble CSV header")
        for row in reader:
            pi, ti = int(row[0]), int(row[1])
            positions[pi, ti, :] = [float(v) for v in row[2 : 2 + d]]
            flags[pi] = bool(int(row[2 + d]))
    return TrajectoryEnsemble(
        grid,
        times,
        positions,
        flags,
        str(meta["field"]),
        meta["n"] if meta["n"] is None else int(meta["n"]),
        float(meta["sup_bound"]),
        tau,
        str(meta["method"]),
    )
