"""Measured left and right sides for the quantitative flow estimates.

Five families of checks, each emitting :class:`EstimateReport`:

* ``thm31``   a-priori stability of two flows in the psi_delta functional
* ``cauchy``  the mollification Cauchy-sequence bound and its delta_{n,m}
* ``thm41``   the regularity set E with its uniform modulus bound
* ``prop43``  the ball-average compactness functional a(r, R, X)
* ``thm44``   the translation estimate with its vanishing g(r) table

Verdicts use multiplicative slack (default 5%) plus a declared additive
budget assembled from the discretization parameters (grid spacing, series
truncation, integrator step).  The right sides are computed from recorded
sup bounds and analytic divergence data, both of which are conservative, so
a passing verdict never leans on an optimistic constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import (
    VectorField,
    WitnessFunction,
    compressibility_constant,
    weak_type_check,
)
from .flow import TrajectoryEnsemble, sup_distance
from .modulus import ModulusOfContinuity, PsiFunctional
from .numerics import (
    MEMBERSHIP_SLACK,
    PointGrid,
    ball_measure,
    grid_integral,
    make_grid,
)
from .reporting import EstimateReport, make_report

__all__ = [
    "EstimateError",
    "RegularitySet",
    "CauchyTable",
    "TranslationConstants",
    "lens_constant",
    "field_l1_distance",
    "stability_report",
    "cauchy_diagnostic",
    "regularity_Q",
    "regularity_set",
    "compactness_a",
    "translation_constants",
    "translation_functional",
]

DEFAULT_SLACK = 0.05

# ratio of a ball's volume to its intersection with an equal ball centered
# one radius away; interval/lens/spindle geometry per dimension
LENS_CONSTANT = {
    1: 2.0,
    2: math.pi / (2.0 * math.pi / 3.0 - math.sqrt(3.0) / 2.0),
    3: 16.0 / 5.0,
}


class EstimateError(Exception):
    """Invalid estimate configuration."""


def lens_constant(dimension: int) -> float:
    if dimension not in LENS_CONSTANT:
        raise EstimateError("lens constant known for d = 1, 2, 3 only")
    return LENS_CONSTANT[dimension]


# --------------------------------------------------------------------------
# shared helpers
# --------------------------------------------------------------------------


def field_l1_distance(
    fa: VectorField,
    fb: VectorField,
    times: np.ndarray,
    grid: PointGrid,
) -> float:
    """||b - b~||_L1([t0, t1] x grid ball), trapezoid in t, Riemann in x."""
    times = np.asarray(times, dtype=np.float64)

    def slice_norm(t: float) -> float:
        diff = fa(t, grid.points) - fb(t, grid.points)
        return grid_integral(grid, np.sqrt(np.sum(diff * diff, axis=1)))

    if fa.autonomous and fb.autonomous:
        return float((times[-1] - times[0]) * slice_norm(times[0]))
    vals = np.array([slice_norm(t) for t in times])
    return float(np.trapezoid(vals, times))


def _require_witness(field: VectorField) -> WitnessFunction:
    if field.witness is None:
        raise EstimateError(f"field {field.catalog_id!r} carries no witness")
    return field.witness


def _require_modulus(field: VectorField) -> ModulusOfContinuity:
    if field.modulus is None:
        raise EstimateError(f"field {field.catalog_id!r} carries no modulus")
    return field.modulus


def _center_mask(grid: PointGrid, radius: float) -> np.ndarray:
    return (
        np.sqrt(np.sum(grid.points**2, axis=1))
        <= radius * (1.0 + MEMBERSHIP_SLACK)
    )


def _additive_budget(
    grid: PointGrid,
    field: VectorField,
    tau: float,
    delta: float,
    region_measure: float,
) -> dict:
    """Declared discretization allowances added to the slack.

    Series truncation shifts both flows by at most T/terms, the integrator
    contributes O(tau^4), and each adaptive psi evaluation carries its
    quadrature tolerance; all three are scaled by the worst psi slope 1/delta
    over the integration region.
    """
    terms = field.params.get("terms")
    horizon_scale = region_measure / max(delta, 1e-300)
    trunc = 2.0 / terms * horizon_scale if terms else 0.0
    rk4 = tau**4 * horizon_scale
    quad = 1e-8 * grid.n_points * grid.cell_volume
    return {
        "budget_truncation": trunc,
        "budget_rk4": rk4,
        "budget_quadrature": quad,
        "additive_total": trunc + rk4 + quad,
    }


# --------------------------------------------------------------------------
# theorem 3.1: a-priori stability
# --------------------------------------------------------------------------


def stability_report(
    field_a: VectorField,
    field_b: VectorField,
    ens_a: TrajectoryEnsemble,
    ens_b: TrajectoryEnsemble,
    region_radius: float,
    delta: float | None = None,
    slack: float = DEFAULT_SLACK,
    witness_choice: str = "a",
) -> EstimateReport:
    """Stability inequality: psi_delta of the sup distance vs witness norms.

    LHS integrates psi_delta(sup_t |X - X~|) over B(region_radius); RHS is
    (L + L~) ||g|| + (L~/delta) ||b - b~|| with both L1 norms over
    [0, T] x B(R_bar), R_bar = R + T max(||b||, ||b~||).  The witness g is
    the first field's by default (the theorem's reading); pass
    ``witness_choice="b"`` to use the second field's, which is recorded in
    the constants either way.
    """
    if not ens_a.same_mesh(ens_b):
        raise EstimateError("ensembles must share grid and mesh")
    if witness_choice not in ("a", "b"):
        raise EstimateError("witness_choice must be 'a' or 'b'")
    modulus = _require_modulus(field_a)
    cross = (
        field_b.modulus is not None
        and field_b.modulus.kind != modulus.kind
    )
    horizon = ens_a.horizon
    grid = ens_a.grid
    if grid.radius < region_radius * (1.0 - MEMBERSHIP_SLACK):
        raise EstimateError("ensemble grid does not cover the report region")
    r_bar = region_radius + horizon * max(field_a.sup_bound, field_b.sup_bound)
    norm_grid = make_grid(grid.dimension, r_bar, grid.spacing)
    if delta is None:
        delta = field_l1_distance(field_a, field_b, ens_a.times, norm_grid)
    if not delta > 0.0:
        raise EstimateError("delta must be positive (fields coincide?)")

    psi = PsiFunctional(modulus, float(delta))
    mask = _center_mask(grid, region_radius)
    sup = sup_distance(ens_a, ens_b)[mask]
    lhs = float(
        sum(psi.psi(float(v)) for v in sup) * grid.cell_volume
    )

    witness = _require_witness(field_a if witness_choice == "a" else field_b)
    g_norm = witness.l1_norm(ens_a.times, norm_grid)
    b_dist = field_l1_distance(field_a, field_b, ens_a.times, norm_grid)
    l_a = compressibility_constant(field_a, norm_grid, horizon)
    l_b = compressibility_constant(field_b, norm_grid, horizon)
    rhs = (l_a + l_b) * g_norm + l_b / delta * b_dist

    region_measure = ball_measure(grid.dimension, region_radius)
    budget = _additive_budget(grid, field_a, ens_a.tau, delta, region_measure)
    constants = {
        "L": l_a,
        "L_tilde": l_b,
        "delta": delta,
        "R": region_radius,
        "R_bar": r_bar,
        "g_norm": g_norm,
        "b_l1_distance": b_dist,
        "witness_choice": witness_choice,
        "cross_modulus": cross,
        **budget,
    }
    metadata = {
        "field": field_a.catalog_id,
        "n": ens_a.mollification_level,
        "m": ens_b.mollification_level,
        "h": grid.spacing,
        "tau": ens_a.tau,
        "K": field_a.params.get("terms", ""),
    }
    return make_report(
        "thm31",
        lhs,
        rhs,
        constants,
        metadata,
        slack=slack,
        additive=budget["additive_total"],
    )


# --------------------------------------------------------------------------
# theorem 3.2: Cauchy construction diagnostics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CauchyTable:
    """Per-pair mollification diagnostics for the Cauchy construction."""

    levels: list
    pairs: list  # (n, m) with n < m
    deltas: np.ndarray  # ||b^n - b^m||_L1
    distances: np.ndarray  # D_{n,m} = integral of the sup distance
    psi_eta: np.ndarray
    bounds: np.ndarray
    eta: float
    constant: float  # C = 2 L ||g|| + L


def cauchy_diagnostic(
    base_field: VectorField,
    moll_fields: list,
    ensembles: list,
    eta: float,
    region_radius: float,
    slack: float = DEFAULT_SLACK,
):
    """Cauchy-sequence bound for the mollified flows.

    For each level pair (n, m): delta_{n,m} = ||b^n - b^m||_L1, the flow
    gap D_{n,m} integrated over B(R), and the bound
    eta |B(R)| + 2 R_bar C / psi_{delta_{n,m}}(eta) with
    C = 2 L ||g||_L1([0,T] x B(R_bar + 1)) + L built from the base witness
    and the base compressibility bound.
    """
    if len(moll_fields) < 3:
        raise EstimateError("need at least 3 mollification levels")
    if len(moll_fields) != len(ensembles):
        raise EstimateError("fields and ensembles must align")
    first = ensembles[0]
    for ens in ensembles[1:]:
        if not ens.same_mesh(first):
            raise EstimateError("ensembles must share a common mesh")
    if not eta > 0.0:
        raise EstimateError("eta must be positive")
    modulus = _require_modulus(base_field)
    witness = _require_witness(base_field)
    horizon = first.horizon
    grid = first.grid
    r_bar = region_radius + horizon * base_field.sup_bound
    norm_grid = make_grid(grid.dimension, r_bar, grid.spacing)
    wide_grid = make_grid(grid.dimension, r_bar + 1.0, grid.spacing)
    base_l = compressibility_constant(base_field, wide_grid, horizon)
    g_norm_wide = witness.l1_norm(first.times, wide_grid)
    constant = 2.0 * base_l * g_norm_wide + base_l

    mask = _center_mask(grid, region_radius)
    region_measure = ball_measure(grid.dimension, region_radius)
    levels = [f.mollification_level for f in moll_fields]
    pairs, deltas, dists, psis, bounds, reports = [], [], [], [], [], []
    for i in range(len(moll_fields)):
        for j in range(i + 1, len(moll_fields)):
            fn, fm = moll_fields[i], moll_fields[j]
            en, em = ensembles[i], ensembles[j]
            delta_nm = field_l1_distance(fn, fm, first.times, norm_grid)
            d_nm = float(
                np.sum(sup_distance(en, em)[mask]) * grid.cell_volume
            )
            psi_val = PsiFunctional(modulus, max(delta_nm, 1e-300)).psi(eta)
            bound = eta * region_measure + 2.0 * r_bar * constant / psi_val
            budget = _additive_budget(
                grid, base_field, first.tau, eta, region_measure
            )
            constants = {
                "delta_nm": delta_nm,
                "eta": eta,
                "psi_delta_eta": psi_val,
                "C": constant,
                "L": base_l,
                "R": region_radius,
                "R_bar": r_bar,
                "g_norm_wide": g_norm_wide,
                **budget,
            }
            metadata = {
                "field": base_field.catalog_id,
                "n": levels[i],
                "m": levels[j],
                "h": grid.spacing,
                "tau": first.tau,
                "K": base_field.params.get("terms", ""),
            }
            reports.append(
                make_report(
                    "cauchy",
                    d_nm,
                    bound,
                    constants,
                    metadata,
                    slack=slack,
                    additive=budget["additive_total"],
                )
            )
            pairs.append((levels[i], levels[j]))
            deltas.append(delta_nm)
            dists.append(d_nm)
            psis.append(psi_val)
            bounds.append(bound)
    table = CauchyTable(
        levels,
        pairs,
        np.asarray(deltas),
        np.asarray(dists),
        np.asarray(psis),
        np.asarray(bounds),
        float(eta),
        constant,
    )
    return table, reports


# --------------------------------------------------------------------------
# theorem 4.1: regularity functional, set E, uniform modulus
# --------------------------------------------------------------------------


def regularity_Q(
    ensemble: TrajectoryEnsemble,
    modulus: ModulusOfContinuity,
    x,
    radius: float,
    t: float,
) -> float:
    """Ball average of psi_r(|X_t(x) - X_t(y)|) over grid points y in B(x, r).

    ``x`` must be a grid point whose ball stays inside the sampled region.
    """
    grid = ensemble.grid
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if radius <= 0.0:
        raise EstimateError("radius must be positive")
    if np.sqrt(np.sum(x * x)) + radius > grid.radius * (1 + 1e-9):
        raise EstimateError("x is not interior for this radius")
    hit = np.flatnonzero(np.all(np.abs(grid.points - x) < 1e-12, axis=1))
    if len(hit) != 1:
        raise EstimateError("x must be a grid point")
    ti = ensemble.time_index(t)
    mask = (
        np.sum((grid.points - x) ** 2, axis=1)
        <= radius * radius * (1.0 + MEMBERSHIP_SLACK)
    )
    xt = ensemble.positions[hit[0], ti, :]
    yt = ensemble.positions[mask, ti, :]
    dist = np.sqrt(np.sum((yt - xt[None, :]) ** 2, axis=1))
    psi = PsiFunctional(modulus, float(radius))
    xi_max = 2.0 * ensemble.growth_radius() + 1.0
    return float(psi.psi_values(dist, xi_max=xi_max).mean())


def _q_sweep_1d(
    ensemble: TrajectoryEnsemble,
    modulus: ModulusOfContinuity,
    radii,
    center_radius: float,
):
    """sup_t Q(t, x, r) for every center x in B(center_radius), per radius.

    1-d fast path: the ball around a center is a contiguous index window, so
    the ball averages accumulate over index offsets, vectorized across all
    centers and mesh times at once.
    """
    grid = ensemble.grid
    if grid.dimension != 1:
        raise EstimateError("sweep fast path requires d = 1")
    pos = ensemble.positions[:, :, 0]
    n = grid.n_points
    h = grid.spacing
    mask = _center_mask(grid, center_radius)
    rows = np.flatnonzero(mask)
    i0, i1 = int(rows[0]), int(rows[-1]) + 1
    xi_max = 2.0 * ensemble.growth_radius() + 1.0
    out = {}
    for r in radii:
        w = int(np.floor(r / h * (1.0 + MEMBERSHIP_SLACK)))
        psi = PsiFunctional(modulus, float(r))
        acc = np.zeros((i1 - i0, ensemble.n_times))
        cnt = np.ones(i1 - i0)  # the center itself, psi(0) = 0
        for k in range(-w, w + 1):
            if k == 0:
                continue
            a = max(i0, -k)
            b = min(i1, n - k)
            if a >= b:
                continue
            diff = np.abs(pos[a + k : b + k, :] - pos[a:b, :])
            vals = psi.psi_values(diff.ravel(), xi_max=xi_max)
            acc[a - i0 : b - i0, :] += vals.reshape(diff.shape)
            cnt[a - i0 : b - i0] += 1.0
        q_sup = (acc / cnt[:, None]).max(axis=1)
        out[float(r)] = q_sup
    return rows, out


@dataclass(frozen=True)
class RegularitySet:
    """The grid subset E where the regularity functional stays small."""

    point_indices: np.ndarray
    threshold: float
    deficit: float
    epsilon: float
    lens: float
    c_bar: float
    c_d_measured: float
    phi: np.ndarray

    @property
    def size(self) -> int:
        return int(len(self.point_indices))


def regularity_set(
    ensemble: TrajectoryEnsemble,
    field: VectorField,
    region_radius: float,
    epsilon: float,
    depth: int = 6,
    n_pair_samples: int = 10_000,
    seed: int = 20260809,
    slack: float = DEFAULT_SLACK,
):
    """Regularity set E and its uniform continuity bound.

    Assembles Phi(x) = integral of g along the trajectory, measures the
    weak-type constant of the maximal operator on Phi itself, forms
    C_bar = 3 (1 + C_d) L ||g||_L1([0,T] x B(3R + T||b||)), takes
    E = {x in B(R): sup_t sup_r Q <= threshold} with
    threshold = max(C_bar/eps, 1) (the functional starts at Q(0) <= 1, so
    thresholds below 1 are degenerate), and verifies the pairwise bound
    |X_t(x) - X_t(y)| <= psi^{-1}_{|x-y|}(2 lens threshold) on sampled pairs
    of E at every mesh time.  Returns the set and a thm41 report whose LHS
    is the worst distance/bound ratio (0 when the bound exceeds the largest
    attainable separation, which it typically does at desk scale).
    """
    grid = ensemble.grid
    modulus = _require_modulus(field)
    witness = _require_witness(field)
    d = grid.dimension
    region_measure = ball_measure(d, region_radius)
    if not 0.0 < epsilon < region_measure:
        raise EstimateError("epsilon must lie in (0, measure of B(R))")
    if grid.radius < 3.0 * region_radius * (1.0 - 1e-12):
        raise EstimateError("regularity needs an ensemble grid over B(3R)")
    horizon = ensemble.horizon

    # Phi by trapezoid along each trajectory
    tw = np.full(ensemble.n_times, ensemble.tau)
    tw[0] *= 0.5
    tw[-1] *= 0.5
    phi = np.zeros(grid.n_points)
    for ti in range(ensemble.n_times):
        phi += tw[ti] * witness(ensemble.times[ti], ensemble.positions[:, ti, :])

    # weak-type constant measured on Phi, exactly the proof's objects:
    # M_{2R} Phi on B(R), integral over B(3R)
    phi_max = float(phi[_center_mask(grid, region_radius)].max(initial=0.0))
    if phi_max > 0.0:
        alphas = phi_max * 0.5 ** np.arange(1, 8)
        wt = weak_type_check(
            grid, phi, region_radius, 2.0 * region_radius, alphas
        )
        c_d = float(wt.constants["c_measured"])
    else:
        c_d = 0.0

    big_radius = 3.0 * region_radius + horizon * field.sup_bound
    norm_grid = make_grid(d, big_radius, grid.spacing)
    g_norm = witness.l1_norm(ensemble.times, norm_grid)
    base_l = compressibility_constant(field, norm_grid, horizon)
    c_bar = 3.0 * (1.0 + c_d) * base_l * g_norm
    threshold = max(c_bar / epsilon, 1.0)

    radii = [2.0 * region_radius * 0.5**j for j in range(depth + 1)]
    radii = [r for r in radii if r >= grid.spacing * (1.0 - MEMBERSHIP_SLACK)]
    rows, sweep = _q_sweep_1d(ensemble, modulus, radii, region_radius)
    q_max = np.zeros(len(rows))
    for r in radii:
        q_max = np.maximum(q_max, sweep[float(r)])
    member = q_max <= threshold
    e_rows = rows[member]
    deficit = float((len(rows) - len(e_rows)) * grid.cell_volume)

    lens = lens_constant(d)
    target = 2.0 * lens * threshold
    xi_cap = 2.0 * ensemble.growth_radius() + 1.0

    rng = np.random.default_rng(seed)
    worst = 0.0
    n_vacuous = 0
    if len(e_rows) >= 2 and n_pair_samples > 0:
        ia = rng.choice(e_rows, n_pair_samples)
        ib = rng.choice(e_rows, n_pair_samples)
        keep = ia != ib
        ia, ib = ia[keep], ib[keep]
        seps = np.sqrt(
            np.sum((grid.points[ia] - grid.points[ib]) ** 2, axis=1)
        )
        diff = ensemble.positions[ia] - ensemble.positions[ib]
        max_dist = np.sqrt(np.sum(diff * diff, axis=2)).max(axis=1)
        bounds = np.empty_like(seps)
        for r_u in np.unique(seps):
            fam = PsiFunctional(modulus, float(r_u))
            at_cap = fam.psi(xi_cap)
            if at_cap <= target:
                bound = np.inf  # bound exceeds any attainable separation
            else:
                bound = fam.psi_inverse(target, tol=1e-9)
            bounds[seps == r_u] = bound
        n_vacuous = int(np.isinf(bounds).sum())
        finite = np.isfinite(bounds)
        ratios = np.zeros_like(bounds)
        ratios[finite] = max_dist[finite] / bounds[finite]
        worst = float(ratios.max(initial=0.0))
        if (max_dist > xi_cap).any():
            raise EstimateError("separation exceeded the growth cap")

    reg = RegularitySet(
        e_rows, threshold, deficit, float(epsilon), lens, c_bar, c_d, phi
    )
    deficit_ok = deficit <= epsilon * (1.0 + slack)
    lhs = worst if deficit_ok else max(worst, 1.0 + slack + 1.0)
    constants = {
        "C_d_measured": c_d,
        "C_bar": c_bar,
        "threshold": threshold,
        "lens": lens,
        "deficit": deficit,
        "epsilon": epsilon,
        "L": base_l,
        "g_norm": g_norm,
        "set_size": len(e_rows),
        "n_pairs": int(n_pair_samples),
        "n_vacuous_bounds": n_vacuous,
        "xi_cap": xi_cap,
    }
    metadata = {
        "field": field.catalog_id,
        "n": ensemble.mollification_level,
        "m": "",
        "h": grid.spacing,
        "tau": ensemble.tau,
        "K": field.params.get("terms", ""),
    }
    report = make_report(
        "thm41", lhs, 1.0, constants, metadata, slack=slack
    )
    return reg, report


# --------------------------------------------------------------------------
# proposition 4.3: compactness functional
# --------------------------------------------------------------------------


def compactness_a(
    ensemble: TrajectoryEnsemble,
    field: VectorField,
    radius: float,
    region_radius: float,
    slack: float = DEFAULT_SLACK,
) -> EstimateReport:
    """a(r, R, X) = integral over B(R) of sup_t Q(t, x, r) against its bound.

    Requires 0 < r < R/2 and an ensemble grid covering B(R + r).  The bound
    is |B(R)| + 2 L ||g||_L1([0,T] x B(3R/2 + 2T||b||)).
    """
    if not 0.0 < radius < region_radius / 2.0:
        raise EstimateError("need 0 < r < R/2")
    grid = ensemble.grid
    if grid.radius < region_radius + radius - MEMBERSHIP_SLACK:
        raise EstimateError("ensemble grid must cover B(R + r)")
    modulus = _require_modulus(field)
    witness = _require_witness(field)
    horizon = ensemble.horizon
    rows, sweep = _q_sweep_1d(ensemble, modulus, [radius], region_radius)
    lhs = float(np.sum(sweep[float(radius)]) * grid.cell_volume)

    r_bar = 1.5 * region_radius + 2.0 * horizon * field.sup_bound
    norm_grid = make_grid(grid.dimension, r_bar, grid.spacing)
    g_norm = witness.l1_norm(ensemble.times, norm_grid)
    base_l = compressibility_constant(field, norm_grid, horizon)
    region_measure = ball_measure(grid.dimension, region_radius)
    rhs = region_measure + 2.0 * base_l * g_norm
    constants = {
        "r": radius,
        "R": region_radius,
        "R_bar": r_bar,
        "L": base_l,
        "g_norm": g_norm,
        "ball_measure": region_measure,
    }
    metadata = {
        "field": field.catalog_id,
        "n": ensemble.mollification_level,
        "m": "",
        "h": grid.spacing,
        "tau": ensemble.tau,
        "K": field.params.get("terms", ""),
    }
    return make_report("prop43", lhs, rhs, constants, metadata, slack=slack)


# --------------------------------------------------------------------------
# theorem 4.4: translation estimate
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TranslationConstants:
    """Uniform-in-level constants for the translation estimate."""

    r_tilde: float
    c_drt: float
    base_l: float
    sup_g_norm: float


def translation_constants(
    base_field: VectorField,
    moll_fields: list,
    region_radius: float,
    horizon: float,
    spacing: float,
    times: np.ndarray,
) -> TranslationConstants:
    """R~ = 3R/2 + 2T sup_n ||b^n|| and C = |B(R)| + 2L sup_n ||g^n||."""
    sup_b = max(f.sup_bound for f in moll_fields)
    r_tilde = 1.5 * region_radius + 2.0 * horizon * sup_b
    norm_grid = make_grid(base_field.dimension, r_tilde, spacing)
    base_l = compressibility_constant(base_field, norm_grid, horizon)
    sup_g = max(
        _require_witness(f).l1_norm(times, norm_grid) for f in moll_fields
    )
    c_drt = (
        ball_measure(base_field.dimension, region_radius)
        + 2.0 * base_l * sup_g
    )
    return TranslationConstants(r_tilde, c_drt, base_l, sup_g)


def translation_functional(
    ensemble: TrajectoryEnsemble,
    radius: float,
    region_radius: float,
    consts: TranslationConstants,
    modulus: ModulusOfContinuity,
    slack: float = DEFAULT_SLACK,
) -> EstimateReport:
    """sup_t of the double integral of |X_t(x) - X_t(x+z)| vs g(r) |B(r)|.

    z runs over lattice multiples of the grid spacing inside B(r) (nearest
    trajectory lookup, no interpolation); the bound is
    g(r) = (R~ / psi_r(R~)) C_{d,R,T} times the measure of B(r).
    """
    if not 0.0 < radius < region_radius / 2.0:
        raise EstimateError("need 0 < r < R/2")
    grid = ensemble.grid
    if grid.dimension != 1:
        raise EstimateError("translation sweep implemented for d = 1")
    if grid.radius < region_radius + radius - MEMBERSHIP_SLACK:
        raise EstimateError("ensemble grid must cover B(R + r)")
    pos = ensemble.positions[:, :, 0]
    n = grid.n_points
    h = grid.spacing
    mask = _center_mask(grid, region_radius)
    rows = np.flatnonzero(mask)
    i0, i1 = int(rows[0]), int(rows[-1]) + 1
    w = int(np.floor(radius / h * (1.0 + MEMBERSHIP_SLACK)))
    acc = np.zeros(ensemble.n_times)
    for k in range(-w, w + 1):
        if k == 0:
            continue
        a, b = max(i0, -k), min(i1, n - k)
        if a >= b or a < 0 or b + k > n:
            raise EstimateError("grid does not cover all shifted points")
        acc += np.abs(pos[a + k : b + k, :] - pos[a:b, :]).sum(axis=0)
    lhs = float(acc.max() * h * h)

    psi = PsiFunctional(modulus, float(radius))
    psi_at_rt = psi.psi(consts.r_tilde)
    g_of_r = consts.r_tilde / psi_at_rt * consts.c_drt
    rhs = g_of_r * ball_measure(1, radius)
    constants = {
        "r": radius,
        "R": region_radius,
        "R_tilde": consts.r_tilde,
        "C_dRT": consts.c_drt,
        "psi_r_at_R_tilde": psi_at_rt,
        "g_of_r": g_of_r,
        "L": consts.base_l,
        "sup_g_norm": consts.sup_g_norm,
    }
    metadata = {
        "field": ensemble.field_id,
        "n": ensemble.mollification_level,
        "m": "",
        "h": h,
        "tau": ensemble.tau,
        "K": "",
    }
    return make_report("thm44", lhs, rhs, constants, metadata, slack=slack)
