import math

import numpy as np
import pytest

from rlflab.estimates import (
    EstimateError,
    cauchy_diagnostic,
    compactness_a,
    field_l1_distance,
    lens_constant,
    regularity_Q,
    regularity_set,
    stability_report,
    translation_constants,
    translation_functional,
)
from rlflab.fields import MollifierKernel, catalog_field, mollify
from rlflab.flow import integrate_ensemble
from rlflab.modulus import PsiFunctional, make_modulus
from rlflab.numerics import ball_measure, grid_integral, make_grid

LIN = make_modulus("linear")
LOG = make_modulus("log")


def _const_ensembles(values, radius=1.0, h=0.01, horizon=1.0, tau=1e-3, level=None):
    grid = make_grid(1, radius, h)
    out = []
    for i, v in enumerate(values):
        f = catalog_field("constant", 1, value=v)
        if level is not None:
            f = mollify(f, MollifierKernel(level * (i + 1)))
        out.append((f, integrate_ensemble(f, grid, horizon, tau)))
    return grid, out


class TestStability:
    def test_same_ensemble_lhs_zero(self, moll, ens_b1):
        rep = stability_report(
            moll[8], moll[8], ens_b1[8], ens_b1[8], 1.0, delta=0.1
        )
        assert rep.lhs == 0.0
        assert rep.passed

    def test_constant_pair_closed_form(self):
        grid, pairs = _const_ensembles([0.0, 0.1])
        (f0, e0), (f1, e1) = pairs
        delta = 0.1  # = T * |v2 - v1|
        rep = stability_report(f0, f1, e0, e1, 1.0, delta=delta)
        measure_r = grid_integral(grid, np.ones(grid.n_points))
        assert rep.lhs == pytest.approx(measure_r * math.log(2.0), rel=1e-9)
        # RHS: witnesses vanish, L = L~ = 1, so it is ||b - b~||_1 / delta
        wide = make_grid(1, 1.1, 0.01)
        expect_rhs = grid_integral(wide, np.full(wide.n_points, 0.1)) / delta
        assert rep.rhs == pytest.approx(expect_rhs, rel=1e-12)
        assert rep.passed

    def test_measured_delta_default(self, moll, ens_b1):
        rep = stability_report(moll[8], moll[32], ens_b1[8], ens_b1[32], 1.0)
        assert rep.constants["delta"] > 0.0
        assert rep.constants["delta"] == pytest.approx(
            rep.constants["b_l1_distance"], rel=1e-12
        )
        assert rep.passed

    def test_witness_choice_recorded(self, moll, ens_b1):
        rep = stability_report(
            moll[8], moll[16], ens_b1[8], ens_b1[16], 1.0, witness_choice="b"
        )
        assert rep.constants["witness_choice"] == "b"
        assert rep.passed

    def test_every_witnessed_catalog_field_passes(self):
        # mollified pair of each catalog field, desk scale, slack 5%
        grid = make_grid(1, 1.0, 0.01)
        for cid in ("constant", "linear", "osgood-sum", "sobolev-singular", "combined"):
            base = catalog_field(cid, 1)
            fa, fb = mollify(base, MollifierKernel(8)), mollify(base, MollifierKernel(32))
            ea = integrate_ensemble(fa, grid, 1.0, 2e-3)
            eb = integrate_ensemble(fb, grid, 1.0, 2e-3)
            delta = field_l1_distance(
                fa, fb, ea.times, make_grid(1, 1.0 + base.sup_bound, 0.01)
            )
            rep = stability_report(
                fa, fb, ea, eb, 1.0, delta=delta if delta > 0 else 1e-6
            )
            assert rep.passed, cid

    def test_mesh_guard(self, moll, ens_b1, ens_b15):
        with pytest.raises(EstimateError):
            stability_report(moll[8], moll[16], ens_b1[8], ens_b15[16], 1.0)


class TestCauchy:
    def test_levels_of_constant_field_all_zero(self):
        grid, entries = _const_ensembles([1.0, 1.0, 1.0], level=4)
        base = catalog_field("constant", 1, value=1.0)
        fields = [f for f, _ in entries]
        ens = [e for _, e in entries]
        table, reports = cauchy_diagnostic(base, fields, ens, 0.05, 1.0)
        assert np.all(table.distances == 0.0)
        assert all(r.passed for r in reports)

    def test_offset_constants_closed_form(self):
        # fields v_n = 1/n: sup distance is T |1/n - 1/m| at every point
        values = [1.0 / 4, 1.0 / 8, 1.0 / 16]
        grid, entries = _const_ensembles(values, level=4)
        base = catalog_field("constant", 1, value=values[0])
        fields = [f for f, _ in entries]
        ens = [e for _, e in entries]
        table, reports = cauchy_diagnostic(base, fields, ens, 0.05, 1.0)
        measure = grid_integral(grid, np.ones(grid.n_points))
        for (n, m), d_nm in zip(table.pairs, table.distances):
            vn = values[table.levels.index(n)]
            vm = values[table.levels.index(m)]
            assert d_nm == pytest.approx(measure * abs(vn - vm), rel=1e-9)
        assert all(r.passed for r in reports)

    def test_needs_three_levels(self, osgood, moll, ens_b1):
        with pytest.raises(EstimateError):
            cauchy_diagnostic(
                osgood, [moll[4], moll[8]], [ens_b1[4], ens_b1[8]], 0.05, 1.0
            )


class TestRegularityQ:
    def test_initial_time_below_one(self, ens_b3_top, osgood):
        for r in (0.1, 0.5, 2.0):
            q = regularity_Q(ens_b3_top, osgood.modulus, 0.25, r, 0.0)
            assert 0.0 < q <= 1.0

    def test_identity_flow_time_invariant(self):
        f = catalog_field("constant", 1, value=0.0)
        grid = make_grid(1, 1.0, 0.02)
        ens = integrate_ensemble(f, grid, 1.0, 0.01)
        q0 = regularity_Q(ens, LIN, 0.1, 0.4, 0.0)
        q1 = regularity_Q(ens, LIN, 0.1, 0.4, 1.0)
        assert q1 == pytest.approx(q0, rel=1e-12)

    def test_contraction_vs_quadrature_oracle(self):
        # X_t(x) = x e^-t, so the integrand is psi_r(e^-t |x - y|)
        f = catalog_field("linear", 1, slope=-1.0)
        grid = make_grid(1, 1.0, 0.01)
        ens = integrate_ensemble(f, grid, 1.0, 1e-3)
        x0, r, t = 0.2, 0.25, 0.5
        q = regularity_Q(ens, LIN, x0, r, t)
        ys = grid.coords()
        mask = np.abs(ys - x0) <= r * (1 + 1e-12)
        fam = PsiFunctional(LIN, r, quad_tol=1e-11)
        scale = math.exp(-t)
        oracle = np.mean([fam.psi(scale * abs(y - x0)) for y in ys[mask]])
        assert q == pytest.approx(oracle, abs=5e-4)

    def test_interior_guard(self, ens_b3_top, osgood):
        with pytest.raises(EstimateError):
            regularity_Q(ens_b3_top, osgood.modulus, 2.9, 0.5, 0.0)


class TestRegularitySet:
    def test_identity_flow_full_set(self):
        f = catalog_field("constant", 1, value=0.0)
        grid = make_grid(1, 3.0, 0.01)
        ens = integrate_ensemble(f, grid, 1.0, 0.01)
        reg, rep = regularity_set(ens, f, 1.0, 0.2, n_pair_samples=2000)
        assert reg.deficit == 0.0
        assert reg.size == 201  # all of the B(1) grid
        assert rep.passed
        # witness vanishes: threshold degenerates to the baseline 1
        assert reg.threshold == 1.0

    def test_lens_constants(self):
        assert lens_constant(1) == 2.0
        assert lens_constant(2) == pytest.approx(2.5575, abs=2e-4)
        assert lens_constant(3) == pytest.approx(3.2)

    def test_linear_rho_bound_matches_exponential_form(self):
        # psi_r^{-1}(t) = r (e^t - 1) for the linear modulus, probed at the
        # separations the pair check actually sees (t = log(1 + xi/r))
        for r in (0.05, 0.25, 0.8):
            fam = PsiFunctional(LIN, r, quad_tol=1e-11)
            for xi in (0.01, 0.5, 2.0, 8.0):
                t = math.log1p(xi / r)
                got = fam.psi_inverse(t, tol=1e-10)
                want = r * math.expm1(t)
                assert abs(got - want) <= 1e-6 * want

    def test_epsilon_guard(self, ens_b3_top, moll):
        with pytest.raises(EstimateError):
            regularity_set(ens_b3_top, moll[32], 1.0, 5.0)


class TestCompactness:
    def test_identity_flow(self):
        f = catalog_field("constant", 1, value=0.0)
        grid = make_grid(1, 1.5, 0.01)
        ens = integrate_ensemble(f, grid, 1.0, 0.01)
        rep = compactness_a(ens, f, 0.25, 1.0)
        assert rep.lhs <= ball_measure(1, 1.0)
        assert rep.passed

    def test_translation_invariance_constant_field(self):
        grid = make_grid(1, 1.5, 0.01)
        f0 = catalog_field("constant", 1, value=0.0)
        f1 = catalog_field("constant", 1, value=1.0)
        e0 = integrate_ensemble(f0, grid, 1.0, 0.01)
        e1 = integrate_ensemble(f1, grid, 1.0, 0.01)
        r0 = compactness_a(e0, f0, 0.25, 1.0)
        r1 = compactness_a(e1, f1, 0.25, 1.0)
        assert r1.lhs == pytest.approx(r0.lhs, abs=1e-12)

    def test_radius_guard(self, ens_b15, moll):
        with pytest.raises(EstimateError):
            compactness_a(ens_b15[32], moll[32], 0.6, 1.0)


class TestTranslation:
    def test_identity_flow_closed_form(self):
        grid = make_grid(1, 1.5, 0.01)
        f = catalog_field("constant", 1, value=0.0)
        ens = integrate_ensemble(f, grid, 1.0, 0.01)
        consts = translation_constants(f, [f], 1.0, 1.0, 0.01, ens.times)
        rep = translation_functional(ens, 0.25, 1.0, consts, LIN)
        # oracle: sum over offsets |k| <= 25 and rows |x| <= 1 of |k| h * h^2
        h = 0.01
        n_rows = 201
        offset_sum = 2.0 * sum(k * h for k in range(1, 26))
        expect = n_rows * h * h * offset_sum
        assert rep.lhs == pytest.approx(expect, rel=1e-12)
        assert rep.passed

    def test_constant_velocity_matches_identity(self):
        grid = make_grid(1, 1.5, 0.01)
        f0 = catalog_field("constant", 1, value=0.0)
        f1 = catalog_field("constant", 1, value=1.0)
        e0 = integrate_ensemble(f0, grid, 1.0, 0.01)
        e1 = integrate_ensemble(f1, grid, 1.0, 0.01)
        c0 = translation_constants(f0, [f0], 1.0, 1.0, 0.01, e0.times)
        l0 = translation_functional(e0, 0.25, 1.0, c0, LIN).lhs
        l1 = translation_functional(e1, 0.25, 1.0, c0, LIN).lhs
        assert l1 == pytest.approx(l0, abs=1e-12)

    def test_g_decreases_in_r(self, osgood, moll, ens_b15):
        consts = translation_constants(
            osgood, [moll[8], moll[16], moll[32]], 1.0, 1.0, 0.01,
            ens_b15[32].times,
        )
        radii = [0.25 / 2**j for j in range(5)]
        gs = []
        for r in radii:
            rep = translation_functional(
                ens_b15[32], r, 1.0, consts, osgood.modulus
            )
            assert rep.passed
            gs.append(rep.constants["g_of_r"])
        assert all(a > b for a, b in zip(gs, gs[1:]))


class TestPsiChainOnFlow:
    def test_subadditive_triangle_along_trajectories(self, ens_b1):
        # psi_r(|X(x)-X(y)|) <= psi_r(|X(x)-X(z)|) + psi_r(|X(z)-X(y)|)
        ens = ens_b1[16]
        pos = ens.positions[:, ::100, 0]
        rng = np.random.default_rng(2)
        fam = PsiFunctional(LOG, 0.25, quad_tol=1e-11)
        for _ in range(40):
            i, j, k = rng.integers(0, pos.shape[0], 3)
            ti = rng.integers(0, pos.shape[1])
            dxy = abs(pos[i, ti] - pos[j, ti])
            dxz = abs(pos[i, ti] - pos[k, ti])
            dzy = abs(pos[k, ti] - pos[j, ti])
            assert fam.psi(dxy) <= fam.psi(dxz) + fam.psi(dzy) + 1e-8


class TestReportSerialization:
    def test_json_deterministic_and_consistent(self, moll, ens_b1):
        rep1 = stability_report(moll[8], moll[16], ens_b1[8], ens_b1[16], 1.0)
        rep2 = stability_report(moll[8], moll[16], ens_b1[8], ens_b1[16], 1.0)
        assert rep1.to_json() == rep2.to_json()
        row = rep1.csv_row("stability")
        assert row[0] == "stability" and row[1] == "thm31"
        assert float(row[5]) == rep1.lhs and float(row[6]) == rep1.rhs
