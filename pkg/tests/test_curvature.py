import numpy as np
import pytest
import sympy as sp
from numpy.testing import assert_allclose

from kundtcsi import exprcore as ec
from kundtcsi import families as fam
from kundtcsi.curvature import (
    compare_riemann,
    connection_table,
    csi0_check,
    kundt_vector_check,
    riemann_components,
    riemann_oracle,
    spread,
)
from kundtcsi.geometry import Domain, KundtMetric, Point, coframe_for, sigma_star

u, v, x3, x4 = (ec.symbol(n) for n in ("u", "v", "x3", "x4"))
BOX = Domain(4, (("x3", 0.5, 2.0),))


def metric(H=0, W=(0, 0), gT=None, dim=4):
    return KundtMetric.from_functions(dim, H, list(W), gT)


def all_zero(exprs):
    return all(sp.simplify(e) == 0 for e in exprs)


class TestConnection:
    def test_flat_pp_wave_limit(self):
        K = metric()
        T = connection_table(K, coframe_for(K))
        flat = [T.G212, *T.G2i2, *T.G21i, *sum(T.A, ()), *sum(sum(T.Gijk, ()), ())]
        assert all_zero(flat)

    def test_hform_components(self):
        sig, H1, H0 = sp.Rational(1, 2), u * x3, x4 ** 2
        K = KundtMetric.from_coefficients(4, sig, [0, 0], [0, 0], H1, H0)
        C = coframe_for(K)
        T = connection_table(K, C)
        assert sp.expand(T.G212 - (sigma_star(K, C) * v / 4 + H1)) == 0
        assert sp.expand(T.G2i2[0] - sp.diff(K.H, x3)) == 0
        assert sp.expand(T.G2i2[1] - sp.diff(K.H, x4)) == 0

    def test_case2_fixture(self):
        K = metric(W=(-2 * v / x3, 0))
        T = connection_table(K, coframe_for(K))
        assert sp.simplify(T.G21i[0] + 1 / x3) == 0

    def test_expansion_matches_full_g2i2(self):
        K = fam.default_family("1.2.2b").metric
        T = connection_table(K, coframe_for(K))
        diffs = [a - b for a, b in zip(T.G2i2, T.G2i2_from_expansion())]
        assert all(sp.expand(d) == 0 for d in diffs)


class TestRiemannComponents:
    def test_vsi_pp_wave(self):
        K = metric(H=u * x3 ** 2 + sp.sin(x4))
        RB = riemann_components(K, coframe_for(K))
        assert all_zero([*RB.R121i, RB.R1212, *sum(RB.R12ij, ()), *sum(RB.R1i2j, ())])

    def test_r1212_is_minus_sigma(self):
        K = KundtMetric.from_coefficients(4, sp.Rational(3, 2), [0, 0], [0, 0], 0, 0)
        assert riemann_components(K, coframe_for(K)).R1212 == -sp.Rational(3, 2)

    def test_linear_w_gives_zero_r121i(self):
        K = metric(W=(sp.sin(x4) * v, 0))
        assert riemann_components(K, coframe_for(K)).R121i[0] == 0


class TestCSI0:
    @pytest.mark.parametrize("label", fam.CASE_LABELS)
    def test_families_pass(self, label):
        spec = fam.default_family(label)
        rep = csi0_check(spec.metric, spec.coframe, spec.samples(60))
        assert rep.passes, rep.residuals

    def test_v_squared_in_w_fails_first_condition(self):
        K = metric(W=(v ** 2 * x3, 0))
        rep = csi0_check(K, coframe_for(K), BOX.points(50))
        assert "Wcsi1" in rep.failed()
        assert rep.residuals["Wcsi1"] > 1e-3

    def test_cubic_h_fails_second_condition(self):
        K = metric(H=v ** 3)
        rep = csi0_check(K, coframe_for(K), BOX.points(50))
        assert "Wcsi2" in rep.failed()
        assert rep.residuals["Wcsi1"] < 1e-12

    def test_measured_sigma(self):
        K = KundtMetric.from_coefficients(4, -1, [2, 0], [x3, 0], u, x4)
        rep = csi0_check(K, coframe_for(K), BOX.points(30))
        assert rep.passes
        assert_allclose(rep.sigma_measured, -1.0, atol=1e-12)

    def test_spread_is_scale_aware(self):
        assert spread(np.array([2.0, 2.0, 2.0])) == 0.0
        assert spread(np.array([1.0, 1.0 + 1e-6])) < 1e-6
        assert spread(np.array([0.0, 1e-10]), np.array([1e6, 1e6])) < 1e-15


class TestKundtVector:
    def test_flat_pp_wave(self):
        K = metric(H=x3 ** 2)
        rep = kundt_vector_check(K, coframe_for(K), BOX.points(20))
        assert rep.form_holds and rep.lij_zero
        assert max(rep.L11, rep.L1i, rep.Li1) < 1e-12

    def test_case_121a_has_l1i(self):
        spec = fam.case_1_2_1a(W1=[1, 0], W0=[x4, x3], sigma=0)
        rep = kundt_vector_check(spec.metric, spec.coframe, spec.samples(20))
        assert rep.form_holds
        assert rep.L1i > 1e-6

    def test_v_dependent_transverse_metric_breaks_form(self):
        K = metric(H=x3 ** 2)
        g = sp.Matrix(K.coordinate_metric())
        g[2, 2] = 1 + v ** 2
        rep = kundt_vector_check(K, coframe_for(K), BOX.points(20), g_override=sp.ImmutableMatrix(g))
        assert not rep.form_holds
        assert rep.Lij > 1e-3


class TestOracle:
    def test_flat(self):
        K = metric()
        R = riemann_oracle(K, coframe_for(K), Point(0.1, 0.2, (0.3, 0.4)))
        assert np.all(R == 0)

    def test_case2_null_fixture(self):
        spec = fam.case_2_null(0, 1, 0, branch=1)
        cmp = compare_riemann(spec.metric, spec.coframe, [Point(0.3, 1.7, (2.0, 0.0))])
        assert cmp.passes, cmp.summary()

    def test_sign_recorded_for_quadratic_h(self):
        K = metric(H=v ** 2 / 2)
        cmp = compare_riemann(K, coframe_for(K), BOX.points(10))
        assert cmp.passes
        assert cmp.sign in (1, -1)
        assert cmp.per_family["R1212"] < 1e-12

    def test_curved_transverse_space(self):
        gT = sp.diag(1, sp.exp(2 * x3))
        K = KundtMetric.from_coefficients(4, 1, [x4, 0], [u, 0], x3, x4, gT)
        cmp = compare_riemann(K, coframe_for(K), BOX.points(30))
        assert cmp.passes, cmp.summary()


class TestStructuralIdentities:
    @pytest.mark.parametrize("label", ["1.2.1a", "1.2.2b", "2-timelike"])
    def test_twist_is_antisymmetric(self, label):
        spec = fam.random_family(label, 8, dim=5)
        T = connection_table(spec.metric, spec.coframe)
        n = spec.metric.dim - 2
        sym = [T.A[i][j] + T.A[j][i] for i in range(n) for j in range(n)]
        vals = ec.evaluate_many(sym, spec.metric.names, spec.samples(30))
        assert np.max(np.abs(vals)) < 1e-12

    @pytest.mark.parametrize("label", fam.CASE_LABELS)
    def test_r121i_vanishes_for_linear_w(self, label):
        spec = fam.default_family(label, dim=5)
        RB = riemann_components(spec.metric, spec.coframe)
        vals = ec.evaluate_many(list(RB.R121i), spec.metric.names, spec.samples(30))
        assert np.max(np.abs(vals)) == 0.0
