import numpy as np
import pytest
import sympy as sp
from numpy.testing import assert_allclose

from kundtcsi import exprcore as ec
from kundtcsi import families as fam
from kundtcsi.geometry import (
    Domain,
    GeometryError,
    KundtMetric,
    Point,
    SpatialTransform,
    UReparam,
    VShift,
    apply_transform,
    build_coframe,
    coframe_for,
    frame_derivative,
    frame_to_coordinate,
    sigma_star,
    transform_point,
)

u, v, x3, x4 = (ec.symbol(n) for n in ("u", "v", "x3", "x4"))


def flat(dim=4, H=0, W=None):
    return KundtMetric.from_functions(dim, H, W or [0] * (dim - 2))


def numerically_zero(expr, names, n=25, seed=1, box=(0.5, 2.0)):
    pts = np.random.default_rng(seed).uniform(*box, (n, len(names)))
    vals = ec.evaluate_many([expr], names, pts)[0]
    return np.max(np.abs(vals)) < 1e-11


class TestCoframe:
    def test_identity(self):
        C = build_coframe(sp.eye(2))
        assert C.m == sp.eye(2)

    def test_diagonal_square_root(self):
        C = build_coframe(sp.diag(1, sp.exp(2 * x4)), dim=4)
        assert sp.simplify(C.m - sp.diag(1, sp.exp(x4))) == sp.zeros(2)

    def test_nonconstant_g33_rejected(self):
        with pytest.raises(GeometryError, match="g_33"):
            build_coframe(sp.diag(x3, 1), dim=4)

    def test_triangular_factor_reproduces_metric(self):
        g = sp.Matrix([[2, 1, 0], [1, 2 + x3 ** 2, 0], [0, 0, sp.exp(x3)]])
        C = build_coframe(g, dim=5)
        assert sp.simplify(C.m.T * C.m - g) == sp.zeros(3)
        assert all(C.m[i, j] == 0 for i in range(3) for j in range(i))

    def test_indefinite_rejected(self):
        with pytest.raises(GeometryError):
            build_coframe(sp.Matrix([[1, 2], [2, 1]]), dim=4)


class TestFrameDerivative:
    def test_d2_on_v_independent(self):
        K = KundtMetric.from_coefficients(4, 1, [x3, 0], [u, 0], x4, x3 ** 2)
        C = coframe_for(K)
        f = u ** 2 * sp.sin(x3)
        assert frame_derivative(K, C, 2, f) == sp.diff(f, u)

    def test_d1_of_h(self):
        sig, W13, H1 = sp.Rational(1, 3), x4, u * x3
        K = KundtMetric.from_coefficients(4, sig, [W13, 0], [0, 0], H1, x3)
        C = coframe_for(K)
        expect = v * sigma_star(K, C) / 4 + H1
        assert sp.expand(frame_derivative(K, C, 1, K.H) - expect) == 0

    def test_d3_of_x3_is_one(self):
        K = flat()
        assert frame_derivative(K, coframe_for(K), 3, x3) == 1

    def test_index_out_of_range(self):
        K = flat()
        with pytest.raises(GeometryError):
            frame_derivative(K, coframe_for(K), 5, x3)


class TestSigmaStar:
    def test_vanishing_w(self):
        K = KundtMetric.from_coefficients(4, -1, [0, 0], [0, 0], 0, 0)
        assert sigma_star(K, coframe_for(K)) == -4

    def test_case2_fixture(self):
        K = KundtMetric.from_coefficients(4, 0, [-2 / x3, 0], [0, 0], 0, 0)
        assert sp.simplify(sigma_star(K, coframe_for(K)) - 4 / x3 ** 2) == 0

    def test_exact_cancellation(self):
        K = KundtMetric.from_coefficients(4, -1, [2, 0], [0, 0], 0, 0)
        assert sigma_star(K, coframe_for(K)) == 0


class TestTransforms:
    def test_constant_shift_is_identity(self):
        K = KundtMetric.from_coefficients(4, 1, [x4, 0], [u, x3], x3, u * x4)
        K2 = apply_transform(K, VShift(sp.Integer(7)))
        # with h constant only the chart label of v moves
        assert sp.expand(K2.H.subs(v, v + 7) - K.H) == 0
        assert all(sp.expand(a.subs(v, v + 7) - b) == 0 for a, b in zip(K2.W, K.W))
        assert K2.gT == K.gT

    def test_type3_on_h_zero(self):
        K = flat(W=[u * x4 + v * x3, x3])
        K2 = apply_transform(K, UReparam(2 * u))
        assert K2.H == 0
        for w_new, w_old in zip(K2.W, K.W):
            mapped = w_old.subs({u: u / 2, v: 2 * v}, simultaneous=True) / 2
            assert sp.simplify(w_new - mapped) == 0

    def test_type2_normalizes_case2_metric(self):
        spec = fam.default_family("2-null")
        K, cand = spec.metric, spec.candidate
        C = coframe_for(K)
        d3z1 = frame_derivative(K, C, 3, cand.zeta1)
        h = 1 / d3z1
        Kshift = apply_transform(K, VShift(h))
        Kback = apply_transform(Kshift, VShift(-h))
        target = v * sp.diff(sp.log(d3z1), x3)
        names = K.names
        lo, hi = spec.interval
        assert numerically_zero(Kback.W[0] - target, names, box=(lo + 0.1, lo + 2))
        assert Kback.W[1] == 0

    def test_affine_spatial_map(self):
        K = KundtMetric.from_coefficients(4, 0, [0, 0], [x3, 0], 0, x3 * x4)
        K2 = apply_transform(K, SpatialTransform((x3 + 1, x4)))
        assert sp.expand(K2.H - (x3 - 1) * x4) == 0

    def test_nonaffine_rejected(self):
        with pytest.raises(GeometryError):
            apply_transform(flat(), SpatialTransform((x3 ** 2, x4)))

    def test_point_map_round_trip(self):
        K = flat()
        p = Point(0.4, 1.5, (0.2, -0.3))
        q = transform_point(K, UReparam(2 * u), p)
        assert_allclose(q.as_array(), [0.8, 0.75, 0.2, -0.3])


class TestFrameToCoordinate:
    def test_l_direction(self):
        K = flat()
        assert frame_to_coordinate(K, coframe_for(K), (0, 1, 0, 0)) == (0, 1, 0, 0)

    def test_n_direction(self):
        K = flat(H=v ** 2 / 2)
        assert frame_to_coordinate(K, coframe_for(K), (1, 0, 0, 0)) == (1, -v ** 2 / 2, 0, 0)

    def test_transverse(self):
        K = flat()
        assert frame_to_coordinate(K, coframe_for(K), (0, 0, 1, 0)) == (0, 0, 1, 0)


class TestDomain:
    def test_sampling_is_deterministic(self):
        d = Domain(4, (("x3", 0.5, 3.0),), (("x4", -0.1, 0.1),))
        a, b = d.sample(40, seed=42), d.sample(40, seed=42)
        assert_allclose(a, b, rtol=0, atol=0)
        assert np.all((a[:, 2] >= 0.5) & (a[:, 2] <= 3.0))
        assert not np.any(np.abs(a[:, 3]) < 0.1)

    def test_metric_matrix_signature(self):
        K = KundtMetric.from_coefficients(5, -1, [0, 0, 0], [x4, 0, 0], 0, x3 ** 2)
        g = K.coordinate_metric()
        G = np.array(g.subs({u: 0.1, v: 0.3, x3: 0.2, x4: 0.5, ec.symbol("x5"): 0.0}).evalf(), dtype=float)
        eig = np.linalg.eigvalsh(G)
        assert (eig < 0).sum() == 1 and (eig > 0).sum() == 4


class TestInvariants:
    def test_factor_reproduces_metric_at_samples(self):
        x5 = ec.symbol("x5")
        g = sp.Matrix([[4, 1, 0], [1, 1 + x3 ** 2, x3 / 3], [0, x3 / 3, sp.exp(x4)]])
        C = build_coframe(g, dim=5)
        pts = np.random.default_rng(2).uniform(-1, 1, (100, 5))
        prod = (C.m.T * C.m - g).applyfunc(sp.simplify)
        vals = ec.evaluate_many(list(prod), ec.coordinate_names(5), pts)
        scale = ec.evaluate_many(list(g), ec.coordinate_names(5), pts)
        assert np.max(np.abs(vals) / (1 + np.abs(scale))) < 1e-10

    @pytest.mark.parametrize("seed", range(5))
    def test_frame_derivatives_commute_on_v_independent_functions(self, seed):
        rng = np.random.default_rng(seed)
        a, b, c = (sp.Rational(str(round(float(t), 3))) for t in rng.uniform(-1, 1, 3))
        K = KundtMetric.from_coefficients(4, a, [b * x4, c], [u * x3, sp.sin(x3)], x4, u)
        C = coframe_for(K)
        f = sp.sin(a * x3 + x4) * sp.exp(c * u) + x3 ** 2 * x4
        comm = frame_derivative(K, C, 3, frame_derivative(K, C, 4, f)) \
            - frame_derivative(K, C, 4, frame_derivative(K, C, 3, f))
        # D_i carries w_e d_v, which annihilates v-independent functions
        assert sp.simplify(comm) == 0

    def test_type1_preserves_r1212(self):
        from kundtcsi.curvature import riemann_components

        K = KundtMetric.from_coefficients(4, sp.Rational(1, 2), [x4, 1], [u, x3], x3, x4 ** 2)
        T = SpatialTransform((x3 + 2 * x4 + 1, x4 - 3))
        K2 = apply_transform(K, T)
        R1 = riemann_components(K, coframe_for(K)).R1212
        R2 = riemann_components(K2, coframe_for(K2)).R1212
        for row in np.random.default_rng(4).uniform(-1, 1, (20, 4)):
            p = Point.from_array(row)
            q = transform_point(K, T, p)
            assert_allclose(ec.evaluate(R2, q.bindings()), ec.evaluate(R1, p.bindings()), rtol=1e-8)
