import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pairprox import applications as apps
from pairprox import operators as ops
from pairprox import resolvents
from pairprox.errors import (
    DimensionMismatchError,
    NonPositiveSlopeError,
    NotInRangeError,
    SingularMatrixError,
    UnsupportedStructureError,
)
from pairprox.rng import SplitMix64


def bisection_inverse(s, c, d, y, iters=200):
    """Independent oracle: invert the monotone scalar graph z -> s*Sign(z)+c*z+d
    by bracketing and bisection (interval [d-s, d+s] maps to z = 0)."""
    if d - s <= y <= d + s:
        return 0.0

    def value(z):
        return s * np.sign(z) + c * z + d

    lo, hi = -1.0, 1.0
    while value(hi) < y:
        hi *= 2.0
    while value(lo) > y:
        lo *= 2.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid == 0.0:
            mid = lo + 0.25 * (hi - lo)
        if value(mid) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class TestScalarSignAffineInverse:
    def test_above_interval(self):
        assert bisection_inverse(1.0, 2.0, 0.0, 3.0) == pytest.approx(1.0, abs=1e-12)
        assert resolvents.scalar_sign_affine_inverse(1.0, 2.0, 0.0, 3.0) == pytest.approx(1.0)

    def test_inside_interval(self):
        assert resolvents.scalar_sign_affine_inverse(1.0, 2.0, 0.0, 0.5) == 0.0

    def test_below_interval(self):
        assert bisection_inverse(1.0, 2.0, 0.0, -5.0) == pytest.approx(-2.0, abs=1e-12)
        assert resolvents.scalar_sign_affine_inverse(1.0, 2.0, 0.0, -5.0) == pytest.approx(-2.0)

    def test_nonpositive_slope_rejected(self):
        with pytest.raises(NonPositiveSlopeError):
            resolvents.scalar_sign_affine_inverse(1.0, 0.0, 0.0, 1.0)
        with pytest.raises(NonPositiveSlopeError):
            resolvents.scalar_sign_affine_inverse(1.0, -2.0, 0.0, 1.0)

    @given(
        st.floats(0.0, 5.0),
        st.floats(0.1, 10.0),
        st.floats(-5.0, 5.0),
        st.floats(-50.0, 50.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_matches_bisection_oracle(self, s, c, d, y):
        closed = resolvents.scalar_sign_affine_inverse(s, c, d, y)
        oracle = bisection_inverse(s, c, d, y)
        assert closed == pytest.approx(oracle, abs=1e-9)


def qp_engine(kappa=0.2, a=None, b=None, gamma=1.0):
    a = np.diag([1.0, 0.0]) if a is None else a
    b = np.array([1.0, 0.0]) if b is None else b
    f, v = apps.kkt_operator_pair(a, b, kappa)
    return resolvents.build_engine(f, v, gamma), f, v


def sign_engine(gamma=1.0):
    f, v = ops.sign_swap_operator(), ops.swap_operator()
    return resolvents.build_engine(f, v, gamma), f, v


class TestBuildEngine:
    def test_affine_pair_dispatch(self):
        engine, _, _ = qp_engine()
        assert engine.kind is resolvents.StrategyKind.AFFINE_AFFINE
        # the cached factorization realizes (2A + 2k I)^{-1}
        m = 2.0 * np.diag([1.0, 0.0]) + 0.4 * np.eye(2)
        probe = np.array([1.0, 2.0])
        from pairprox import linalg

        assert np.allclose(linalg.lu_solve(engine._strategy.factorization, probe), np.linalg.solve(m, probe))

    def test_sign_pair_dispatch(self):
        engine, _, _ = sign_engine()
        assert engine.kind is resolvents.StrategyKind.SIGN_SEPARABLE

    def test_trig_pair_unsupported(self):
        engine = resolvents.build_engine(ops.trig_block_operator(), ops.swap_operator(), 1.0)
        assert engine.kind is resolvents.StrategyKind.UNSUPPORTED
        with pytest.raises(UnsupportedStructureError):
            resolvents.warped(engine, np.zeros(2))

    def test_scalar_sign_plus_identity_is_diagonal(self):
        # Sign + 2 Id on each coordinate: the fully separable branch
        f = ops.SignBlock(1.0, (0, 1))
        v = ops.Scale(2.0, ops.Pointwise("identity"))
        engine = resolvents.build_engine(f, v, 1.0, dim=2)
        assert engine.kind is resolvents.StrategyKind.SIGN_SEPARABLE
        assert engine._strategy.diagonal
        out = resolvents.transformed(engine, np.array([3.0, 0.5]))
        assert np.allclose(out.preimage, [1.0, 0.0])

    def test_gamma_must_be_positive(self):
        with pytest.raises(ValueError):
            resolvents.build_engine(ops.identity_operator(1), ops.identity_operator(1), 0.0)

    def test_dim_inference_failure(self):
        with pytest.raises(DimensionMismatchError):
            resolvents.build_engine(ops.Pointwise("identity"), ops.Pointwise("identity"), 1.0)


class TestWarped:
    def test_qp_engine_closed_form(self):
        # solve (2A + 0.4 I) z = (A + 0.4 I) x + b at x = 0, per coordinate:
        # z1 = 1/2.4, z2 = 0
        engine, _, _ = qp_engine()
        out = resolvents.warped(engine, np.zeros(2))
        assert np.allclose(out.preimage, [1.0 / 2.4, 0.0], atol=1e-12)

    def test_fixed_point_at_zero_of_f(self):
        a = np.diag([1.0, 0.0])
        b = np.array([1.0, 0.0])
        x_star = np.array([1.0, 0.7])  # any point with A x = b
        engine, _, _ = qp_engine(a=a, b=b)
        out = resolvents.warped(engine, x_star)
        assert np.allclose(out.preimage, x_star, atol=1e-12)

    def test_sign_engine_case_analysis(self):
        engine, _, v = sign_engine()
        x = np.array([1.0, 3.0])  # v(x) = (3, 1)
        out = resolvents.warped(engine, x)
        assert np.allclose(out.preimage, [1.0, 1.0])
        assert np.allclose(out.image, [1.0, 1.0])

    def test_sign_engine_fixed_point(self):
        engine, _, _ = sign_engine()
        out = resolvents.warped(engine, np.zeros(2))
        assert np.array_equal(out.preimage, np.zeros(2))

    def test_singular_affine_is_loud(self):
        a = np.array([[1.0, 1.0], [1.0, 1.0]])
        engine = resolvents.build_engine(ops.Affine(a), ops.Affine(a), 1.0)
        assert engine.kind is resolvents.StrategyKind.AFFINE_AFFINE
        with pytest.raises(SingularMatrixError):
            resolvents.warped(engine, np.ones(2))

    def test_dimension_mismatch(self):
        engine, _, _ = qp_engine()
        with pytest.raises(DimensionMismatchError):
            resolvents.warped(engine, np.zeros(3))


class TestTransformed:
    def test_sign_engine_example(self):
        engine, _, _ = sign_engine()
        out = resolvents.transformed(engine, np.array([3.0, 1.0]))
        assert np.allclose(out.preimage, [1.0, 1.0])
        assert np.allclose(out.image, [1.0, 1.0])

    def test_fixed_point_at_kernel_image(self):
        engine, _, v = sign_engine()
        x_star = np.zeros(2)
        out = resolvents.transformed(engine, ops.evaluate_point(v, x_star))
        assert np.array_equal(out.image, np.zeros(2))

    def test_rotation_half_map(self):
        # F = v = [[0,1],[-1,0]]: image = A (2A)^{-1} x = x / 2
        a = np.array([[0.0, 1.0], [-1.0, 0.0]])
        engine = resolvents.build_engine(ops.Affine(a), ops.Affine(a), 1.0)
        out = resolvents.transformed(engine, np.array([2.0, 0.0]))
        assert np.allclose(out.image, [1.0, 0.0], atol=1e-14)

    def test_no_consistent_pattern_raises_not_in_range(self):
        # white-box: a strategy whose solvable patterns all fail their checks
        strategy = resolvents._SignStrategy(
            scales=np.array([1.0, 0.0]),
            sigma=np.array([0, 1]),
            bprime=np.array([[0.0, 1.0], [0.0, 1.0]]),
            offset=np.zeros(2),
            diagonal=False,
        )
        with pytest.raises(NotInRangeError):
            resolvents._invert_sign(strategy, np.array([5.0, 0.0]))


def _sample_points(n, count, seed, low=-8.0, high=8.0):
    rng = SplitMix64(seed)
    return [rng.uniform(n, low, high) for _ in range(count)]


class TestResolventInvariants:
    def test_membership_warped(self):
        for engine, f, v, n in [(*sign_engine(), 2), (*qp_engine(), 2)]:
            for x in _sample_points(n, 50, seed=21):
                out = resolvents.warped(engine, x)
                resid = ops.evaluate_point(v, x) - out.image
                fz = f.evaluate(out.preimage)
                assert ops.ValueSet(engine.gamma * fz.lower, engine.gamma * fz.upper).contains(
                    resid, tol=1e-9
                )

    def test_membership_transformed(self):
        for engine, f, v, n in [(*sign_engine(), 2), (*qp_engine(), 2)]:
            for x in _sample_points(n, 50, seed=22):
                out = resolvents.transformed(engine, x)
                resid = x - out.image
                fz = f.evaluate(out.preimage)
                assert ops.ValueSet(engine.gamma * fz.lower, engine.gamma * fz.upper).contains(
                    resid, tol=1e-9
                )

    def test_firm_nonexpansiveness_of_transformed(self):
        for engine, _, _, n in [(*sign_engine(), 2), (*qp_engine(), 2)]:
            pts = _sample_points(n, 60, seed=23)
            images = [resolvents.transformed(engine, x).image for x in pts]
            for i in range(0, len(pts) - 1, 2):
                dx = pts[i] - pts[i + 1]
                dt = images[i] - images[i + 1]
                assert float(dt @ dt) <= float(dx @ dt) + 1e-10

    def test_contraction_under_strong_monotonicity(self):
        # (F, Id) with F = diag(2, 1) has modulus 1 and kernel Lipschitz 1,
        # so T contracts with factor 1/(1 + 1) = 1/2
        f = ops.Affine(np.diag([2.0, 1.0]))
        v = ops.identity_operator(2)
        engine = resolvents.build_engine(f, v, 1.0)
        pts = _sample_points(2, 60, seed=24)
        for i in range(0, len(pts) - 1, 2):
            t1 = resolvents.transformed(engine, pts[i]).image
            t2 = resolvents.transformed(engine, pts[i + 1]).image
            assert np.linalg.norm(t1 - t2) <= 0.5 * np.linalg.norm(pts[i] - pts[i + 1]) + 1e-10

    def test_warped_image_inequality(self):
        # ||v(y1) - v(y2)||^2 <= <v(x1) - v(x2), v(y1) - v(y2)> under pair
        # monotonicity
        for engine, _, v, n in [(*sign_engine(), 2), (*qp_engine(), 2)]:
            pts = _sample_points(n, 60, seed=25)
            for i in range(0, len(pts) - 1, 2):
                o1 = resolvents.warped(engine, pts[i])
                o2 = resolvents.warped(engine, pts[i + 1])
                dv_img = o1.image - o2.image
                dv_in = ops.evaluate_point(v, pts[i]) - ops.evaluate_point(v, pts[i + 1])
                assert float(dv_img @ dv_img) <= float(dv_in @ dv_img) + 1e-10

    def test_fixed_point_identities_on_kkt_instances(self):
        for seed in (101, 202, 303):
            system = apps.generate_consistent_system(8, seed)
            kappa = 0.2
            f, v = apps.kkt_operator_pair(system.matrix, system.rhs, kappa)
            engine = resolvents.build_engine(f, v, 1.0)
            x_star = system.solution
            out_j = resolvents.warped(engine, x_star)
            assert np.allclose(out_j.preimage, x_star, atol=1e-9)
            v_star = ops.evaluate_point(v, x_star)
            out_t = resolvents.transformed(engine, v_star)
            assert np.allclose(out_t.image, v_star, atol=1e-9)
