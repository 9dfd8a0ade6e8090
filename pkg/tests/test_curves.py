import math

import numpy as np
import pytest

from pedikit.curves import (
    OrientationTrack,
    PhaseClock,
    RationalBezier,
    bezier_point,
    bezier_point_casteljau,
    lookahead_points,
    slerp,
)
from pedikit.geometry import Quat, quat_angle_between

# Unit cube corners with a spike weight on p1; expected value frozen from the
# projective de Casteljau oracle at t = 0.25.
CUBE_POINTS = np.array(
    [[0, 0, 0], [0, 0, 1], [0, 1, 0], [0, 1, 1], [1, 0, 0], [1, 0, 1], [1, 1, 0]], dtype=float
)
CUBE_WEIGHTS = np.array([1, 2000, 1, 1, 1, 1, 1], dtype=float)
CUBE_EXPECTED_T025 = np.array([5.27643373e-05, 6.01650496e-04, 9.99287339e-01])


def random_curve(rng, n_pts=7):
    pts = rng.uniform(-2.0, 2.0, size=(n_pts, 3))
    w = rng.uniform(1.0, 2000.0, size=n_pts)
    return pts, w


class TestBezierEval:
    def test_endpoints(self):
        rng = np.random.default_rng(0)
        pts, w = random_curve(rng)
        assert np.allclose(bezier_point(pts, w, 0.0), pts[0], atol=1e-12)
        assert np.allclose(bezier_point(pts, w, 1.0), pts[-1], atol=1e-12)

    def test_linear_reproduction(self):
        pts = np.array([[i, 0.0, 0.0] for i in range(7)])
        w = np.ones(7)
        for t in np.linspace(0, 1, 17):
            assert np.allclose(bezier_point(pts, w, t), [6 * t, 0, 0], atol=1e-12)

    def test_weighted_cube_matches_oracle(self):
        got = bezier_point(CUBE_POINTS, CUBE_WEIGHTS, 0.25)
        oracle = bezier_point_casteljau(CUBE_POINTS, CUBE_WEIGHTS, 0.25)
        assert np.allclose(got, oracle, atol=1e-9)
        assert np.allclose(got, CUBE_EXPECTED_T025, atol=1e-8)

    def test_out_of_range_rejected(self):
        pts, w = random_curve(np.random.default_rng(1))
        with pytest.raises(ValueError):
            bezier_point(pts, w, -0.01)
        with pytest.raises(ValueError):
            bezier_point(pts, w, 1.01)

    def test_nonpositive_weight_rejected(self):
        pts, w = random_curve(np.random.default_rng(2))
        w[3] = 0.0
        with pytest.raises(ValueError):
            bezier_point(pts, w, 0.5)

    def test_convex_hull_bounding_box(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            pts, w = random_curve(rng)
            t = rng.uniform()
            v = bezier_point(pts, w, t)
            assert np.all(v >= pts.min(axis=0) - 1e-12)
            assert np.all(v <= pts.max(axis=0) + 1e-12)

    def test_weight_scale_invariance(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            pts, w = random_curve(rng)
            t = rng.uniform()
            c = rng.uniform(0.01, 100.0)
            assert np.allclose(bezier_point(pts, w, t), bezier_point(pts, c * w, t), atol=1e-9)


class TestCasteljauOracle:
    def test_agrees_with_direct_eval(self):
        rng = np.random.default_rng(5)
        for _ in range(2000):
            n = rng.integers(2, 9)
            pts, w = random_curve(rng, n)
            t = rng.uniform()
            a = bezier_point(pts, w, t)
            b = bezier_point_casteljau(pts, w, t)
            assert np.max(np.abs(a - b)) < 1e-9

    def test_endpoint(self):
        pts, w = random_curve(np.random.default_rng(6))
        assert np.allclose(bezier_point_casteljau(pts, w, 0.0), pts[0], atol=1e-12)

    def test_doubled_weights_identical(self):
        pts, w = random_curve(np.random.default_rng(7))
        t = 0.37
        a = bezier_point_casteljau(pts, w, t)
        b = bezier_point_casteljau(pts, 2.0 * w, t)
        assert np.allclose(a, b, atol=1e-12)


class TestRationalBezierType:
    def test_requires_seven_points(self):
        with pytest.raises(ValueError):
            RationalBezier(np.zeros((5, 3)), np.ones(5))

    def test_point_delegates(self):
        rng = np.random.default_rng(8)
        pts, w = random_curve(rng)
        c = RationalBezier(pts, w)
        assert np.allclose(c.point(0.3), bezier_point(pts, w, 0.3), atol=1e-15)
        assert np.allclose(c.point_casteljau(0.3), bezier_point_casteljau(pts, w, 0.3), atol=1e-15)


class TestSlerp:
    def test_endpoints(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            q0 = Quat.from_array(rng.normal(size=4))
            q1 = Quat.from_array(rng.normal(size=4))
            assert quat_angle_between(slerp(q0, q1, 0.0), q0) < 1e-9
            assert quat_angle_between(slerp(q0, q1, 1.0), q1) < 1e-9

    def test_geodesic_midpoint(self):
        q0 = Quat.identity()
        q1 = Quat.from_axis_angle([0, 0, 1], math.pi / 2)
        mid = slerp(q0, q1, 0.5)
        expect = Quat.from_axis_angle([0, 0, 1], math.pi / 4)
        assert quat_angle_between(mid, expect) < 1e-9

    def test_constant_angular_speed(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            q0 = Quat.from_array(rng.normal(size=4))
            q1 = Quat.from_array(rng.normal(size=4))
            theta = min(quat_angle_between(q0, q1), 2 * math.pi - quat_angle_between(q0, q1))
            for t in np.arange(0.1, 1.0, 0.1):
                a = quat_angle_between(slerp(q0, q1, float(t)), q0)
                assert abs(a - t * theta) < 1e-7

    def test_unit_norm(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            q0 = Quat.from_array(rng.normal(size=4))
            q1 = Quat.from_array(rng.normal(size=4))
            out = slerp(q0, q1, rng.uniform())
            assert abs(np.linalg.norm(out.as_array()) - 1.0) < 1e-9

    def test_degenerate_pair_no_nan(self):
        q = Quat.from_axis_angle([1, 0, 0], 0.3)
        near = Quat.from_axis_angle([1, 0, 0], 0.3 + 1e-9)
        out = slerp(q, near, 0.5)
        assert np.all(np.isfinite(out.as_array()))
        assert quat_angle_between(out, q) < 1e-6


class TestPhaseClock:
    def test_start_is_zero(self):
        clock = PhaseClock(2.0, 4.0)
        assert clock.phase(2.0) == 0.0

    def test_end_is_one(self):
        clock = PhaseClock(2.0, 4.0)
        assert clock.phase(6.0) == 1.0

    def test_clamps_beyond_end(self):
        clock = PhaseClock(2.0, 4.0)
        assert clock.phase(100.0) == 1.0
        assert clock.phase(-100.0) == 0.0

    def test_positive_duration_required(self):
        with pytest.raises(ValueError):
            PhaseClock(0.0, 0.0)


class TestLookahead:
    def _linear(self):
        pts = np.array([[i, 0.0, 0.0] for i in range(7)])
        return RationalBezier(pts, np.ones(7))

    def test_past_end_holds_endpoint(self):
        curve = self._linear()
        clock = PhaseClock(0.0, 1.0)
        out = lookahead_points(curve, clock, 5.0, 0.02, 3)
        assert out.shape == (3, 3)
        assert np.allclose(out, [[6, 0, 0]] * 3, atol=1e-12)

    def test_linear_advance(self):
        curve = self._linear()
        duration = 2.0
        clock = PhaseClock(0.0, duration)
        t_now, dt = 0.5, 0.02
        out = lookahead_points(curve, clock, t_now, dt, 3)
        for j in range(3):
            expected_x = 6.0 * (t_now + (j + 1) * dt) / duration
            assert np.allclose(out[j], [expected_x, 0, 0], atol=1e-12)

    def test_always_three_points(self):
        curve = self._linear()
        clock = PhaseClock(0.0, 1.0)
        assert lookahead_points(curve, clock, 0.99, 0.02, 3).shape == (3, 3)
