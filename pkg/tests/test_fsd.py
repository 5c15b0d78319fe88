"""Shape descriptor pipeline: closure, coefficients, errors, metrics."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from shapely.geometry import Polygon as ShapelyPolygon

from ccmopt.errors import DescriptorError, ParameterError
from ccmopt.fsd import (
    FSDescriptor,
    FSDWeights,
    close_path,
    fourier_descriptors,
    fsd_errors,
    fsd_objective,
    shape_metrics,
)


def polygon_descriptor_oracle(pts_cw, n):
    """Exact harmonics of the cumulative tangent-angle sawtooth of a polygon.

    Between corners theta is constant and phi* has slope -w, so each
    coefficient reduces to a finite sum over corner stations tau_i with turn
    angles dtheta_i:

        A_k = -(1/(pi k)) sum_i dtheta_i sin(k tau_i)
        B_k =  (1/(pi k)) sum_i dtheta_i cos(k tau_i)

    Derived by integrating the Heaviside steps of theta(t) against the
    trigonometric basis; the -w t ramp cancels against sum dtheta_i = 2 pi w.
    """
    pts = np.asarray(pts_cw, dtype=float)
    m = pts.shape[0]
    edges = np.roll(pts, -1, axis=0) - pts
    seg = np.hypot(edges[:, 0], edges[:, 1])
    length = seg.sum()
    ang = np.arctan2(edges[:, 1], edges[:, 0])
    # corner i sits at the end of edge i, at arc position cum(seg[..i])
    tau = 2.0 * math.pi * np.cumsum(seg) / length
    turn = np.array(
        [(ang[(i + 1) % m] - ang[i] + math.pi) % (2 * math.pi) - math.pi for i in range(m)]
    )
    k = np.arange(1, n + 1)
    A = -(1.0 / (math.pi * k)) * (np.sin(np.outer(k, tau)) @ turn)
    B = (1.0 / (math.pi * k)) * (np.cos(np.outer(k, tau)) @ turn)
    return A, B


def circle_points(radius, m=1024, start=0.3, cw=False):
    ang = start + 2.0 * math.pi * np.arange(m) / m
    if cw:
        ang = ang[::-1]
    return np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])


UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


class TestClosePath:
    def test_l_path_closes_to_clockwise_triangle(self):
        curve = close_path([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)])
        assert curve.points.shape == (3, 2)
        assert tuple(curve.points[0]) == (0.0, 0.0)
        x, y = curve.points[:, 0], curve.points[:, 1]
        area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        assert area < 0  # clockwise

    def test_ccw_loop_reversed_start_kept(self):
        curve = close_path(UNIT_SQUARE)
        assert tuple(curve.points[0]) == (0.0, 0.0)
        assert np.array_equal(curve.points[1], [0.0, 1.0])

    def test_cw_loop_unchanged(self):
        curve = close_path(UNIT_SQUARE[::-1])
        assert np.array_equal(curve.points, UNIT_SQUARE[::-1])

    def test_s_path_chord_crossing_rejected(self):
        s_path = [(0, 0), (2, 0), (2, 1), (0, 1), (0, 2), (2, 2)]
        with pytest.raises(DescriptorError):
            close_path(s_path)

    def test_collinear_path_rejected(self):
        with pytest.raises(DescriptorError):
            close_path([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)])

    def test_backtracking_spike_rejected(self):
        with pytest.raises(DescriptorError):
            close_path([(0, 0), (2, 0), (1, 0), (1, 1)])

    def test_duplicate_points_filtered(self):
        curve = close_path([(0, 0), (0, 0), (1, 0), (1, 0), (1, 1), (0, 0)])
        assert curve.points.shape == (3, 2)

    def test_too_few_points(self):
        with pytest.raises(ParameterError):
            close_path([(0.0, 0.0)])
        with pytest.raises(DescriptorError):
            close_path([(0.0, 0.0), (1.0, 1.0)])

    @given(data=st.data())
    @settings(max_examples=80)
    def test_verdict_matches_shapely_validity(self, data):
        # integer grid keeps both predicates exact
        pts = data.draw(
            st.lists(
                st.tuples(st.integers(0, 5), st.integers(0, 5)),
                min_size=3,
                max_size=7,
                unique=True,
            )
        )
        try:
            close_path(pts)
            ok = True
        except DescriptorError:
            ok = False
        assert ok == ShapelyPolygon(pts).is_valid


class TestDescriptors:
    @pytest.mark.parametrize("radius", [1.0, 2.5, 40.0])
    @pytest.mark.parametrize("cw", [False, True])
    def test_circle_harmonics_vanish(self, radius, cw):
        curve = close_path(circle_points(radius, cw=cw))
        d = fourier_descriptors(curve, n=10, samples=1024)
        assert np.max(np.abs(d.A)) <= 1e-6
        assert np.max(np.abs(d.B)) <= 1e-6
        assert d.length == pytest.approx(2 * math.pi * radius, rel=1e-4)

    def test_unit_square_closed_form(self):
        curve = close_path(UNIT_SQUARE)
        d = fourier_descriptors(curve, n=10, samples=4096)
        A_exact, B_exact = polygon_descriptor_oracle(curve.points, 10)
        # spot-check the oracle itself: B_{4m} = -1/(2m), everything else 0
        expect_B = np.zeros(10)
        expect_B[3] = -0.5
        expect_B[7] = -0.25
        assert np.allclose(B_exact, expect_B, atol=1e-12)
        assert np.allclose(A_exact, 0.0, atol=1e-12)
        scale = np.max(np.abs(expect_B))
        assert np.max(np.abs(d.A - A_exact)) <= 1e-3 * scale
        assert np.max(np.abs(d.B - B_exact)) <= 1e-3 * scale
        assert d.length == pytest.approx(4.0, rel=1e-12)
        assert d.theta == pytest.approx(math.pi / 2, abs=1e-12)

    @given(data=st.data())
    @settings(max_examples=25)
    def test_random_convex_polygon_matches_oracle(self, data):
        m = data.draw(st.integers(3, 8))
        angles = sorted(
            data.draw(
                st.lists(
                    st.floats(0.0, 2 * math.pi - 0.3),
                    min_size=m,
                    max_size=m,
                    unique=True,
                )
            )
        )
        if min(b - a for a, b in zip(angles, angles[1:])) < 0.2:
            return  # skip nearly-degenerate corners
        radii = data.draw(
            st.lists(st.floats(0.5, 3.0), min_size=m, max_size=m)
        )
        pts = np.array(
            [[r * math.cos(a), r * math.sin(a)] for a, r in zip(angles, radii)]
        )
        try:
            curve = close_path(pts)
        except DescriptorError:
            return  # radial star may self-intersect; not the point here
        d = fourier_descriptors(curve, n=8, samples=8192)
        A_exact, B_exact = polygon_descriptor_oracle(curve.points, 8)
        assert np.max(np.abs(d.A - A_exact)) <= 5e-3
        assert np.max(np.abs(d.B - B_exact)) <= 5e-3

    def test_scale_by_two_preserves_harmonics_exactly(self):
        base = close_path(UNIT_SQUARE)
        scaled = close_path(UNIT_SQUARE * 2.0)
        d1 = fourier_descriptors(base, n=10, samples=1024)
        d2 = fourier_descriptors(scaled, n=10, samples=1024)
        assert np.array_equal(d1.A, d2.A)
        assert np.array_equal(d1.B, d2.B)
        assert d2.theta == d1.theta
        assert d2.length == pytest.approx(2 * d1.length, rel=1e-15)

    def test_reparameterization_invariance(self):
        dense = []
        for i in range(4):
            a, b = UNIT_SQUARE[i], UNIT_SQUARE[(i + 1) % 4]
            for k in range(7):
                dense.append(a + (b - a) * k / 7.0)
        d1 = fourier_descriptors(close_path(UNIT_SQUARE), n=10, samples=1024)
        d2 = fourier_descriptors(close_path(np.array(dense)), n=10, samples=1024)
        assert np.max(np.abs(d1.A - d2.A)) <= 1e-6
        assert np.max(np.abs(d1.B - d2.B)) <= 1e-6
        assert d1.theta == pytest.approx(d2.theta, abs=1e-9)
        assert d1.length == pytest.approx(d2.length, rel=1e-12)

    def test_rotation_moves_only_theta(self):
        rot = math.radians(33.0)
        R = np.array([[math.cos(rot), -math.sin(rot)], [math.sin(rot), math.cos(rot)]])
        d1 = fourier_descriptors(close_path(UNIT_SQUARE), n=10, samples=1024)
        d2 = fourier_descriptors(close_path(UNIT_SQUARE @ R.T), n=10, samples=1024)
        assert np.max(np.abs(d1.A - d2.A)) <= 1e-9
        assert np.max(np.abs(d1.B - d2.B)) <= 1e-9
        assert d2.length == pytest.approx(d1.length, rel=1e-12)
        # theta shifted by the rotation (both first edges lie off the branch cut)
        assert d2.theta - d1.theta == pytest.approx(rot, abs=1e-9)

    def test_start_phase_alignment(self):
        # same square entered at a mid-edge point: coefficients agree after
        # rotating harmonic k by k*t0
        shifted = np.array(
            [[0.5, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]]
        )
        d1 = fourier_descriptors(close_path(UNIT_SQUARE), n=10, samples=1024)
        d2 = fourier_descriptors(close_path(shifted), n=10, samples=1024)
        c1 = d1.A + 1j * d1.B
        c2 = d2.A + 1j * d2.B
        k = np.arange(1, 11)
        best = min(
            np.max(np.abs(c2 - c1 * np.exp(-1j * k * t0)))
            for t0 in np.linspace(0.0, 2 * math.pi, 2048, endpoint=False)
        )
        assert best <= 1e-4

    def test_parameter_validation(self):
        curve = close_path(UNIT_SQUARE)
        with pytest.raises(ParameterError):
            fourier_descriptors(curve, n=0, samples=64)
        with pytest.raises(ParameterError):
            fourier_descriptors(curve, n=10, samples=64)


def random_descriptor(rng, n=10):
    return FSDescriptor(
        A=rng.normal(size=n),
        B=rng.normal(size=n),
        theta=float(rng.uniform(-math.pi, math.pi)),
        length=float(rng.uniform(0.5, 100.0)),
        n=n,
    )


class TestErrorsAndObjective:
    def test_identical_descriptors_zero(self):
        d = random_descriptor(np.random.default_rng(0))
        assert fsd_errors(d, d) == (0.0, 0.0, 0.0, 0.0)
        assert fsd_objective(d, d, FSDWeights()) == 0.0

    def test_two_coefficient_example(self):
        d = FSDescriptor(A=np.array([1.0, 0.0]), B=np.zeros(2), theta=0.0, length=1.0, n=2)
        a = FSDescriptor(A=np.array([0.0, 1.0]), B=np.zeros(2), theta=0.0, length=1.0, n=2)
        assert fsd_errors(d, a)[0] == 2.0

    def test_matches_direct_summation(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            d, a = random_descriptor(rng), random_descriptor(rng)
            A_err, B_err, L_err, th_err = fsd_errors(d, a)
            assert A_err == pytest.approx(
                sum((d.A[i] - a.A[i]) ** 2 for i in range(10)), abs=1e-12
            )
            assert B_err == pytest.approx(
                sum((d.B[i] - a.B[i]) ** 2 for i in range(10)), abs=1e-12
            )
            assert L_err == pytest.approx((d.length - a.length) ** 2, abs=1e-12)
            assert th_err == pytest.approx((d.theta - a.theta) ** 2, abs=1e-12)

    def test_weighted_sum_and_linearity(self):
        rng = np.random.default_rng(7)
        d, a = random_descriptor(rng), random_descriptor(rng)
        errs = fsd_errors(d, a)
        w = FSDWeights(w_a=500.0, w_b=500.0, w_L=1.0, w_theta=0.1)
        expect = 500.0 * errs[0] + 500.0 * errs[1] + 1.0 * errs[2] + 0.1 * errs[3]
        assert fsd_objective(d, a, w) == pytest.approx(expect, rel=1e-15)
        w2 = FSDWeights(w_a=1000.0, w_b=1000.0, w_L=2.0, w_theta=0.2)
        assert fsd_objective(d, a, w2) == pytest.approx(2 * fsd_objective(d, a, w), rel=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        d, a = random_descriptor(rng), random_descriptor(rng)
        w = FSDWeights()
        assert fsd_objective(d, a, w) == fsd_objective(a, d, w)

    def test_mismatched_harmonics(self):
        rng = np.random.default_rng(1)
        with pytest.raises(ParameterError):
            fsd_errors(random_descriptor(rng, 10), random_descriptor(rng, 8))

    def test_weight_validation(self):
        with pytest.raises(ParameterError):
            FSDWeights(w_a=-1.0)
        with pytest.raises(ParameterError):
            FSDWeights(w_a=0.0, w_b=0.0, w_L=0.0, w_theta=0.0)


class TestShapeMetrics:
    def test_identical_curves(self):
        d = fourier_descriptors(close_path(UNIT_SQUARE), n=10, samples=1024)
        with pytest.warns(UserWarning):
            zs, zl = shape_metrics(d, d)
        assert zs == 0.0
        assert zl == 0.0

    def test_scaled_copy(self):
        d = fourier_descriptors(close_path(UNIT_SQUARE), n=10, samples=1024)
        a = fourier_descriptors(close_path(UNIT_SQUARE * 1.5), n=10, samples=1024)
        with pytest.warns(UserWarning):
            zs, zl = shape_metrics(d, a)
        assert zs <= 1e-6
        assert zl == pytest.approx(50.0, abs=1e-9)

    def test_rotated_copy(self):
        rot = math.radians(61.0)
        R = np.array([[math.cos(rot), -math.sin(rot)], [math.sin(rot), math.cos(rot)]])
        d = fourier_descriptors(close_path(UNIT_SQUARE), n=10, samples=1024)
        a = fourier_descriptors(close_path(UNIT_SQUARE @ R.T), n=10, samples=1024)
        with pytest.warns(UserWarning):
            zs, _ = shape_metrics(d, a)
        assert zs <= 1e-6

    def test_zero_reference_invariants_dropped(self):
        d = FSDescriptor(
            A=np.array([0.0, 3.0]), B=np.array([0.0, 4.0]), theta=0.0, length=2.0, n=2
        )
        a = FSDescriptor(
            A=np.array([1.0, 6.0]), B=np.array([0.0, 8.0]), theta=0.0, length=1.0, n=2
        )
        with pytest.warns(UserWarning, match="zero reference"):
            zs, zl = shape_metrics(d, a)
        # only k=2 contributes: |5 - 10| / 5 = 100%
        assert zs == pytest.approx(100.0, rel=1e-12)
        assert zl == pytest.approx(50.0, rel=1e-12)
