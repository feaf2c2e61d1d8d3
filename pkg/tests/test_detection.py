import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossband import (LinkSnr, Received, RngStream, build_linear_constellation,
                       build_mcbm_constellation, detect_fast, detect_ml, make_linear_map,
                       make_qam, metric_weights, project_to_plane, solve_p1, transmit)
from crossband.channel import MetricWeights, weights_for
from crossband.detection import round_half_away


def brute_force(points, r, w):
    """Loop-based argmin with first-index ties, written independently."""
    out = []
    for y in r:
        best, best_d = 0, math.inf
        for k, p in enumerate(points):
            d = w[0] * (y[0] - p[0]) ** 2 + w[1] * (y[1] - p[1]) ** 2 + w[2] * (y[2] - p[2]) ** 2
            if d < best_d:
                best, best_d = k, d
        out.append(best)
    return np.array(out)


def noisy_plane(c, snr, n, seed):
    gen = RngStream(seed).generator(0)
    return transmit(c, gen.integers(0, c.order, n), snr, gen).to_plane(c.map)


class TestMl:
    def test_exact_point(self, lin45, snr10):
        w = metric_weights(snr10)
        for k in range(16):
            d = detect_ml(lin45, lin45.points[k], w)
            assert d.index == k and d.metric == 0.0

    def test_midpoint_tie_goes_low(self):
        from crossband.constellation import Constellation3D

        c = Constellation3D(points=np.array([[-1.0, 0, 0.5], [1.0, 0, 0.5]]), kind="learned")
        assert detect_ml(c, np.array([0.0, 0.3, 0.5]), MetricWeights(2.0, 1.0, 3.0)).index == 0

    def test_matches_brute_force(self, lin45):
        gen = np.random.default_rng(7)
        n = 2000  # loop oracle is slow; the vectorized form is checked at 1e5 below
        r = gen.uniform(-2, 2, (n, 3))
        w = metric_weights(LinkSnr(3.0, 7.0))
        np.testing.assert_array_equal(detect_ml(lin45, r, w).index,
                                      brute_force(lin45.points, r, w.as_array()))

    def test_matches_independent_argmin_1e5(self, lin45):
        gen = np.random.default_rng(8)
        r = gen.uniform(-2, 2, (100_000, 3))
        w = np.array([3.0, 3.0, 7.0])
        d = (((r[:, None, :] - lin45.points[None]) ** 2) * w).sum(-1)
        np.testing.assert_array_equal(detect_ml(lin45, r, MetricWeights(*w)).index, d.argmin(1))

    def test_metric_is_winner_distance(self, lin45):
        r = np.random.default_rng(9).normal(size=(500, 3))
        w = MetricWeights(2.0, 3.0, 5.0)
        d = detect_ml(lin45, r, w)
        p = lin45.points[d.index]
        np.testing.assert_allclose(d.metric, ((r - p) ** 2 * w.as_array()).sum(1), rtol=1e-12)

    @pytest.mark.parametrize("factor", [1e-3, 0.5, 7.0, 1e4])
    def test_scale_invariance(self, lin45, factor):
        r = np.random.default_rng(10).normal(size=(5000, 3))
        w = MetricWeights(2.0, 3.0, 5.0)
        np.testing.assert_array_equal(detect_ml(lin45, r, w).index,
                                      detect_ml(lin45, r, w.scaled(factor)).index)

    def test_total_on_bounding_box(self, grid16):
        c = build_mcbm_constellation(grid16)
        r = np.random.default_rng(11).uniform([-2, -2, -0.5], [2, 2, 2], (1_000_000, 3))
        idx = detect_ml(c, r, MetricWeights(1.0, 1.0, 1.0)).index
        assert idx.shape == (1_000_000,)
        assert idx.min() >= 0 and idx.max() < 16
        np.testing.assert_array_equal(idx, detect_ml(c, r, MetricWeights(1.0, 1.0, 1.0)).index)


class TestProjection:
    def test_on_plane(self, map45):
        gen = np.random.default_rng(0)
        u, v = gen.normal(size=(2, 100))
        r = Received(np.column_stack([u, v, map45.a1 * u + map45.a2 * v]), "plane")
        p = project_to_plane(r, map45, MetricWeights(3.0, 3.0, 2.0))
        np.testing.assert_allclose(p.s, 0.0, atol=1e-14)
        np.testing.assert_allclose(p.X, u)
        np.testing.assert_allclose(p.Y, v)

    def test_useless_optical_link(self, map45):
        r = Received(np.array([[0.3, -0.2, 5.0]]), "plane")
        p = project_to_plane(r, map45, MetricWeights(1.0, 1.0, 1e-14))
        assert p.X[0] == pytest.approx(0.3, abs=1e-12)
        assert p.Y[0] == pytest.approx(-0.2, abs=1e-12)

    def test_rejects_intensity_frame(self, map45):
        with pytest.raises(ValueError):
            project_to_plane(Received(np.zeros((1, 3))), map45, MetricWeights(1, 1, 1))

    @settings(max_examples=100, deadline=None)
    @given(u=st.floats(-3, 3), v=st.floats(-3, 3), t=st.floats(-3, 3),
           theta=st.floats(0, math.pi / 2), wo=st.floats(0.01, 100))
    def test_local_minimality(self, u, v, t, theta, wo):
        m = make_linear_map(make_qam(16), theta)
        w = MetricWeights(2.0, 2.0, wo)
        p = project_to_plane(Received(np.array([u, v, t]), "plane"), m, w)

        def dp(X, Y):
            return w.w_i * (u - X) ** 2 + w.w_q * (v - Y) ** 2 + w.w_o * (t - m.a1 * X - m.a2 * Y) ** 2

        base = dp(p.X, p.Y)
        eps = 1e-4
        for dx, dy in ((eps, 0), (-eps, 0), (0, eps), (0, -eps)):
            assert base <= dp(p.X + dx, p.Y + dy) + 1e-12


class TestFast:
    def test_noiseless(self, grid16, lin45, map45, snr10):
        r = Received(lin45.points, "intensity").to_plane(map45)
        d = detect_fast(r, grid16, map45, weights_for(lin45, snr10, "plane"))
        np.testing.assert_array_equal(d.index, np.arange(16))

    def test_rejects_intensity_frame(self, grid16, map45):
        with pytest.raises(ValueError):
            detect_fast(Received(np.zeros((2, 3))), grid16, map45, MetricWeights(1, 1, 1))

    @pytest.mark.parametrize("g1,g2", [(10, 10), (0, 20), (20, 0), (5, 15), (15, 30)])
    def test_equals_ml(self, grid16, g1, g2):
        snr = LinkSnr.from_db(g1, g2)
        sol = solve_p1(grid16, snr)
        m = make_linear_map(grid16, sol.theta_star)
        c = build_linear_constellation(grid16, m)
        r = noisy_plane(c, snr, 100_000, seed=g1 * 100 + g2)
        w = weights_for(c, snr, "plane")
        a, b = detect_fast(r, grid16, m, w), detect_ml(c, r, w)
        np.testing.assert_array_equal(a.index, b.index)
        np.testing.assert_array_equal(a.metric, b.metric)

    @pytest.mark.parametrize("M", [4, 64, 256])
    @pytest.mark.parametrize("theta", [0.0, 0.3, math.pi / 4, 1.2, math.pi / 2])
    def test_equals_ml_other_orders(self, M, theta):
        g = make_qam(M)
        m = make_linear_map(g, theta)
        c = build_linear_constellation(g, m)
        snr = LinkSnr.from_db(18.0, 12.0)
        r = noisy_plane(c, snr, 20_000, seed=M)
        w = weights_for(c, snr, "plane")
        np.testing.assert_array_equal(detect_fast(r, g, m, w).index, detect_ml(c, r, w).index)

    def test_boundary_perturbed(self, grid16, lin45, map45, snr10):
        # midpoints between every pair of neighbouring points, nudged by +-1e-9
        w = weights_for(lin45, snr10, "plane")
        pp = lin45.plane_points()
        mids = []
        for i in range(16):
            for j in range(i + 1, 16):
                mid = 0.5 * (pp[i] + pp[j])
                direction = (pp[j] - pp[i]) / np.linalg.norm(pp[j] - pp[i])
                mids += [mid, mid + 1e-9 * direction, mid - 1e-9 * direction]
        r = Received(np.array(mids), "plane")
        np.testing.assert_array_equal(detect_fast(r, grid16, map45, w).index,
                                      detect_ml(lin45, r, w).index)

    def test_level_boundary_enumeration(self, grid16, map45):
        # points on the mapping plane so the projection is the identity
        d = grid16.spacing
        w = MetricWeights(10.0, 10.0, 10.0 / (1 + map45.i_d ** 2))
        lv = grid16.levels
        cases = []
        for k in range(3):
            for frac in (0.49, 0.5, 0.51):
                u = lv[k] + frac * d
                v = lv[1]
                cases.append([u, v, map45.a1 * u + map45.a2 * v])
        r = Received(np.array(cases), "plane")
        c = build_linear_constellation(grid16, map45)
        fast = detect_fast(r, grid16, map45, w).index
        np.testing.assert_array_equal(fast, detect_ml(c, r, w).index)
        rounded = detect_fast(r, grid16, map45, w, refine=False).index
        for k in range(3):
            assert rounded[3 * k] // 4 == k          # 0.49 D: nearer level
            assert rounded[3 * k + 2] // 4 == k + 1  # 0.51 D: next level

    def test_clamping_far_outside(self, grid16, map45):
        w = MetricWeights(5.0, 5.0, 1.0)
        r = Received(np.array([[50.0, 50.0, 100.0], [-50.0, -50.0, -100.0], [50.0, -50.0, 0.0]]),
                     "plane")
        np.testing.assert_array_equal(detect_fast(r, grid16, map45, w).index, [15, 0, 12])


@pytest.mark.parametrize("x,expect", [(0.5, 1.0), (-0.5, -1.0), (1.5, 2.0), (-2.5, -3.0),
                                      (0.49, 0.0), (2.51, 3.0)])
def test_round_half_away(x, expect):
    assert round_half_away(x) == expect
