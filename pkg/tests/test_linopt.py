import itertools
import math

import numpy as np
import pytest

from crossband import (LinkSnr, build_linear_constellation, lattice_dsq, make_linear_map,
                       make_qam, solve_p1)
from crossband.channel import weights_for
from crossband.linopt import min_dsq, p1_solution_at


def pairwise_min(c, w):
    pp = c.plane_points()
    d = (((pp[:, None, :] - pp[None]) ** 2) * w.as_array()).sum(-1)
    return d[~np.eye(len(pp), dtype=bool)].min()


class TestLatticeDsq:
    def test_hand_value(self, grid16, snr10):
        assert lattice_dsq(1, 0, math.pi / 4, grid16, snr10) == pytest.approx(4.869565, abs=1e-6)

    def test_matches_built_constellation(self, grid16, lin45, snr10):
        w = weights_for(lin45, snr10, "plane")
        assert pairwise_min(lin45, w) == pytest.approx(
            lattice_dsq(1, 0, math.pi / 4, grid16, snr10), rel=1e-12)

    def test_diagonal_cancels_optical_term(self, grid16, snr10):
        assert lattice_dsq(1, 1, math.pi / 4, grid16, snr10) == pytest.approx(
            2 * grid16.spacing ** 2 * 10.0, rel=1e-12)

    @pytest.mark.parametrize("theta", [0.0, 0.4, 1.1, math.pi / 2])
    @pytest.mark.parametrize("k", [(1, 0), (2, 3), (3, 1)])
    def test_rf_only_limit(self, grid16, theta, k):
        s = LinkSnr(10.0, 1e-300)
        expect = (k[0] ** 2 + k[1] ** 2) * grid16.spacing ** 2 * 10.0
        assert lattice_dsq(*k, theta, grid16, s) == pytest.approx(expect, rel=1e-12)

    def test_zero_pair_rejected(self, grid16, snr10):
        with pytest.raises(ValueError):
            lattice_dsq(0, 0, 0.3, grid16, snr10)

    @pytest.mark.parametrize("theta", [0.1, 0.5, math.pi / 4, 1.3])
    def test_every_difference_vector_is_a_pair(self, grid16, theta):
        # the (k1, -k2) view plus point symmetry covers every symbol difference
        s = LinkSnr.from_db(7.0, 13.0)
        m = make_linear_map(grid16, theta)
        c = build_linear_constellation(grid16, m)
        w = weights_for(c, s, "plane")
        pp = c.plane_points()
        lattice = {}
        for a, b in itertools.product(range(4), repeat=2):
            if (a, b) != (0, 0):
                lattice[(a, -b)] = lattice_dsq(a, b, theta, grid16, s)
        ki = grid16.level_index
        for i, j in itertools.combinations(range(16), 2):
            d = ki[j] - ki[i]
            key = tuple(d) if (d[0] > 0 or (d[0] == 0 and d[1] < 0)) else tuple(-d)
            if key[1] > 0:  # (+, +) differences map to lattice (k1, -k2) with sign of k2 flipped
                continue
            dsq = float((((pp[i] - pp[j]) ** 2) * w.as_array()).sum())
            assert dsq == pytest.approx(lattice[key], rel=1e-10)


class TestSolveP1:
    @pytest.mark.parametrize("g1,g2", [(10, 10), (20, 10), (15, 0), (30, 30), (25, 5)])
    def test_pi4_when_rf_dominates(self, grid16, g1, g2):
        sol = solve_p1(grid16, LinkSnr.from_db(g1, g2))
        assert sol.theta_star == pytest.approx(math.pi / 4, abs=2e-4)
        assert (sol.first.k1, sol.first.k2) in {(1, 0), (0, 1)}
        assert sol.dsecond == sol.dmin

    def test_off_pi4_regime_against_dense_sweep(self, grid16):
        s = LinkSnr.from_db(10.0, 30.0)
        sol = solve_p1(grid16, s)
        th = np.linspace(0, math.pi / 2, 1_000_001)
        dense = np.concatenate([min_dsq(part, grid16, s) for part in np.array_split(th, 20)])
        assert abs(sol.theta_star - math.pi / 4) > 0.05
        assert sol.dmin >= dense.max() * (1 - 1e-9)
        assert sol.dmin > float(min_dsq(math.pi / 4, grid16, s))

    def test_resolution_stability(self, grid16):
        s = LinkSnr.from_db(10.0, 30.0)
        a = solve_p1(grid16, s, 16384)
        b = solve_p1(grid16, s, 65536)
        assert a.theta_star == pytest.approx(b.theta_star, abs=1e-6)
        assert (a.first.k1, a.first.k2) == (b.first.k1, b.first.k2)

    @pytest.mark.parametrize("g1,g2", [(10, 10), (10, 30), (5, 20), (0, 25)])
    def test_geometry_consistency(self, grid16, g1, g2):
        s = LinkSnr.from_db(g1, g2)
        sol = solve_p1(grid16, s)
        c = build_linear_constellation(grid16, make_linear_map(grid16, sol.theta_star))
        assert pairwise_min(c, weights_for(c, s, "plane")) == pytest.approx(sol.dmin, rel=1e-9)

    def test_invariants(self, grid16):
        sol = solve_p1(grid16, LinkSnr.from_db(10.0, 30.0))
        assert sol.dmin <= sol.dsecond
        assert 0.0 <= sol.theta_star <= math.pi / 2

    def test_n_theta_validation(self, grid16, snr10):
        with pytest.raises(ValueError):
            solve_p1(grid16, snr10, 1)

    def test_saturation(self, grid16):
        cap = 2 * grid16.spacing ** 2 * 10.0
        vals = [float(min_dsq(math.pi / 4, grid16, LinkSnr(10.0, g2)))
                for g2 in np.logspace(-2, 6, 40)]
        assert max(vals) <= cap * (1 + 1e-12)
        assert vals[-1] == pytest.approx(cap, rel=1e-4)

    def test_monotone_in_optical_snr(self, grid16):
        prev = 0.0
        for g2 in np.arange(-10, 41, 2.5):
            d = solve_p1(grid16, LinkSnr.from_db(12.0, g2), 4096).dmin
            assert d >= prev * (1 - 1e-9)
            prev = d

    def test_second_distance_off_symmetry(self, grid16):
        sol = p1_solution_at(0.3, grid16, LinkSnr.from_db(10.0, 20.0))
        assert sol.dsecond > sol.dmin
        assert (sol.second.k1, sol.second.k2) != (sol.first.k1, sol.first.k2)


def test_mirror_symmetry_and_tie_rule(grid16):
    s = LinkSnr.from_db(10.0, 30.0)
    th = np.linspace(0, math.pi / 2, 1001)
    np.testing.assert_allclose(min_dsq(th, grid16, s), min_dsq(math.pi / 2 - th, grid16, s),
                               rtol=1e-12)
    assert solve_p1(grid16, s).theta_star < math.pi / 4
