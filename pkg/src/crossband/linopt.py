"""Max-min lattice distance search for the linear cross-band map.

Lattice pairs ``(k1, k2)`` are non-negative index offsets; the pair stands
for the symbol difference ``(k1, -k2)`` in (I, Q) level steps, which is why
the optical term carries a minus sign.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .channel import LinkSnr
from .constellation import QamGrid, make_linear_map


@dataclass(frozen=True)
class LatticePair:
    k1: int
    k2: int
    dsq: float


@dataclass(frozen=True)
class P1Solution:
    theta_star: float
    first: LatticePair
    second: LatticePair
    dmin: float
    dsecond: float


def lattice_pairs(grid: QamGrid) -> np.ndarray:
    s = grid.side
    k1, k2 = np.meshgrid(np.arange(s), np.arange(s), indexing="ij")
    pairs = np.column_stack([k1.ravel(), k2.ravel()])
    return pairs[1:]  # drop (0, 0)


def bias_for_theta(grid: QamGrid, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    a1 = math.sqrt(2.0) * np.cos(theta)
    a2 = math.sqrt(2.0) * np.sin(theta)
    combo = a1[..., None] * grid.points[:, 0] + a2[..., None] * grid.points[:, 1]
    return np.maximum(-combo.min(axis=-1), 0.0)


def _dsq(k1, k2, theta, grid: QamGrid, snr: LinkSnr):
    """Vectorized lattice distance; broadcasts ``theta`` against the pairs."""
    theta = np.asarray(theta, dtype=float)
    i_d = bias_for_theta(grid, theta)
    d = grid.spacing
    rf = (k1 * k1 + k2 * k2) * d * d * snr.gamma1_sq
    opt = (math.sqrt(2.0) * d * (k1 * np.cos(theta) - k2 * np.sin(theta))) ** 2
    return rf + opt * snr.gamma2_sq / (1.0 + i_d * i_d)


def lattice_dsq(k1: int, k2: int, theta: float, grid: QamGrid, snr: LinkSnr) -> float:
    if k1 == 0 and k2 == 0:
        raise ValueError("lattice pair (0, 0) is not a symbol difference")
    if k1 < 0 or k2 < 0:
        raise ValueError("lattice offsets are non-negative; the sign lives in the formula")
    # keep I_D bit-identical to the map builder
    i_d = make_linear_map(grid, theta).i_d
    d = grid.spacing
    rf = (k1 * k1 + k2 * k2) * d * d * snr.gamma1_sq
    opt = (math.sqrt(2.0) * d * (k1 * math.cos(theta) - k2 * math.sin(theta))) ** 2
    return float(rf + opt * snr.gamma2_sq / (1.0 + i_d * i_d))


def min_dsq(theta, grid: QamGrid, snr: LinkSnr) -> np.ndarray:
    """Smallest lattice distance at each angle in ``theta``."""
    pairs = lattice_pairs(grid)
    th = np.asarray(theta, dtype=float)[..., None]
    return _dsq(pairs[:, 0], pairs[:, 1], th, grid, snr).min(axis=-1)


def solve_p1(grid: QamGrid, snr: LinkSnr, n_theta: int = 16384,
             tie_rtol: float = 1e-6) -> P1Solution:
    """Brute-force angle search maximizing the minimum lattice distance.

    A uniform grid of ``n_theta`` angles over [0, pi/2] locates the best cell;
    a bounded scalar search on the two neighbouring cells refines it.
    Of two mirror-image optima the one below pi/4 is returned.
    """
    if n_theta < 2:
        raise ValueError("n_theta must be at least 2")
    thetas = np.linspace(0.0, math.pi / 2, n_theta)
    vals = min_dsq(thetas, grid, snr)
    # dmin(theta) = dmin(pi/2 - theta) by I/Q symmetry; take the smallest
    # angle among maxima equal up to rounding so the answer is resolution-stable
    best = int(np.flatnonzero(vals >= vals.max() * (1.0 - 1e-12))[0])
    lo = thetas[max(best - 1, 0)]
    hi = thetas[min(best + 1, n_theta - 1)]
    res = minimize_scalar(lambda t: -float(min_dsq(t, grid, snr)), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-10})
    theta = float(res.x)
    # the refined point must not lose to the grid optimum
    if float(min_dsq(theta, grid, snr)) < vals[best]:
        theta = float(thetas[best])
    theta = min(max(theta, 0.0), math.pi / 2)
    return p1_solution_at(theta, grid, snr, tie_rtol)


def p1_solution_at(theta: float, grid: QamGrid, snr: LinkSnr,
                   tie_rtol: float = 1e-6) -> P1Solution:
    """Smallest and second-smallest lattice distances at a fixed angle.

    If two different pairs share the minimum (within ``tie_rtol``) the second
    distance equals the first; otherwise it is the next distinct value.
    """
    pairs = lattice_pairs(grid)
    d = np.array([lattice_dsq(int(a), int(b), theta, grid, snr) for a, b in pairs])
    order = np.lexsort((pairs[:, 1], pairs[:, 0], d))
    i0, i1 = order[0], order[1]
    dmin = d[i0]
    first = LatticePair(int(pairs[i0, 0]), int(pairs[i0, 1]), float(dmin))
    second = LatticePair(int(pairs[i1, 0]), int(pairs[i1, 1]), float(d[i1]))
    dsecond = float(dmin) if d[i1] <= dmin * (1.0 + tie_rtol) else float(d[i1])
    return P1Solution(theta, first, second, float(dmin), dsecond)
