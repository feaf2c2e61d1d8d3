"""Symbol detectors for 3D cross-band constellations."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .channel import MetricWeights, Received
from .constellation import Constellation3D, LinearMap, QamGrid


class Detection(NamedTuple):
    index: np.ndarray
    metric: np.ndarray


class PlanePoint(NamedTuple):
    X: np.ndarray
    Y: np.ndarray
    s: np.ndarray


def _unwrap(r):
    if isinstance(r, Received):
        return r.samples, r.frame
    return np.asarray(r, dtype=float), None


def weighted_dsq(r, points, w: MetricWeights) -> np.ndarray:
    """Weighted squared distance between rows of ``r`` and ``points``.

    Broadcasts like ``r - points`` over all but the last axis. Both detectors
    score their candidates through this one expression so equal metrics
    compare equal bit for bit.
    """
    r = np.asarray(r, dtype=float)
    points = np.asarray(points, dtype=float)
    # in-place passes; same operation order as w*(r-p)**2 summed over axes
    out = np.subtract(r[..., 0], points[..., 0])
    np.multiply(out, out, out=out)
    out *= w.w_i
    tmp = np.subtract(r[..., 1], points[..., 1])
    np.multiply(tmp, tmp, out=tmp)
    tmp *= w.w_q
    out += tmp
    np.subtract(r[..., 2], points[..., 2], out=tmp)
    np.multiply(tmp, tmp, out=tmp)
    tmp *= w.w_o
    out += tmp
    return out


def detect_ml(c: Constellation3D, r, w: MetricWeights) -> Detection:
    """Exhaustive minimum-weighted-distance detection.

    A :class:`Received` in the plane frame is scored against the plane-frame
    points of a linear constellation; raw arrays are taken to be in the
    intensity frame. Ties go to the lowest index.
    """
    samples, frame = _unwrap(r)
    pts = c.plane_points() if frame == "plane" else c.points
    single = samples.ndim == 1
    s = samples[None, :] if single else samples
    d = weighted_dsq(s[..., None, :], pts, w)
    idx = np.argmin(d, axis=-1)
    metric = d[np.arange(d.shape[0]), idx]
    if single:
        return Detection(int(idx[0]), float(metric[0]))
    return Detection(idx, metric)


def project_to_plane(r, lmap: LinearMap, w: MetricWeights) -> PlanePoint:
    """Weighted least-squares projection of plane-frame samples onto t = a1 x + a2 y."""
    samples, frame = _unwrap(r)
    if frame == "intensity":
        raise ValueError("project_to_plane expects plane-frame samples")
    u, v, t = samples[..., 0], samples[..., 1], samples[..., 2]
    a1, a2 = lmap.a1, lmap.a2
    denom = 1.0 + w.w_o * (a1 * a1 / w.w_i + a2 * a2 / w.w_q)
    s = (a1 * u + a2 * v - t) / denom
    X = u - (w.w_o * a1 / w.w_i) * s
    Y = v - (w.w_o * a2 / w.w_q) * s
    return PlanePoint(X, Y, s)


def round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _nearest_level(coord, grid: QamGrid):
    # level k sits at (k - off) * spacing
    off = (grid.side - 1) / 2.0
    k = round_half_away(coord / grid.spacing - (off % 1.0)) + (off % 1.0) + off
    return np.clip(k, 0, grid.side - 1).astype(np.intp)


def detect_fast(r, grid: QamGrid, lmap: LinearMap, w: MetricWeights,
                refine: bool = True) -> Detection:
    """Constant-time detection for linear-map constellations.

    Projects onto the mapping plane, rounds each plane coordinate to the
    nearest level and clamps to the finite grid. Per-axis rounding is only ML
    when the in-plane metric has no cross term; with ``refine`` (default) the
    rounded point seeds an exact search over the few level indices inside the
    metric ellipse through it, giving the ML decision at a cost that does not
    grow with M. ``refine=False`` returns the bare rounded decision.
    """
    samples, frame = _unwrap(r)
    if frame == "intensity":
        raise ValueError("detect_fast expects plane-frame samples")
    single = samples.ndim == 1
    s = np.atleast_2d(samples)
    p = project_to_plane(s, lmap, w)
    k_i = _nearest_level(p.X, grid)
    k_q = _nearest_level(p.Y, grid)
    table = plane_table(grid, lmap)
    if refine:
        idx, metric = _refine(s, p, k_i, k_q, grid, table, lmap, w)
    else:
        idx = k_i * grid.side + k_q
        metric = weighted_dsq(s, table[idx], w)
    if single:
        return Detection(int(idx[0]), float(metric[0]))
    return Detection(idx, metric)


def plane_table(grid: QamGrid, lmap: LinearMap) -> np.ndarray:
    """Plane-frame symbol coordinates, computed exactly as ``plane_points``."""
    pts = grid.points
    return np.column_stack([pts[:, 0], pts[:, 1], lmap.a1 * pts[:, 0] + lmap.a2 * pts[:, 1]])


def _refine(s, p: PlanePoint, k_i, k_q, grid: QamGrid, table, lmap: LinearMap,
            w: MetricWeights):
    """Exact nearest grid point, seeded by the rounded guess.

    Candidates come from every I level inside the metric ellipse through the
    seed; for each, the Q level follows from 1D rounding of the conditional
    minimizer (plus its two neighbours). Candidates are laid out in increasing
    symbol index and scored with the full 3D metric, so ``argmin`` breaks ties
    toward the lower index exactly like :func:`detect_ml`.
    """
    a1, a2 = lmap.a1, lmap.a2
    g11 = w.w_i + w.w_o * a1 * a1
    g22 = w.w_q + w.w_o * a2 * a2
    g12 = w.w_o * a1 * a2
    det = g11 * g22 - g12 * g12
    lv = grid.levels
    side = grid.side
    step = grid.spacing
    off = (side - 1) / 2.0

    e1 = p.X - lv[k_i]
    e2 = p.Y - lv[k_q]
    upper = g11 * e1 * e1 + 2.0 * g12 * e1 * e2 + g22 * e2 * e2
    # |e1| <= sqrt(U * (G^-1)_11) on the ellipse {e : e'Ge <= U}
    half = np.sqrt(upper * g22 / det) * (1.0 + 1e-6) + 1e-9
    lo = np.clip(np.ceil((p.X - half) / step + off), 0, side - 1).astype(np.intp)
    hi = np.clip(np.floor((p.X + half) / step + off), 0, side - 1).astype(np.intp)
    lo = np.minimum(lo, k_i)
    hi = np.maximum(hi, k_i)
    span = int((hi - lo).max()) + 1

    ki = lo[:, None] + np.arange(span)                       # (n, span)
    valid = ki <= hi[:, None]
    ki = np.minimum(ki, side - 1)
    yq = p.Y[:, None] + (g12 / g22) * (p.X[:, None] - lv[ki])
    kq = np.floor(yq / step + off + 0.5).astype(np.intp)
    kq = np.clip(kq[..., None] + np.array([-1, 0, 1]), 0, side - 1)  # (n, span, 3)
    idx = (ki[..., None] * side + kq).reshape(len(s), -1)
    cost = weighted_dsq(s[:, None, :], table[idx], w)
    cost[~np.repeat(valid, 3, axis=1)] = np.inf
    j = np.argmin(cost, axis=1)
    rows = np.arange(len(s))
    return idx[rows, j], cost[rows, j]
