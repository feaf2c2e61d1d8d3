"""Constellation builders for cross-band RF/optical modulation.

All coordinates live in channel-equalized space: the RF axes carry the QAM
in-phase/quadrature amplitudes and the third axis carries the optical
intensity.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np

Kind = Literal["linear", "learned", "mcbm", "cbpam"]


class InvalidOrderError(ValueError):
    """Raised for constellation orders the builders cannot realize."""


@dataclass(frozen=True)
class QamGrid:
    """Unit-energy square M-QAM.

    Symbol ``i`` sits at level indices ``(i // sqrt(M), i % sqrt(M))`` so the
    in-phase index is the slow one, matching the usual s1..sM labeling
    (s1 at the bottom-left corner, s2 directly above it).
    """

    order: int
    spacing: float
    levels: np.ndarray
    points: np.ndarray

    @property
    def side(self) -> int:
        return int(round(math.sqrt(self.order)))

    @property
    def level_index(self) -> np.ndarray:
        """(M, 2) integer level indices (k_I, k_Q) of every symbol."""
        s = self.side
        idx = np.arange(self.order)
        return np.stack([idx // s, idx % s], axis=1)

    def symbol_at(self, k_i, k_q):
        return np.asarray(k_i) * self.side + np.asarray(k_q)


def make_qam(M: int) -> QamGrid:
    if not isinstance(M, (int, np.integer)) or M < 4:
        raise InvalidOrderError(f"QAM order must be a perfect square >= 4, got {M!r}")
    side = math.isqrt(int(M))
    if side * side != M:
        raise InvalidOrderError(f"QAM order must be a perfect square, got {M}")
    spacing = math.sqrt(6.0 / (M - 1))
    levels = (np.arange(side) - (side - 1) / 2.0) * spacing
    k = np.arange(M)
    points = np.stack([levels[k // side], levels[k % side]], axis=1)
    return QamGrid(order=int(M), spacing=spacing, levels=levels, points=points)


@dataclass(frozen=True)
class LinearMap:
    theta: float
    a1: float
    a2: float
    i_d: float

    @property
    def norm(self) -> float:
        return math.sqrt(1.0 + self.i_d**2)

    def to_plane(self, x_o):
        """Undo bias and normalization: intensity -> a1*x_I + a2*x_Q."""
        return self.norm * np.asarray(x_o) - self.i_d

    def to_intensity(self, t):
        return (np.asarray(t) + self.i_d) / self.norm


def make_linear_map(grid: QamGrid, theta: float) -> LinearMap:
    if not (0.0 <= theta <= math.pi / 2):
        raise ValueError(f"mapping angle must lie in [0, pi/2], got {theta}")
    a1 = math.sqrt(2.0) * math.cos(theta)
    a2 = math.sqrt(2.0) * math.sin(theta)
    combo = a1 * grid.points[:, 0] + a2 * grid.points[:, 1]
    i_d = max(0.0, -float(combo.min()))
    return LinearMap(theta=float(theta), a1=a1, a2=a2, i_d=i_d)


@dataclass(frozen=True)
class Constellation3D:
    points: np.ndarray
    kind: Kind
    map: Optional[LinearMap] = None
    grid: Optional[QamGrid] = field(default=None, repr=False)

    def __post_init__(self):
        if (self.kind == "linear") != (self.map is not None):
            raise ValueError("a LinearMap is required for, and only for, kind='linear'")
        if np.any(self.points[:, 2] < -1e-12):
            raise ValueError("optical intensities must be non-negative")

    @property
    def order(self) -> int:
        return self.points.shape[0]

    @property
    def i_d(self) -> float:
        return self.map.i_d if self.map is not None else 0.0

    def plane_points(self) -> np.ndarray:
        """Points with the optical axis in the plane frame (linear kind only)."""
        if self.map is None:
            raise ValueError("plane frame is only defined for linear constellations")
        out = self.points.copy()
        # exact plane equation rather than a round trip through the intensity
        out[:, 2] = self.map.a1 * out[:, 0] + self.map.a2 * out[:, 1]
        return out


def build_linear_constellation(grid: QamGrid, lmap: LinearMap) -> Constellation3D:
    xi, xq = grid.points[:, 0], grid.points[:, 1]
    x_o = (lmap.a1 * xi + lmap.a2 * xq + lmap.i_d) / lmap.norm
    # exact minimum lands on 0 up to rounding; keep it feasible
    x_o = np.maximum(x_o, 0.0)
    pts = np.column_stack([xi, xq, x_o])
    return Constellation3D(points=pts, kind="linear", map=lmap, grid=grid)


def build_mcbm_constellation(grid: QamGrid) -> Constellation3D:
    x_o = np.hypot(grid.points[:, 0], grid.points[:, 1])
    pts = np.column_stack([grid.points, x_o])
    return Constellation3D(points=pts, kind="mcbm", grid=grid)


def build_cbpam_constellation(M: int) -> Constellation3D:
    if M < 2:
        raise InvalidOrderError(f"CB-PAM needs at least 2 levels, got {M}")
    i = np.arange(M, dtype=float)
    delta = math.sqrt(M / np.sum(i**2))
    lv = i * delta
    pts = np.column_stack([lv, np.zeros(M), lv])
    return Constellation3D(points=pts, kind="cbpam")


def build_learned_constellation(grid: QamGrid, intensities) -> Constellation3D:
    z = np.asarray(intensities, dtype=float)
    if z.shape != (grid.order,):
        raise ValueError(f"expected {grid.order} intensities, got shape {z.shape}")
    pts = np.column_stack([grid.points, z])
    return Constellation3D(points=pts, kind="learned", grid=grid)


def intensity_collisions(c: Constellation3D, tol: float = 1e-12) -> list[tuple[int, int]]:
    """Unordered symbol pairs sharing one optical intensity."""
    z = c.points[:, 2]
    out = []
    for i in range(len(z)):
        for j in range(i + 1, len(z)):
            if abs(z[i] - z[j]) <= tol:
                out.append((i, j))
    return out


def export_constellation(c: Constellation3D, path) -> tuple[Path, Path]:
    """Write ``index,x_i,x_q,x_o`` CSV plus a JSON sidecar with the metadata.

    Returns the (csv, json) paths. The sidecar sits next to the CSV with a
    ``.json`` suffix.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "x_i", "x_q", "x_o"])
        for k, (xi, xq, xo) in enumerate(c.points):
            w.writerow([k, f"{xi:.9g}", f"{xq:.9g}", f"{xo:.9g}"])
    meta = {
        "kind": c.kind,
        "theta": c.map.theta if c.map is not None else None,
        "i_d": c.i_d,
        "m": c.order,
    }
    if c.kind in ("mcbm", "cbpam"):
        meta["note"] = "baseline reimplementation (approximation of the cited scheme)"
    side = path.with_suffix(".json")
    side.write_text(json.dumps(meta, indent=2) + "\n")
    return path, side


def load_constellation(path) -> Constellation3D:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    pts = rows[:, 1:4]
    M = int(meta["m"])
    kind = meta["kind"]
    lmap = None
    grid = None
    if kind in ("linear", "learned", "mcbm"):
        grid = make_qam(M)
    if kind == "linear":
        lmap = make_linear_map(grid, float(meta["theta"]))
    return Constellation3D(points=pts, kind=kind, map=lmap, grid=grid)
