"""Seeded AWGN channel in equalized coordinates.

After dividing the RF outputs by h1*p1 and the optical output by h2*p2 the
only channel parameters left are the two received SNRs, so everything here
is parameterized by :class:`LinkSnr`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .constellation import Constellation3D, LinearMap

CHUNK_SIZE = 1 << 16

Frame = Literal["intensity", "plane"]


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class LinkSnr:
    gamma1_sq: float
    gamma2_sq: float

    def __post_init__(self):
        for name in ("gamma1_sq", "gamma2_sq"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive, got {v}")

    @classmethod
    def from_db(cls, gamma1_db: float, gamma2_db: float) -> "LinkSnr":
        return cls(float(db_to_linear(gamma1_db)), float(db_to_linear(gamma2_db)))

    @property
    def gamma1_db(self) -> float:
        return float(linear_to_db(self.gamma1_sq))

    @property
    def gamma2_db(self) -> float:
        return float(linear_to_db(self.gamma2_sq))


@dataclass(frozen=True)
class MetricWeights:
    """Per-axis inverse noise variances of the weighted detection metric."""

    w_i: float
    w_q: float
    w_o: float

    def __post_init__(self):
        if min(self.w_i, self.w_q, self.w_o) <= 0:
            raise ValueError("metric weights must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.w_i, self.w_q, self.w_o])

    def scaled(self, factor: float) -> "MetricWeights":
        return MetricWeights(self.w_i * factor, self.w_q * factor, self.w_o * factor)


def metric_weights(snr: LinkSnr, i_d: float = 0.0) -> MetricWeights:
    """Weights for the plane frame of a linear map with bias ``i_d``.

    With ``i_d=0`` these are the intensity-frame weights used by every other
    constellation kind.
    """
    return MetricWeights(snr.gamma1_sq, snr.gamma1_sq, snr.gamma2_sq / (1.0 + i_d**2))


def weights_for(c: Constellation3D, snr: LinkSnr, frame: Frame) -> MetricWeights:
    if frame == "plane":
        return metric_weights(snr, c.i_d)
    return metric_weights(snr)


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Chunk ``k`` of the stream starts at Philox counter ``k << 128`` so any
    chunk can be generated without touching the ones before it, which keeps
    the sample-to-symbol assignment independent of how chunks are spread over
    workers.
    """

    seed: int
    stream_id: int = 0

    def generator(self, chunk: int = 0) -> np.random.Generator:
        key = np.array([self.seed & 0xFFFFFFFFFFFFFFFF, self.stream_id & 0xFFFFFFFFFFFFFFFF],
                       dtype=np.uint64)
        counter = np.array([0, 0, chunk, 0], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))

    def substream(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator(0)
    return rng


def noise_sample(snr: LinkSnr, rng, size=None, i_d: float = 0.0) -> np.ndarray:
    """Zero-mean Gaussian noise with variances (1/g1, 1/g1, (1+i_d^2)/g2).

    ``i_d=0`` gives the intensity-frame optical variance; pass the map's bias
    to get plane-frame noise directly. ``size`` is the number of 3-vectors;
    ``None`` returns a single vector.
    """
    gen = _as_generator(rng)
    shape = (3,) if size is None else (int(size), 3)
    std = np.array([
        1.0 / math.sqrt(snr.gamma1_sq),
        1.0 / math.sqrt(snr.gamma1_sq),
        math.sqrt((1.0 + i_d**2) / snr.gamma2_sq),
    ])
    return gen.standard_normal(shape) * std


@dataclass(frozen=True)
class Received:
    """Received 3D samples tagged with the frame of their optical axis."""

    samples: np.ndarray
    frame: Frame = "intensity"

    def to_plane(self, lmap: LinearMap) -> "Received":
        if self.frame == "plane":
            return self
        s = np.array(self.samples, dtype=float, copy=True)
        s[..., 2] = lmap.to_plane(s[..., 2])
        return Received(s, "plane")

    def to_intensity(self, lmap: LinearMap) -> "Received":
        if self.frame == "intensity":
            return self
        s = np.array(self.samples, dtype=float, copy=True)
        s[..., 2] = lmap.to_intensity(s[..., 2])
        return Received(s, "intensity")


def transmit(c: Constellation3D, idx, snr: LinkSnr, rng) -> Received:
    """Send symbol(s) ``idx`` through the channel; returns intensity-frame samples.

    ``idx`` may be a scalar or an integer array; the output has matching
    leading shape with a trailing axis of 3.
    """
    idx_arr = np.asarray(idx)
    if np.any(idx_arr < 0) or np.any(idx_arr >= c.order):
        raise IndexError(f"symbol index out of range [0, {c.order})")
    gen = _as_generator(rng)
    if idx_arr.ndim == 0:
        return Received(c.points[int(idx_arr)] + noise_sample(snr, gen), "intensity")
    flat = idx_arr.reshape(-1)
    y = c.points[flat] + noise_sample(snr, gen, size=flat.size)
    return Received(y.reshape(idx_arr.shape + (3,)), "intensity")


def chunk_sizes(n: int, chunk_size: int = CHUNK_SIZE) -> list[int]:
    full, rest = divmod(int(n), int(chunk_size))
    return [chunk_size] * full + ([rest] if rest else [])
