"""Monte Carlo estimators: confusion matrices, SEP, discrete and continuous MI."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Literal, Optional, Union

import numpy as np
from scipy.special import logsumexp

from .channel import CHUNK_SIZE, LinkSnr, Received, RngStream, chunk_sizes, weights_for
from .constellation import Constellation3D
from .detection import detect_fast, detect_ml


class ConfigurationError(ValueError):
    pass


@dataclass
class ConfusionMatrix:
    counts: np.ndarray

    @property
    def n_total(self) -> int:
        return int(self.counts.sum())

    @property
    def order(self) -> int:
        return self.counts.shape[0]

    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def conditional(self) -> np.ndarray:
        """Empirical P(detected j | sent i); empty rows stay zero."""
        rows = self.row_totals()[:, None].astype(float)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    def to_csv(self, path) -> None:
        np.savetxt(path, self.counts, fmt="%d", delimiter=",")


def _confusion_chunk(chunk: int, size: int, c: Constellation3D, snr: LinkSnr, seed: int,
                     stream_id: int, detector: str) -> np.ndarray:
    gen = RngStream(seed, stream_id).generator(chunk)
    M = c.order
    sent = gen.integers(0, M, size=size)
    std = np.array([1.0 / math.sqrt(snr.gamma1_sq)] * 2 + [1.0 / math.sqrt(snr.gamma2_sq)])
    y = c.points[sent] + gen.standard_normal((size, 3)) * std
    if c.kind == "linear":
        r = Received(y, "intensity").to_plane(c.map)
        w = weights_for(c, snr, "plane")
        if detector == "fast":
            got = detect_fast(r, c.grid, c.map, w).index
        else:
            got = detect_ml(c, r, w).index
    else:
        got = detect_ml(c, y, weights_for(c, snr, "intensity")).index
    return np.bincount(sent * M + got, minlength=M * M).reshape(M, M)


def run_confusion(c: Constellation3D, snr: LinkSnr, n: int, seed: int,
                  detector: Literal["ml", "fast"] = "ml", workers: int = 1,
                  chunk_size: int = CHUNK_SIZE, stream_id: int = 0) -> ConfusionMatrix:
    """Transmit ``n`` equiprobable symbols and tally (sent, detected) pairs.

    Symbols are processed in fixed chunks, each drawing from its own counter
    block of the ``(seed, stream_id)`` stream, so the result does not depend
    on ``workers``.
    """
    if n < c.order:
        raise ConfigurationError(f"need at least M={c.order} symbols, got {n}")
    if detector not in ("ml", "fast"):
        raise ConfigurationError(f"unknown detector {detector!r}")
    if detector == "fast" and c.kind != "linear":
        raise ConfigurationError("the fast detector needs a linear-map constellation")
    sizes = chunk_sizes(n, chunk_size)
    job = partial(_confusion_chunk, c=c, snr=snr, seed=seed, stream_id=stream_id,
                  detector=detector)
    total = np.zeros((c.order, c.order), dtype=np.int64)
    if workers <= 1:
        for k, size in enumerate(sizes):
            total += job(k, size)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(job, range(len(sizes)), sizes,
                                 chunksize=max(1, len(sizes) // (4 * workers))):
                total += part
    return ConfusionMatrix(total)


def sep_from_confusion(cm: ConfusionMatrix) -> float:
    """Fraction of transmissions detected as some other symbol."""
    n = cm.n_total
    if n <= 0:
        raise ValueError("empty confusion matrix")
    return float((n - np.trace(cm.counts)) / n)


def sep_stderr(sep: float, n: int) -> float:
    return math.sqrt(max(sep * (1.0 - sep), 0.0) / n)


def mi_discrete(cm: ConfusionMatrix) -> float:
    """Post-detection mutual information in bits, uniform input prior."""
    if cm.n_total <= 0:
        raise ValueError("empty confusion matrix")
    M = cm.order
    p = cm.conditional()
    col = p.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(p > 0, p / col[None, :], 1.0)
        terms = np.where(p > 0, p * np.log2(ratio), 0.0)
    mi = math.log2(M) + terms.sum() / M
    return float(min(max(mi, 0.0), math.log2(M)))


@dataclass(frozen=True)
class ContinuousInputSpec:
    """Continuous RF input law pushed through a linear optical map."""

    family: Literal["gaussian", "scaled-chi-square-1"] = "gaussian"
    sigma_x_sq: float = 1.0
    a1: float = 1.0
    a2: float = 1.0
    i_d: float = 0.0

    @property
    def chi_scale(self) -> float:
        # E[(s*chi2_1)^2] = 3 s^2
        return math.sqrt(self.sigma_x_sq / 3.0)


def sample_continuous(spec: ContinuousInputSpec, rng, n: Optional[int] = None) -> np.ndarray:
    """Noiseless channel means (x_I, x_Q, optical) for random inputs."""
    gen = rng.generator(0) if isinstance(rng, RngStream) else rng
    size = 1 if n is None else int(n)
    if spec.family == "gaussian":
        x = gen.standard_normal((size, 2)) * math.sqrt(spec.sigma_x_sq)
    elif spec.family == "scaled-chi-square-1":
        x = spec.chi_scale * gen.standard_normal((size, 2)) ** 2
    else:
        raise ConfigurationError(f"unknown input family {spec.family!r}")
    opt = (spec.a1 * x[:, 0] + spec.a2 * x[:, 1] + spec.i_d) / math.sqrt(1.0 + spec.i_d**2)
    out = np.column_stack([x, opt])
    return out[0] if n is None else out


def _log_mixture_density(y: np.ndarray, means: np.ndarray, inv_var: np.ndarray,
                         log_norm: float, block: int = 256) -> np.ndarray:
    out = np.empty(y.shape[0])
    log_k = math.log(means.shape[0])
    for s in range(0, y.shape[0], block):
        yy = y[s:s + block]
        d = ((yy[:, None, :] - means[None, :, :]) ** 2 * inv_var).sum(axis=-1)
        out[s:s + block] = logsumexp(-0.5 * d, axis=1) - log_k + log_norm
    return out


def mi_continuous_nested(source: Union[ContinuousInputSpec, Constellation3D], snr: LinkSnr,
                         n_outer: int = 20000, n_inner: int = 20000, seed: int = 0,
                         n_blocks: int = 20) -> tuple[float, float]:
    """Nested Monte Carlo estimate of I(X;Y) in bits with a jackknife stderr.

    The output entropy is estimated from ``n_outer`` channel outputs, each
    scored under a Gaussian mixture centred on ``n_inner`` fresh input draws
    (or on the exact symbol set for a discrete constellation). The Gaussian
    noise entropy is subtracted in closed form. Outputs are in the intensity
    frame.
    """
    if n_outer < 1000 or n_inner < 1000:
        raise ConfigurationError("n_outer and n_inner must be at least 1000")
    var = np.array([1.0 / snr.gamma1_sq, 1.0 / snr.gamma1_sq, 1.0 / snr.gamma2_sq])
    if not np.all(np.isfinite(var)) or np.any(var <= 0):
        raise FloatingPointError("degenerate noise covariance")
    root = RngStream(seed)
    g_outer = root.substream(1).generator(0)
    g_noise = root.substream(2).generator(0)
    g_inner = root.substream(3).generator(0)
    if isinstance(source, Constellation3D):
        sent = g_outer.integers(0, source.order, size=n_outer)
        x_out = source.points[sent]
        inner = source.points
    else:
        x_out = sample_continuous(source, g_outer, n_outer)
        inner = sample_continuous(source, g_inner, n_inner)
    y = x_out + g_noise.standard_normal((n_outer, 3)) * np.sqrt(var)
    log_norm = -0.5 * (3 * math.log(2 * math.pi) + np.log(var).sum())
    logf = _log_mixture_density(y, inner, 1.0 / var, log_norm) / math.log(2.0)
    h_noise = 0.5 * (3 * math.log2(2 * math.pi * math.e) + np.log2(var).sum())
    samples = -logf - h_noise
    est = float(samples.mean())
    # delete-one-block jackknife over the outer draws
    blocks = np.array_split(samples, n_blocks)
    total = samples.sum()
    loo = np.array([(total - b.sum()) / (samples.size - b.size) for b in blocks])
    se = math.sqrt((n_blocks - 1) / n_blocks * np.sum((loo - loo.mean()) ** 2))
    return est, se
