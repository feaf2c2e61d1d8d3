"""Learned optical-intensity shaping for a fixed M-QAM RF alphabet.

A small ReLU network maps each QAM point (x_I, x_Q) to a positive intensity.
Training minimizes an exponential pair-repulsion loss in the weighted 3D
metric plus a quadratic penalty on the mean intensity. Gradients are exact
hand-written backprop; there is no autodiff dependency.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from scipy.special import expit

from .channel import LinkSnr, MetricWeights, RngStream, metric_weights
from .constellation import Constellation3D, QamGrid, build_learned_constellation


class TrainingError(RuntimeError):
    def __init__(self, step: int, message: str = "loss became non-finite"):
        super().__init__(f"{message} at step {step}")
        self.step = step


def softplus(a):
    return np.logaddexp(0.0, a)


def softplus_inv(z):
    z = np.asarray(z, dtype=float)
    return z + np.log(-np.expm1(-z))


@dataclass
class MlpParams:
    """Dense layers stored as ``x @ W + b``; ReLU hidden, softplus output."""

    weights: list
    biases: list

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    @classmethod
    def init(cls, sizes, rng: np.random.Generator) -> "MlpParams":
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            lim = math.sqrt(6.0 / fan_in)  # He-uniform
            weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    def with_flat(self, vec: np.ndarray) -> "MlpParams":
        out_w, out_b, k = [], [], 0
        for W, b in zip(self.weights, self.biases):
            out_w.append(vec[k:k + W.size].reshape(W.shape))
            k += W.size
            out_b.append(vec[k:k + b.size].copy())
            k += b.size
        return MlpParams(out_w, out_b)

    def forward(self, x: np.ndarray):
        """Return (out, cache) with ``out`` of shape (batch, sizes[-1])."""
        acts = [x]
        pre = []
        h = x
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            a = h @ W + b
            pre.append(a)
            h = softplus(a) if k == last else np.maximum(a, 0.0)
            acts.append(h)
        return h, (acts, pre)

    def backward(self, dout: np.ndarray, cache) -> np.ndarray:
        """Flat parameter gradient given dL/d(out), same shape as ``out``."""
        acts, pre = cache
        last = len(self.weights) - 1
        delta = dout * expit(pre[last])
        grads = []
        for k in range(last, -1, -1):
            gW = acts[k].T @ delta
            gb = delta.sum(axis=0)
            grads.append((gW, gb))
            if k > 0:
                delta = (delta @ self.weights[k].T) * (pre[k - 1] > 0)
        grads.reverse()
        return np.concatenate([a.ravel() for pair in grads for a in pair])


def pair_dsq(grid: QamGrid, z, w: MetricWeights) -> np.ndarray:
    """(M, M) weighted squared distances of the 3D points (grid, z)."""
    p = grid.points
    z = np.asarray(z, dtype=float)
    dx = p[:, None, 0] - p[None, :, 0]
    dy = p[:, None, 1] - p[None, :, 1]
    dz = z[:, None] - z[None, :]
    return w.w_i * dx * dx + w.w_q * dy * dy + w.w_o * dz * dz


def loss_distance(grid: QamGrid, z, w: MetricWeights, kappa: float) -> float:
    """Sum over ordered pairs i != j of exp(-kappa * d_ij^2)."""
    e = np.exp(-kappa * pair_dsq(grid, z, w))
    np.fill_diagonal(e, 0.0)
    return float(e.sum())


def loss_energy(z) -> float:
    return float((np.mean(z) - 1.0) ** 2)


def _loss_and_dz(grid: QamGrid, z, w: MetricWeights, kappa: float, lam: float):
    e = np.exp(-kappa * pair_dsq(grid, z, w))
    np.fill_diagonal(e, 0.0)
    ld = float(e.sum())
    mean = float(np.mean(z))
    le = (mean - 1.0) ** 2
    diff = z[:, None] - z[None, :]
    dz = -4.0 * kappa * w.w_o * (e * diff).sum(axis=1)
    dz = dz + lam * 2.0 * (mean - 1.0) / z.size
    return ld + lam * le, ld, le, dz


@dataclass(frozen=True)
class ShapingConfig:
    snr: LinkSnr = field(default_factory=lambda: LinkSnr.from_db(12.0, 20.0))
    kappa: float = 1.0
    lam: float = 100.0
    lr: float = 1e-3
    steps: int = 20000
    seed: int = 0
    hidden: int = 128
    n_hidden: int = 3
    restarts: int = 4
    mode: Literal["mlp", "direct"] = "mlp"
    layout: Literal["batched", "pointwise"] = "batched"
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.kappa < 0 or self.lam <= 0 or self.lr <= 0:
            raise ValueError("kappa must be >= 0; lam and lr must be positive")
        if self.steps < 1 or self.restarts < 1 or self.hidden < 1:
            raise ValueError("steps, restarts and hidden must be positive")
        if self.mode not in ("mlp", "direct"):
            raise ValueError(f"unknown shaping mode {self.mode!r}")
        if self.layout not in ("batched", "pointwise"):
            raise ValueError(f"unknown network layout {self.layout!r}")

    def sizes(self, M: int) -> list[int]:
        """Layer widths: [2M, H, ..., M] batched, or [2, H, ..., 1] per symbol."""
        io = (2 * M, M) if self.layout == "batched" else (2, 1)
        return [io[0]] + [self.hidden] * self.n_hidden + [io[1]]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr"] = {"gamma1_db": self.snr.gamma1_db, "gamma2_db": self.snr.gamma2_db}
        d["distance"] = "squared weighted metric, no square root"
        return d


@dataclass
class LearnedConstellation:
    grid: QamGrid
    intensities: np.ndarray
    config: ShapingConfig
    loss_d: float
    loss_e: float
    params: Optional[MlpParams] = None
    history: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)

    @property
    def loss(self) -> float:
        return self.loss_d + self.config.lam * self.loss_e

    def constellation(self) -> Constellation3D:
        return build_learned_constellation(self.grid, self.intensities)

    def min_dsq(self, w: Optional[MetricWeights] = None) -> float:
        w = w or metric_weights(self.config.snr)
        d = pair_dsq(self.grid, self.intensities, w)
        return float(d[~np.eye(len(d), dtype=bool)].min())

    def save_params(self, path) -> None:
        """Network parameters as ``{"sizes", "weights", "biases", "config"}``."""
        if self.params is None:
            raise ValueError("direct-mode shaping has no network parameters")
        doc = {
            "sizes": self.params.sizes,
            "weights": [W.tolist() for W in self.params.weights],
            "biases": [b.tolist() for b in self.params.biases],
            "config": self.config.to_dict(),
            "loss_d": self.loss_d,
            "loss_e": self.loss_e,
        }
        Path(path).write_text(json.dumps(doc))


def load_params(path) -> MlpParams:
    doc = json.loads(Path(path).read_text())
    return MlpParams([np.array(W, dtype=float) for W in doc["weights"]],
                     [np.array(b, dtype=float) for b in doc["biases"]])


def _net_input(grid: QamGrid, layout: str) -> np.ndarray:
    # batched: one sample holding all M (x_I, x_Q) pairs; pointwise: M samples
    return grid.points.reshape(1, -1) if layout == "batched" else grid.points


def network_intensities(net: MlpParams, grid: QamGrid, layout: str = "batched") -> np.ndarray:
    return net.forward(_net_input(grid, layout))[0].reshape(-1)


class _Objective:
    """Loss and flat gradient as a function of the flat parameter vector."""

    def __init__(self, grid: QamGrid, cfg: ShapingConfig, template: Optional[MlpParams]):
        self.grid = grid
        self.cfg = cfg
        self.w = metric_weights(cfg.snr)
        self.template = template

    def intensities(self, theta: np.ndarray) -> np.ndarray:
        if self.template is None:
            return softplus(theta)
        return network_intensities(self.template.with_flat(theta), self.grid, self.cfg.layout)

    def __call__(self, theta: np.ndarray):
        cfg = self.cfg
        if self.template is None:
            z = softplus(theta)
            loss, ld, le, dz = _loss_and_dz(self.grid, z, self.w, cfg.kappa, cfg.lam)
            return loss, ld, le, dz * expit(theta)
        net = self.template.with_flat(theta)
        out, cache = net.forward(_net_input(self.grid, cfg.layout))
        z = out.reshape(-1)
        loss, ld, le, dz = _loss_and_dz(self.grid, z, self.w, cfg.kappa, cfg.lam)
        return loss, ld, le, net.backward(dz.reshape(out.shape), cache)


def _initial(grid: QamGrid, cfg: ShapingConfig, seed: int):
    gen = RngStream(seed, stream_id=7).generator(0)
    if cfg.mode == "direct":
        return None, softplus_inv(gen.uniform(0.5, 1.5, size=grid.order))
    net = MlpParams.init(cfg.sizes(grid.order), gen)
    return net, net.flat()


def _adam_monotone(f, theta: np.ndarray, cfg: ShapingConfig):
    """Adam with monotone acceptance: a step that raises the loss is undone,
    the rate halved and the step retried; the rate resets after a success.

    The moment estimates are also cleared on rejection. A stale momentum
    direction need not be a descent direction, and shrinking the step along
    it would never succeed; a fresh Adam step points along -sign(g).
    """
    b1, b2, eps = 0.9, 0.999, cfg.adam_eps
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    t = 0
    loss, ld, le, g = f(theta)
    if not math.isfinite(loss):
        raise TrainingError(0)
    lr = cfg.lr
    history = [loss]
    for step in range(1, cfg.steps + 1):
        m_new = b1 * m + (1 - b1) * g
        v_new = b2 * v + (1 - b2) * g * g
        mhat = m_new / (1 - b1 ** (t + 1))
        vhat = v_new / (1 - b2 ** (t + 1))
        cand = theta - lr * mhat / (np.sqrt(vhat) + eps)
        c_loss, c_ld, c_le, c_g = f(cand)
        if not math.isfinite(c_loss):
            raise TrainingError(step)
        if c_loss <= loss:
            theta, m, v, t = cand, m_new, v_new, t + 1
            loss, ld, le, g = c_loss, c_ld, c_le, c_g
            lr = cfg.lr
            history.append(loss)
        else:
            lr *= 0.5
            m = np.zeros_like(theta)
            v = np.zeros_like(theta)
            t = 0
            if lr < cfg.lr * 2.0 ** -40:
                break  # no descent left along the Adam direction
    return theta, loss, ld, le, np.asarray(history)


def train_shaper(grid: QamGrid, cfg: ShapingConfig) -> LearnedConstellation:
    """Train ``cfg.restarts`` independent runs and keep the lowest final loss."""
    best = None
    for r in range(cfg.restarts):
        template, theta0 = _initial(grid, cfg, cfg.seed + r)
        f = _Objective(grid, cfg, template)
        theta, loss, ld, le, hist = _adam_monotone(f, theta0, cfg)
        if best is None or loss < best[1]:
            best = (theta, loss, ld, le, hist, template, f)
    theta, loss, ld, le, hist, template, f = best
    params = template.with_flat(theta) if template is not None else None
    return LearnedConstellation(grid, f.intensities(theta), cfg, ld, le, params, hist)


def grad_check(grid: QamGrid, cfg: ShapingConfig, n_coords: int = 200, h: float = 1e-6,
               params: Optional[MlpParams] = None, seed: int = 0) -> float:
    """Max relative error of the analytic gradient against central differences.

    Coordinates whose +-h perturbation flips a ReLU on/off are skipped and
    resampled, since the loss has a kink there and the difference quotient
    is not a derivative estimate.
    """
    if cfg.mode == "direct":
        template, theta = _initial(grid, cfg, cfg.seed)
    else:
        template = params if params is not None else MlpParams.init(
            cfg.sizes(grid.order), RngStream(cfg.seed, stream_id=7).generator(0))
        theta = template.flat()
    f = _Objective(grid, cfg, template)
    _, _, _, g = f(theta)
    gen = np.random.default_rng(seed)
    order = gen.permutation(theta.size)

    def pattern(th):
        if template is None:
            return None
        _, (acts, pre) = template.with_flat(th).forward(_net_input(grid, cfg.layout))
        return [a > 0 for a in pre[:-1]]

    base = pattern(theta)
    worst = 0.0
    used = 0
    for k in order:
        if used >= n_coords:
            break
        tp = theta.copy()
        tm = theta.copy()
        tp[k] += h
        tm[k] -= h
        if base is not None:
            pp, pm = pattern(tp), pattern(tm)
            if any((a != b).any() for a, b in zip(pp, base)) or \
                    any((a != b).any() for a, b in zip(pm, base)):
                continue
        num = (f(tp)[0] - f(tm)[0]) / (2 * h)
        ana = g[k]
        scale = max(abs(num), abs(ana))
        err = 0.0 if scale == 0.0 else abs(num - ana) / scale
        worst = max(worst, err)
        used += 1
    return worst


def cluster_single_linkage(values, gap: float) -> np.ndarray:
    """1D single-linkage labels: a new cluster starts at every sorted gap > ``gap``."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="stable")
    breaks = np.concatenate([[0], (np.diff(v[order]) > gap).astype(int)])
    labels = np.empty(v.size, dtype=int)
    labels[order] = np.cumsum(breaks)
    return labels


def count_levels(values, sep: float) -> int:
    return int(cluster_single_linkage(values, sep).max() + 1)


def auto_kappa(grid: QamGrid, snr: LinkSnr, sharpness: float = 4.0) -> float:
    """Scale-aware loss sharpness: ``sharpness / dmin`` of the angle-optimized
    linear constellation at the same SNRs.

    With a fixed kappa the pair terms shrink like exp(-kappa * d^2) as the
    SNR grows, until the energy penalty alone decides every step; tying kappa
    to the operating point keeps exp(-kappa * dmin) near exp(-sharpness).
    """
    from .linopt import solve_p1

    return sharpness / solve_p1(grid, snr, n_theta=2048).dmin
