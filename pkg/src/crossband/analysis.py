"""Closed-form MI and SEP expressions for the linear cross-band scheme."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .channel import LinkSnr
from .linopt import P1Solution


def q_function(x):
    """Gaussian tail probability Q(x) = P(N(0,1) > x)."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


@dataclass(frozen=True)
class LgcbParams:
    """Gaussian-input linear cross-band setup.

    ``c1``/``c2`` are the RF and optical channel amplitudes (h*p); ``i_d`` is
    a free bias since a Gaussian input has no finite minimum.
    """

    sigma_x_sq: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    sigma_n_sq: float = 1.0
    sigma_o_sq: float = 1.0
    i_d: float = 0.0
    theta: float = math.pi / 4

    def __post_init__(self):
        if min(self.sigma_x_sq, self.sigma_n_sq, self.sigma_o_sq) <= 0:
            raise ValueError("variances must be positive")
        if self.i_d < 0:
            raise ValueError("bias must be non-negative")

    @property
    def c_t(self) -> float:
        return self.c1 * self.c2 / math.sqrt(1.0 + self.i_d**2)

    @property
    def a1(self) -> float:
        return math.sqrt(2.0) * math.cos(self.theta)

    @property
    def a2(self) -> float:
        return math.sqrt(2.0) * math.sin(self.theta)

    @classmethod
    def from_snr(cls, snr: LinkSnr, sigma_x_sq: float = 1.0, i_d: float = 0.0,
                 theta: float = math.pi / 4) -> "LgcbParams":
        """Equalized parameterization: unit channel gains, noise 1/gamma^2."""
        return cls(sigma_x_sq, 1.0, 1.0, 1.0 / snr.gamma1_sq, 1.0 / snr.gamma2_sq, i_d, theta)

    def output_covariance(self) -> np.ndarray:
        sx = self.sigma_x_sq
        rf = self.c1**2 * sx + self.sigma_n_sq
        cross = self.c_t * sx
        opt = 2.0 * self.c2**2 * sx / (1.0 + self.i_d**2) + self.sigma_o_sq
        return np.array([
            [rf, 0.0, cross * self.a1],
            [0.0, rf, cross * self.a2],
            [cross * self.a1, cross * self.a2, opt],
        ])

    def noise_covariance(self) -> np.ndarray:
        return np.diag([self.sigma_n_sq, self.sigma_n_sq, self.sigma_o_sq])


def mi_lgcb(p: LgcbParams) -> float:
    """Mutual information (bits) of the Gaussian-input linear scheme.

    Log-ratio of output and noise covariance determinants. The optical output
    variance carries the 1/(1+I_D^2) normalization of the mapped signal.
    """
    sign, logdet = np.linalg.slogdet(p.output_covariance())
    if sign <= 0:
        raise FloatingPointError("output covariance is not positive definite")
    log_n = 2.0 * math.log(p.sigma_n_sq) + math.log(p.sigma_o_sq)
    return 0.5 * (logdet - log_n) / math.log(2.0)


def mi_lgcb_expanded(p: LgcbParams) -> float:
    """Same quantity from the expanded determinant; a1, a2 drop out."""
    sx = p.sigma_x_sq
    rf = p.c1**2 * sx + p.sigma_n_sq
    opt = 2.0 * p.c2**2 * sx / (1.0 + p.i_d**2) + p.sigma_o_sq
    det_k = rf * (rf * opt - 2.0 * p.c_t**2 * sx * sx)
    det_n = p.sigma_n_sq**2 * p.sigma_o_sq
    return 0.5 * math.log2(det_k / det_n)


def sep_coefficient(M: int) -> float:
    return 2.0 * (1.0 - 1.0 / math.sqrt(M))


def sep_approx_linear(sol: P1Solution, M: int) -> float:
    """QAM-style SEP from the two smallest lattice distances of the solution."""
    a1 = sep_coefficient(M)
    p1 = a1 * q_function(math.sqrt(sol.dmin) / 2.0)
    p2 = a1 * q_function(math.sqrt(sol.dsecond) / 2.0)
    return float(np.clip(1.0 - (1.0 - p1) * (1.0 - p2), 0.0, 1.0))


def sep_upper_bound(snr: LinkSnr, i_d: float, M: int) -> float:
    a1 = sep_coefficient(M)
    arg = math.sqrt((3.0 * snr.gamma1_sq + 6.0 * snr.gamma2_sq / (1.0 + i_d**2)) / (2.0 * (M - 1)))
    return float(1.0 - (1.0 - a1 * q_function(arg)) ** 2)


def qam_sep(es_n0: float, M: int) -> float:
    """Textbook square M-QAM symbol error probability at Es/N0 (linear)."""
    a1 = sep_coefficient(M)
    p = a1 * q_function(math.sqrt(3.0 * es_n0 / (M - 1)))
    return float(1.0 - (1.0 - p) ** 2)
