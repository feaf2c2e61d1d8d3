"""scikit-learn style wrappers around the constellation builders and detectors.

``CrossBandModulator`` is a transformer (symbol indices -> 3D points) and
``CrossBandDetector`` a classifier (received 3D samples -> symbol indices),
so both compose with the usual ``get_params``/``set_params``/``clone`` tools.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .channel import LinkSnr, Received, weights_for
from .constellation import (
    build_cbpam_constellation,
    build_linear_constellation,
    build_mcbm_constellation,
    make_linear_map,
    make_qam,
)
from .detection import detect_fast, detect_ml
from .linopt import solve_p1
from .shaping import ShapingConfig, auto_kappa, train_shaper

SCHEMES = ("linear", "dnn-gen", "mcbm", "cbpam")


class CrossBandModulator(TransformerMixin, BaseEstimator):
    """Build a 3D constellation for one operating point and map indices to points.

    ``fit`` ignores its data arguments: the design depends only on the scheme,
    the order and the two link SNRs. Fitted attributes end in ``_``.
    ``kappa="auto"`` scales the loss sharpness to the linear design's minimum
    distance at the operating point.
    """

    def __init__(self, scheme="linear", order=16, gamma1_db=10.0, gamma2_db=10.0,
                 n_theta=16384, kappa=1.0, lam=100.0, lr=1e-3, steps=20000, restarts=4,
                 shaping_mode="mlp", layout="batched", seed=0):
        self.scheme = scheme
        self.order = order
        self.gamma1_db = gamma1_db
        self.gamma2_db = gamma2_db
        self.n_theta = n_theta
        self.kappa = kappa
        self.lam = lam
        self.lr = lr
        self.steps = steps
        self.restarts = restarts
        self.shaping_mode = shaping_mode
        self.layout = layout
        self.seed = seed

    @property
    def snr(self) -> LinkSnr:
        return LinkSnr.from_db(self.gamma1_db, self.gamma2_db)

    def fit(self, X=None, y=None):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        snr = self.snr
        self.solution_ = None
        self.learned_ = None
        if self.scheme == "cbpam":
            self.constellation_ = build_cbpam_constellation(self.order)
        else:
            grid = make_qam(self.order)
            if self.scheme == "linear":
                self.solution_ = solve_p1(grid, snr, self.n_theta)
                lmap = make_linear_map(grid, self.solution_.theta_star)
                self.constellation_ = build_linear_constellation(grid, lmap)
            elif self.scheme == "mcbm":
                self.constellation_ = build_mcbm_constellation(grid)
            else:
                kappa = auto_kappa(grid, snr) if self.kappa == "auto" else float(self.kappa)
                cfg = ShapingConfig(snr=snr, kappa=kappa, lam=self.lam, lr=self.lr,
                                    steps=self.steps, seed=self.seed, restarts=self.restarts,
                                    mode=self.shaping_mode, layout=self.layout)
                self.learned_ = train_shaper(grid, cfg)
                self.constellation_ = self.learned_.constellation()
        self.n_symbols_ = self.constellation_.order
        return self

    def transform(self, X):
        """Map integer symbol indices (any shape) to their (x_I, x_Q, x_O) points."""
        check_is_fitted(self, "constellation_")
        idx = np.asarray(X)
        if idx.dtype.kind not in "iu":
            if not np.all(np.equal(np.mod(idx, 1), 0)):
                raise ValueError("symbol indices must be integers")
            idx = idx.astype(np.intp)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_symbols_):
            raise IndexError(f"symbol index out of range [0, {self.n_symbols_})")
        return self.constellation_.points[idx]

    @property
    def points_(self) -> np.ndarray:
        check_is_fitted(self, "constellation_")
        return self.constellation_.points


class CrossBandDetector(ClassifierMixin, BaseEstimator):
    """Minimum weighted-distance detector for a fitted :class:`CrossBandModulator`.

    ``predict`` takes intensity-frame samples of shape (n, 3). For linear
    constellations they are moved to the plane frame first, which is where
    ``detector="fast"`` operates.
    """

    def __init__(self, modulator=None, detector="ml"):
        self.modulator = modulator
        self.detector = detector

    def fit(self, X=None, y=None):
        if self.detector not in ("ml", "fast"):
            raise ValueError(f"detector must be 'ml' or 'fast', got {self.detector!r}")
        mod = self.modulator if self.modulator is not None else CrossBandModulator()
        try:
            check_is_fitted(mod, "constellation_")
        except Exception:
            mod = mod.fit()
        c = mod.constellation_
        if self.detector == "fast" and c.kind != "linear":
            raise ValueError("the fast detector needs a linear-map constellation")
        self.constellation_ = c
        self.snr_ = mod.snr
        self.classes_ = np.arange(c.order)
        return self

    def predict(self, X):
        check_is_fitted(self, "constellation_")
        X = check_array(X, dtype=float, ensure_min_features=3)
        if X.shape[1] != 3:
            raise ValueError(f"expected 3 features (I, Q, optical), got {X.shape[1]}")
        c = self.constellation_
        if c.kind == "linear":
            r = Received(X, "intensity").to_plane(c.map)
            w = weights_for(c, self.snr_, "plane")
            if self.detector == "fast":
                return detect_fast(r, c.grid, c.map, w).index
            return detect_ml(c, r, w).index
        return detect_ml(c, X, weights_for(c, self.snr_, "intensity")).index
