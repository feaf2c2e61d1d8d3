"""Command-line experiment runner.

Every subcommand writes CSV. Configuration comes from built-in defaults, then
an optional ``--config`` JSON file, then individual command-line flags, in
that order of precedence.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analysis import LgcbParams, mi_lgcb, sep_approx_linear, sep_upper_bound
from .channel import CHUNK_SIZE, LinkSnr, RngStream, transmit, weights_for
from .constellation import (
    build_cbpam_constellation,
    build_linear_constellation,
    build_mcbm_constellation,
    export_constellation,
    make_linear_map,
    make_qam,
)
from .detection import detect_fast, detect_ml
from .estimate import (
    ConfigurationError,
    ContinuousInputSpec,
    mi_continuous_nested,
    mi_discrete,
    run_confusion,
    sep_from_confusion,
    sep_stderr,
)
from .linopt import solve_p1
from .shaping import ShapingConfig, auto_kappa, train_shaper

SCHEMES = ("linear", "dnn-gen", "mcbm", "cbpam", "lgcb", "lxcb")
SIM_HEADER = ["scheme", "gamma1_db", "gamma2_db", "metric", "value", "stderr", "n", "seed",
              "chunk_size", "version"]
DISCRETE_METRICS = ("sep-mc", "sep-approx", "sep-bound", "mi-discrete")
CONTINUOUS_METRICS = ("mi-closed-form", "mi-continuous")


class SchemaError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    scheme: str = "linear"
    M: int = 16
    gamma1_db: list = field(default_factory=lambda: [float(x) for x in range(0, 26)])
    gamma2_db: float = 10.0
    n: int = 10_000_000
    seed: int = 0
    detector: str = "ml"
    metrics: list = field(default_factory=lambda: ["sep-mc"])
    workers: int = 1
    chunk_size: int = CHUNK_SIZE
    n_theta: int = 16384
    output: Optional[str] = None
    # shaping (dnn-gen)
    kappa: object = "auto"
    lam: float = 100.0
    lr: float = 1e-3
    steps: int = 20000
    restarts: int = 4
    shaping_mode: str = "mlp"
    layout: str = "batched"
    train_gamma1_db: Optional[float] = None
    # continuous inputs (lgcb / lxcb)
    sigma_x_sq: float = 1.0
    i_d: float = 0.0
    n_outer: int = 20000
    n_inner: int = 20000

    def validate(self) -> "ExperimentConfig":
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.gamma1_db:
            raise ConfigurationError("gamma1_db sweep is empty")
        known = DISCRETE_METRICS + CONTINUOUS_METRICS
        for m in self.metrics:
            if m not in known:
                raise ConfigurationError(f"unknown metric {m!r}")
        continuous = self.scheme in ("lgcb", "lxcb")
        for m in self.metrics:
            if continuous and m not in CONTINUOUS_METRICS:
                raise ConfigurationError(f"metric {m!r} needs a discrete scheme")
            if not continuous and m in CONTINUOUS_METRICS:
                raise ConfigurationError(f"metric {m!r} needs scheme lgcb or lxcb")
            if m in ("sep-approx", "sep-bound") and self.scheme != "linear":
                raise ConfigurationError(f"metric {m!r} is defined for the linear scheme only")
            if m == "mi-closed-form" and self.scheme != "lgcb":
                raise ConfigurationError("mi-closed-form exists for lgcb only")
        if any(m in ("sep-mc", "mi-discrete") for m in self.metrics) and self.n < 10_000:
            raise ConfigurationError(f"n must be at least 1e4 for Monte Carlo runs, got {self.n}")
        if self.detector not in ("ml", "fast"):
            raise ConfigurationError(f"detector must be ml or fast, got {self.detector!r}")
        if self.detector == "fast" and self.scheme != "linear":
            raise ConfigurationError("the fast detector needs the linear scheme")
        if self.workers < 1 or self.chunk_size < 1:
            raise ConfigurationError("workers and chunk_size must be positive")
        return self


def parse_sweep(text) -> list[float]:
    """``"0:25:1"`` (inclusive range), ``"0,5,10"`` or a single value."""
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    text = str(text).strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ConfigurationError(f"range must be start:stop:step, got {text!r}")
        start, stop, step = parts
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + k * step, 10) for k in range(max(count, 0))]
    return [float(v) for v in text.split(",") if v.strip()]


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return f"{float(x):.10g}"


def _write_csv(rows, header, path=None, timestamp: bool = True) -> str:
    buf = io.StringIO()
    if timestamp:
        buf.write(f"# generated {datetime.now(timezone.utc).isoformat(timespec='seconds')}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])
    text = buf.getvalue()
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)
    return text


def read_csv(path) -> list[dict]:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _shaping_config(cfg: ExperimentConfig, grid, snr: LinkSnr) -> ShapingConfig:
    kappa = cfg.kappa
    if isinstance(kappa, str):
        if kappa != "auto":
            kappa = float(kappa)
        else:
            kappa = auto_kappa(grid, snr)
    return ShapingConfig(snr=snr, kappa=float(kappa), lam=cfg.lam, lr=cfg.lr, steps=cfg.steps,
                         seed=cfg.seed, restarts=cfg.restarts, mode=cfg.shaping_mode,
                         layout=cfg.layout)


def build_scheme(cfg: ExperimentConfig, snr: LinkSnr):
    """Constellation (and P1 solution for the linear scheme) at one operating point."""
    if cfg.scheme == "cbpam":
        return build_cbpam_constellation(cfg.M), None
    grid = make_qam(cfg.M)
    if cfg.scheme == "linear":
        sol = solve_p1(grid, snr, cfg.n_theta)
        return build_linear_constellation(grid, make_linear_map(grid, sol.theta_star)), sol
    if cfg.scheme == "mcbm":
        return build_mcbm_constellation(grid), None
    train_snr = snr if cfg.train_gamma1_db is None else LinkSnr.from_db(cfg.train_gamma1_db,
                                                                         snr.gamma2_db)
    learned = train_shaper(grid, _shaping_config(cfg, grid, train_snr))
    return learned.constellation(), learned


def sweep_rows(cfg: ExperimentConfig) -> list[list]:
    """All CSV rows of one sweep, in sweep order."""
    cfg.validate()
    rows = []
    trained = {}
    for g1 in cfg.gamma1_db:
        snr = LinkSnr.from_db(g1, cfg.gamma2_db)
        base = [cfg.scheme, g1, cfg.gamma2_db]
        tail = [cfg.seed, cfg.chunk_size, __version__]
        if cfg.scheme in ("lgcb", "lxcb"):
            for m in cfg.metrics:
                if m == "mi-closed-form":
                    val = mi_lgcb(LgcbParams.from_snr(snr, cfg.sigma_x_sq, cfg.i_d))
                    rows.append(base + [m, val, 0.0, 0] + tail)
                else:
                    family = "gaussian" if cfg.scheme == "lgcb" else "scaled-chi-square-1"
                    spec = ContinuousInputSpec(family, cfg.sigma_x_sq, i_d=cfg.i_d)
                    val, se = mi_continuous_nested(spec, snr, cfg.n_outer, cfg.n_inner, cfg.seed)
                    rows.append(base + [m, val, se, cfg.n_outer] + tail)
            continue
        key = None if cfg.train_gamma1_db is None or cfg.scheme != "dnn-gen" else "fixed"
        if key and key in trained:
            c = trained[key]
            extra = None
        else:
            c, extra = build_scheme(cfg, snr)
            if key:
                trained[key] = c
        cm = None
        for m in cfg.metrics:
            if m in ("sep-mc", "mi-discrete"):
                if cm is None:
                    cm = run_confusion(c, snr, cfg.n, cfg.seed, cfg.detector, cfg.workers,
                                       cfg.chunk_size)
                if m == "sep-mc":
                    sep = sep_from_confusion(cm)
                    rows.append(base + [m, sep, sep_stderr(sep, cm.n_total), cm.n_total] + tail)
                else:
                    rows.append(base + [m, mi_discrete(cm), float("nan"), cm.n_total] + tail)
            elif m == "sep-approx":
                rows.append(base + [m, sep_approx_linear(extra, c.order), 0.0, 0] + tail)
            elif m == "sep-bound":
                rows.append(base + [m, sep_upper_bound(snr, c.i_d, c.order), 0.0, 0] + tail)
    return rows


def crossing_db(snr_db, sep, target: float) -> float:
    """First SNR at which the SEP curve drops to ``target``, by log-linear
    interpolation between the bracketing grid points; NaN if never reached."""
    x = np.asarray(snr_db, dtype=float)
    y = np.asarray(sep, dtype=float)
    order = np.argsort(x)
    x, y = x[order], y[order]
    if y.size and y[0] <= target:
        return float(x[0]) if y[0] == target else float("nan")
    for k in range(1, y.size):
        if y[k] <= target:
            if y[k] <= 0:
                return float(x[k])
            l0, l1 = math.log10(y[k - 1]), math.log10(y[k])
            return float(x[k - 1] + (math.log10(target) - l0) * (x[k] - x[k - 1]) / (l1 - l0))
    return float("nan")


def compare_report(paths, targets=(1e-2, 1e-3), metric: str = "sep-mc") -> list[list]:
    """Horizontal gaps (reference minus other, in dB) between the SEP curve of
    the first file and each other file, per optical SNR. Positive means the
    other curve reaches the target at a lower RF SNR."""
    curves = []
    for p in paths:
        rows = [r for r in read_csv(p) if r.get("metric") == metric]
        if not rows:
            raise SchemaError(f"{p}: no rows with metric {metric!r}")
        missing = {"scheme", "gamma1_db", "gamma2_db", "value"} - set(rows[0])
        if missing:
            raise SchemaError(f"{p}: missing columns {sorted(missing)}")
        by_g2 = {}
        for r in rows:
            by_g2.setdefault(float(r["gamma2_db"]), []).append(
                (float(r["gamma1_db"]), float(r["value"]), r["scheme"]))
        curves.append((p, by_g2))
    ref_path, ref = curves[0]
    out = []
    for path, other in curves:
        if set(other) != set(ref):
            raise SchemaError(f"{path}: optical SNR set differs from {ref_path}")
        for g2 in sorted(ref):
            a, b = sorted(ref[g2]), sorted(other[g2])
            if [p[0] for p in a] != [p[0] for p in b]:
                raise SchemaError(f"{path}: RF SNR grid differs from {ref_path} at {g2} dB")
            for t in targets:
                xa = crossing_db([p[0] for p in a], [p[1] for p in a], t)
                xb = crossing_db([p[0] for p in b], [p[1] for p in b], t)
                out.append([a[0][2], b[0][2], g2, t, xa, xb, xa - xb])
    return out


COMPARE_HEADER = ["scheme_ref", "scheme", "gamma2_db", "target_sep", "gamma1_ref_db",
                  "gamma1_db", "gap_db"]


def bench_detectors(orders=(16, 64, 256, 1024), n: int = 1 << 16, gamma_db: float = 15.0,
                    repeats: int = 3, seed: int = 0) -> list[list]:
    """Symbols per second of exhaustive versus lattice detection."""
    rows = []
    snr = LinkSnr.from_db(gamma_db, gamma_db)
    for M in orders:
        grid = make_qam(M)
        lmap = make_linear_map(grid, math.pi / 4)
        c = build_linear_constellation(grid, lmap)
        gen = RngStream(seed).generator(0)
        r = transmit(c, gen.integers(0, M, n), snr, gen).to_plane(lmap)
        w = weights_for(c, snr, "plane")
        for name, fn in (("ml", lambda: detect_ml(c, r, w)),
                         ("fast", lambda: detect_fast(r, grid, lmap, w))):
            best = math.inf
            for _ in range(repeats):
                t0 = time.perf_counter()
                fn()
                best = min(best, time.perf_counter() - t0)
            rows.append([name, M, n, n / best])
    return rows


# ---------------------------------------------------------------- argparse

def _coerce(name: str, value):
    """Turn a flag or JSON value into the ExperimentConfig field type."""
    if value is None:
        return None
    if name == "gamma1_db":
        return parse_sweep(value)
    if name == "metrics":
        return value if isinstance(value, list) else [m for m in str(value).split(",") if m]
    if name in ("M", "n", "seed", "workers", "chunk_size", "n_theta", "steps", "restarts",
                "n_outer", "n_inner"):
        v = float(value)
        if v != int(v):
            raise ConfigurationError(f"{name} must be an integer, got {value!r}")
        return int(v)
    if name in ("gamma2_db", "lam", "lr", "sigma_x_sq", "i_d", "train_gamma1_db"):
        return float(value)
    if name == "kappa":
        return value if value == "auto" else float(value)
    return value


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig()
    names = {f.name for f in fields(ExperimentConfig)}
    updates = {}
    if getattr(args, "config", None):
        doc = json.loads(Path(args.config).read_text())
        unknown = set(doc) - names
        if unknown:
            raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
        updates.update({k: _coerce(k, v) for k, v in doc.items()})
    for name in names:
        v = getattr(args, name, None)
        if v is not None:
            updates[name] = _coerce(name, v)
    cfg = replace(cfg, **updates)
    if getattr(args, "quick", False) and "n" not in updates:
        cfg.n = 1_000_000
    return cfg


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with ExperimentConfig keys")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--quick", action="store_true", help="1e6 symbols instead of 1e7")
    p.add_argument("--no-timestamp", action="store_true", help="omit the '# generated' line")
    p.add_argument("--output", "-o")
    for f in fields(ExperimentConfig):
        if f.name in ("seed", "workers", "output"):
            continue
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crossband", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("simulate", "Monte Carlo and closed-form metrics over an RF SNR sweep"),
        ("optimize-linear", "mapping angle search per sweep point"),
        ("shape-dnn", "train a learned-intensity constellation"),
        ("mi-closed-form", "Gaussian-input MI of the linear scheme"),
        ("mi-continuous", "nested Monte Carlo MI for continuous inputs"),
        ("sep-approx", "distance-form SEP approximation of the linear scheme"),
        ("export-constellation", "write a constellation CSV with JSON sidecar"),
    ):
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        if name == "shape-dnn":
            p.add_argument("--params-out", help="write network parameters as JSON")
    p = sub.add_parser("compare", help="horizontal SNR gaps between SEP curves")
    p.add_argument("paths", nargs="+")
    p.add_argument("--targets", default="1e-2,1e-3")
    p.add_argument("--metric", default="sep-mc")
    p.add_argument("--output", "-o")
    p.add_argument("--no-timestamp", action="store_true")
    p = sub.add_parser("bench", help="detector throughput, exhaustive vs lattice")
    p.add_argument("--orders", default="16,64,256,1024")
    p.add_argument("--n", type=int, default=1 << 16)
    p.add_argument("--output", "-o")
    p.add_argument("--no-timestamp", action="store_true")
    return ap


def _run(args) -> None:
    stamp = not args.no_timestamp
    cmd = args.command
    if cmd == "compare":
        targets = [float(t) for t in args.targets.split(",")]
        _write_csv(compare_report(args.paths, targets, args.metric), COMPARE_HEADER,
                   args.output, stamp)
        return
    if cmd == "bench":
        orders = [int(m) for m in args.orders.split(",")]
        _write_csv(bench_detectors(orders, args.n), ["detector", "m", "n", "symbols_per_s"],
                   args.output, stamp)
        return
    cfg = load_config(args)
    out = cfg.output
    if cmd == "simulate":
        _write_csv(sweep_rows(cfg), SIM_HEADER, out, stamp)
    elif cmd == "optimize-linear":
        grid = make_qam(cfg.M)
        rows = []
        for g1 in cfg.gamma1_db:
            s = solve_p1(grid, LinkSnr.from_db(g1, cfg.gamma2_db), cfg.n_theta)
            rows.append([g1, cfg.gamma2_db, s.theta_star, s.first.k1, s.first.k2,
                         s.second.k1, s.second.k2, s.dmin, s.dsecond])
        _write_csv(rows, ["gamma1_db", "gamma2_db", "theta_star", "k1", "k2", "k1p", "k2p",
                          "dmin", "dsecond"], out, stamp)
    elif cmd in ("mi-closed-form", "sep-approx", "mi-continuous"):
        metric = {"mi-closed-form": "mi-closed-form", "sep-approx": "sep-approx",
                  "mi-continuous": "mi-continuous"}[cmd]
        scheme = cfg.scheme
        if cmd == "mi-closed-form":
            scheme = "lgcb"
        elif cmd == "sep-approx":
            scheme = "linear"
        elif scheme not in ("lgcb", "lxcb"):
            scheme = "lgcb"
        cfg = replace(cfg, scheme=scheme, metrics=[metric])
        rows = sweep_rows(cfg)
        if cmd == "mi-continuous":
            _write_csv([[r[1], r[2], r[4], r[5]] for r in rows],
                       ["gamma1_db", "gamma2_db", "value", "stderr"], out, stamp)
        else:
            _write_csv([[r[1], r[2], r[4]] for r in rows], ["gamma1_db", "gamma2_db", "value"],
                       out, stamp)
    elif cmd == "shape-dnn":
        grid = make_qam(cfg.M)
        g1 = cfg.train_gamma1_db if cfg.train_gamma1_db is not None else cfg.gamma1_db[0]
        snr = LinkSnr.from_db(g1, cfg.gamma2_db)
        learned = train_shaper(grid, _shaping_config(cfg, grid, snr))
        if out:
            export_constellation(learned.constellation(), out)
        if args.params_out:
            learned.save_params(args.params_out)
        rows = [[k, float(z)] for k, z in enumerate(learned.intensities)]
        if not out:
            _write_csv(rows, ["index", "x_o"], None, stamp)
    elif cmd == "export-constellation":
        if not out:
            raise ConfigurationError("export-constellation needs --output")
        snr = LinkSnr.from_db(cfg.gamma1_db[0], cfg.gamma2_db)
        c, _ = build_scheme(cfg, snr)
        export_constellation(c, out)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _run(args)
    except (ConfigurationError, SchemaError, ValueError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error,{type(exc).__name__},{json.dumps(str(exc))}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
