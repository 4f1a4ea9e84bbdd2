"""Experiment drivers: error decay with growing ``m`` under noise, and
cartoon/texture image recovery from undersampled Fourier data."""
import math
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import stats

from ..engine import NumericalAbort, RecoverySettings, run_gcosamp
from ..io import write_pgm
from ..metrics import psnr
from ..models import AnalysisModel, KSparseModel
from ..operators import (SubsampledFourierOperator, build_finite_difference, build_local_dct, full_mask,
                         radial_mask, sample_laplace_noise, scale_noise_to_ratio, variable_density_mask)
from ..sacosamp import run_sacosamp
from .config import get_float, get_int, get_list, settings_from_section


@dataclass
class ExperimentResult:
    """Tabular experiment output; ``rows`` are dicts keyed by ``columns``."""

    columns: List[str]
    rows: List[dict]
    slope: float = math.nan
    slope_halfwidth: float = math.nan
    intercept: float = math.nan
    failures: int = 0
    meta: dict = field(default_factory=dict)

    def to_csv(self):
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_fmt(row[c]) for c in self.columns))
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


# -- error versus number of measurements ------------------------------------------


def default_m_grid(n=2000, low=50, points=20):
    """Log-spaced integers from ``low`` up to just below ``n``."""
    return sorted({int(round(v)) for v in np.geomspace(low, 0.975 * n, points)})


@dataclass
class VanishingNoiseConfig:
    n: int = 2000
    k: int = 5
    m_grid: Sequence[int] = field(default_factory=default_m_grid)
    trials: int = 30
    noise_ratio: float = 0.01
    noise: str = "laplace"
    seed: int = 0
    slope_fit_floor: Optional[float] = None
    settings: RecoverySettings = field(default_factory=RecoverySettings)

    def __post_init__(self):
        self.m_grid = [int(m) for m in self.m_grid]
        if not self.m_grid:
            raise ValueError("m_grid is empty")
        if any(m < 1 or m >= self.n for m in self.m_grid):
            raise ValueError(f"every m must satisfy 1 <= m < n={self.n}")
        if self.trials < 3:
            raise ValueError("need at least 3 trials per m")
        if not 1 <= self.k <= self.n:
            raise ValueError("need 1 <= k <= n")
        if self.noise_ratio < 0:
            raise ValueError("noise_ratio must be non-negative")
        if self.noise != "laplace":
            raise ValueError(f"unsupported noise family {self.noise!r}")

    @property
    def fit_floor(self):
        if self.slope_fit_floor is not None:
            return self.slope_fit_floor
        return 8.0 * self.k * math.log(self.n)


def vanishing_noise_trial(cfg, m, trial, index=0):
    """One recovery; returns ``(error_norm, iterations)``."""
    rng = np.random.default_rng([cfg.seed, index, trial])
    A = rng.standard_normal((m, cfg.n))
    x = np.zeros(cfg.n)
    support = rng.choice(cfg.n, cfg.k, replace=False)
    x[support] = rng.standard_normal(cfg.k)
    Ax = A @ x
    y = Ax
    if cfg.noise_ratio > 0:
        e = sample_laplace_noise(m, 1.0, int(rng.integers(2 ** 63)))
        y = Ax + scale_noise_to_ratio(e, Ax, cfg.noise_ratio)
    trace = run_gcosamp(A, y, KSparseModel(cfg.n, cfg.k), cfg.settings)
    return float(np.linalg.norm(trace.estimate - x)), trace.iterations


def fit_loglog(ms, errors):
    """Least-squares line through ``(log m, log error)``; returns slope, 95% half-width, intercept."""
    lx, ly = np.log(np.asarray(ms, float)), np.log(np.asarray(errors, float))
    if lx.size < 2:
        return math.nan, math.nan, math.nan
    fit = stats.linregress(lx, ly)
    half = math.nan
    if lx.size > 2:
        half = float(stats.t.ppf(0.975, lx.size - 2) * fit.stderr)
    return float(fit.slope), half, float(fit.intercept)


def run_vanishing_noise(cfg=None):
    """Median reconstruction error per ``m`` and the fitted log-log slope.

    Trials that abort numerically count as failures and are left out of
    the statistics. The slope is fitted over grid points with
    ``m >= cfg.fit_floor``.
    """
    cfg = cfg or VanishingNoiseConfig()
    columns = ["m", "median_error", "mean_error", "std_error", "median_iterations", "failures"]
    rows = []
    failures = 0
    for index, m in enumerate(cfg.m_grid):
        errors, iters = [], []
        for trial in range(cfg.trials):
            try:
                err, it = vanishing_noise_trial(cfg, m, trial, index)
            except (NumericalAbort, np.linalg.LinAlgError):
                err, it = math.nan, 0
            errors.append(err)
            iters.append(it)
        errors = np.array(errors)
        ok = np.isfinite(errors)
        bad = int((~ok).sum())
        failures += bad
        good = errors[ok]
        rows.append({
            "m": m,
            "median_error": float(np.median(good)) if good.size else math.nan,
            "mean_error": float(good.mean()) if good.size else math.nan,
            "std_error": float(good.std(ddof=1)) if good.size > 1 else math.nan,
            "median_iterations": float(np.median(np.array(iters)[ok])) if good.size else math.nan,
            "failures": bad,
        })
    fit_rows = [r for r in rows if r["m"] >= cfg.fit_floor and np.isfinite(r["median_error"])
                and r["median_error"] > 0]
    slope, half, intercept = fit_loglog([r["m"] for r in fit_rows], [r["median_error"] for r in fit_rows])
    return ExperimentResult(columns, rows, slope, half, intercept, failures,
                            meta={"fit_floor": cfg.fit_floor, "fit_points": len(fit_rows)})


# -- image recovery ------------------------------------------------------------------

IMAGE_MODES = ("unified", "split", "analysis-only", "naive")


@dataclass
class ImageExperimentConfig:
    """Desk-scale cartoon + texture recovery setup.

    ``ell`` defaults to ``p - ell_margin * nnz(Omega cartoon)``: the measured
    cosparsity of the cartoon with ``ell_margin`` times as many free rows as
    it actually needs.
    """

    height: int = 64
    width: int = 64
    rectangles: int = 5
    background: float = 60.0
    intensities: Sequence[float] = (100.0, 140.0, 180.0, 220.0)
    window: int = 16
    overlap: int = 8
    excluded: int = 8
    k: int = 20
    ell: Optional[int] = None
    ell_margin: float = 3.0
    texture_ratio: float = 0.1
    mask: str = "variable-density"
    fraction: float = 0.25
    decay: float = 2.0
    radial_lines: int = 20
    modes: Sequence[str] = IMAGE_MODES
    seed: int = 0
    settings: RecoverySettings = field(
        default_factory=lambda: RecoverySettings(max_iterations=40, ls_max_iterations=1000))

    def __post_init__(self):
        if self.height < 2 or self.width < 2:
            raise ValueError("image must be at least 2x2")
        if self.mask == "variable-density" and not 0.0 < self.fraction < 1.0:
            raise ValueError(f"sampling fraction must lie in (0, 1), got {self.fraction}")
        if self.mask not in ("variable-density", "radial", "full"):
            raise ValueError(f"unknown mask pattern {self.mask!r}")
        if self.texture_ratio < 0:
            raise ValueError("texture_ratio must be non-negative")
        if self.ell_margin < 1:
            raise ValueError("ell_margin must be >= 1")
        unknown = set(self.modes) - set(IMAGE_MODES)
        if unknown:
            raise ValueError(f"unknown modes {sorted(unknown)}")
        self.modes = tuple(self.modes)
        self.intensities = tuple(float(v) for v in self.intensities)

    @property
    def p(self):
        return self.height * (self.width - 1) + (self.height - 1) * self.width

    def build_mask(self):
        if self.mask == "full":
            return full_mask(self.height, self.width)
        if self.mask == "radial":
            return radial_mask(self.height, self.width, self.radial_lines)
        return variable_density_mask(self.height, self.width, self.fraction, seed=self.seed, decay=self.decay)


@dataclass
class CartoonTexture:
    cartoon: np.ndarray
    texture: np.ndarray
    noisy: np.ndarray
    alpha: np.ndarray


def synthesize_cartoon_texture(cfg, D=None):
    """Piecewise-constant rectangles plus ``k`` random dictionary atoms.

    The texture is rescaled so ``||texture||_F = texture_ratio * ||cartoon||_F``.
    Images are ``height x width`` arrays; ``noisy = cartoon + texture``.
    """
    if D is None:
        D = build_local_dct(cfg.height, cfg.width, cfg.window, cfg.overlap, cfg.excluded)
    rng = np.random.default_rng(cfg.seed)
    h, w = cfg.height, cfg.width
    cartoon = np.full((h, w), float(cfg.background))
    for _ in range(cfg.rectangles):
        rh = int(rng.integers(max(1, h // 6), max(2, h // 2)))
        rw = int(rng.integers(max(1, w // 6), max(2, w // 2)))
        r0 = int(rng.integers(0, h - rh + 1))
        c0 = int(rng.integers(0, w - rw + 1))
        cartoon[r0:r0 + rh, c0:c0 + rw] = cfg.intensities[int(rng.integers(len(cfg.intensities)))]
    alpha = np.zeros(D.atoms)
    support = rng.choice(D.atoms, min(cfg.k, D.atoms), replace=False)
    alpha[support] = rng.standard_normal(support.size)
    texture = np.zeros((h, w))
    if cfg.texture_ratio > 0:
        raw = D.apply(alpha)
        scale = cfg.texture_ratio * np.linalg.norm(cartoon) / np.linalg.norm(raw)
        alpha *= scale
        texture = D.apply(alpha).reshape(h, w)
    else:
        alpha[:] = 0.0
    return CartoonTexture(cartoon, texture, cartoon + texture, alpha)


def cartoon_cosparsity(Omega, cartoon, tol=1e-9):
    """Number of rows of ``Omega`` that vanish on ``cartoon``."""
    return int(np.sum(np.abs(Omega.apply(np.ravel(cartoon))) <= tol))


def _offset_image(img):
    return np.asarray(img) + 128.0


def run_image_experiment(cfg=None, out_dir=None):
    """Recover cartoon and texture from masked Fourier samples of their sum.

    Modes: joint least squares (``unified``), per-component least squares
    (``split``), the analysis model alone (``analysis-only``) and the
    zero-filled inverse DFT (``naive``). PSNR of ``x2`` is against the cartoon,
    PSNR of ``x`` against cartoon + texture. When ``out_dir`` is given, PGM
    images (texture shifted by +128), per-mode traces and ``psnr.csv`` are
    written there.
    """
    cfg = cfg or ImageExperimentConfig()
    h, w = cfg.height, cfg.width
    D = build_local_dct(h, w, cfg.window, cfg.overlap, cfg.excluded)
    Omega = build_finite_difference(h, w)
    p = Omega.rows
    data = synthesize_cartoon_texture(cfg, D)
    zeros = cartoon_cosparsity(Omega, data.cartoon)
    ell = cfg.ell if cfg.ell is not None else int(p - cfg.ell_margin * (p - zeros))
    if not 0 <= ell <= p:
        raise ValueError(f"cosparsity ell={ell} outside [0, p={p}]")
    if ell > zeros:
        raise ValueError(f"cosparsity ell={ell} exceeds the cartoon's {zeros} vanishing rows")
    if cfg.k > D.atoms:
        raise ValueError(f"k={cfg.k} exceeds the {D.atoms} dictionary atoms")

    mask = cfg.build_mask()
    A = SubsampledFourierOperator(mask)
    x1_true, x2_true = data.texture.ravel(), data.cartoon.ravel()
    x_true = x1_true + x2_true
    y = A.apply(x_true)

    columns = ["mode", "psnr_x2", "psnr_x", "iterations", "halt", "residual_norm"]
    rows, outputs, traces = [], {}, {}
    for mode in cfg.modes:
        if mode in ("unified", "split"):
            res = run_sacosamp(A, y, D, Omega, cfg.k, ell, mode, cfg.settings,
                               truth_x1=x1_true, truth_x2=x2_true)
            x1, x2, x = res.x1, res.x2, res.x
            iters, halt, resid = res.trace.iterations, res.trace.halt_reason, res.trace.records[-1].residual_norm
            traces[mode] = res.trace
        elif mode == "analysis-only":
            tr = run_gcosamp(A, y, AnalysisModel(Omega, ell), cfg.settings, truth=x_true)
            x1, x2 = np.zeros_like(x_true), tr.estimate
            x = x1 + x2
            iters, halt, resid = tr.iterations, tr.halt_reason, tr.records[-1].residual_norm
            traces[mode] = tr
        else:
            x = A.zero_filled(y)
            x1, x2 = np.zeros_like(x), x
            iters, halt, resid = 0, "none", float(np.linalg.norm(y - A.apply(x)))
        outputs[mode] = (x1, x2, x)
        rows.append({"mode": mode, "psnr_x2": psnr(x2_true, x2), "psnr_x": psnr(x_true, x),
                     "iterations": iters, "halt": halt, "residual_norm": float(resid)})

    result = ExperimentResult(columns, rows, meta={
        "ell": ell, "p": p, "cartoon_zeros": zeros, "measurements": A.rows,
        "sampling_fraction": mask.fraction, "seed": cfg.seed,
    })
    if out_dir is not None:
        _write_image_outputs(out_dir, cfg, data, mask, outputs, traces, result)
    result.meta["outputs"] = outputs
    return result


def _write_image_outputs(out_dir, cfg, data, mask, outputs, traces, result):
    os.makedirs(out_dir, exist_ok=True)
    shape = (cfg.height, cfg.width)
    write_pgm(os.path.join(out_dir, "cartoon.pgm"), data.cartoon)
    write_pgm(os.path.join(out_dir, "texture.pgm"), _offset_image(data.texture))
    write_pgm(os.path.join(out_dir, "noisy.pgm"), data.noisy)
    write_pgm(os.path.join(out_dir, "mask.pgm"), np.fft.fftshift(mask.selected) * 255.0)
    for mode, (x1, x2, x) in outputs.items():
        write_pgm(os.path.join(out_dir, f"{mode}_x.pgm"), x.reshape(shape))
        if mode != "naive":
            write_pgm(os.path.join(out_dir, f"{mode}_x2.pgm"), x2.reshape(shape))
            write_pgm(os.path.join(out_dir, f"{mode}_x1.pgm"), _offset_image(x1.reshape(shape)))
    for mode, trace in traces.items():
        trace.write_csv(os.path.join(out_dir, f"{mode}_trace.csv"))
    result.write_csv(os.path.join(out_dir, "psnr.csv"))


# -- config plumbing -------------------------------------------------------------------


def vanishing_config_from_sections(sections):
    exp = sections.get("experiment", {})
    n = get_int(exp, "n", 2000)
    return VanishingNoiseConfig(
        n=n,
        k=get_int(exp, "k", 5),
        m_grid=get_list(exp, "m_grid", int, default_m_grid(n)),
        trials=get_int(exp, "trials", 30),
        noise_ratio=get_float(exp, "noise_ratio", 0.01),
        noise=exp.get("noise", "laplace"),
        seed=get_int(exp, "seed", 0),
        slope_fit_floor=get_float(exp, "slope_fit_floor") if "slope_fit_floor" in exp else None,
        settings=settings_from_section(sections.get("settings", {})),
    )


def image_config_from_sections(sections):
    exp = sections.get("experiment", {})
    base = ImageExperimentConfig()
    return ImageExperimentConfig(
        height=get_int(exp, "height", base.height),
        width=get_int(exp, "width", base.width),
        rectangles=get_int(exp, "rectangles", base.rectangles),
        background=get_float(exp, "background", base.background),
        intensities=get_list(exp, "intensities", float, base.intensities),
        window=get_int(exp, "window", base.window),
        overlap=get_int(exp, "overlap", base.overlap),
        excluded=get_int(exp, "excluded", base.excluded),
        k=get_int(exp, "k", base.k),
        ell=get_int(exp, "ell") if "ell" in exp else None,
        ell_margin=get_float(exp, "ell_margin", base.ell_margin),
        texture_ratio=get_float(exp, "texture_ratio", base.texture_ratio),
        mask=exp.get("mask", base.mask),
        fraction=get_float(exp, "fraction", base.fraction),
        decay=get_float(exp, "decay", base.decay),
        radial_lines=get_int(exp, "radial_lines", base.radial_lines),
        modes=get_list(exp, "modes", str, base.modes),
        seed=get_int(exp, "seed", base.seed),
        settings=settings_from_section(sections.get("settings", {}), base.settings),
    )
