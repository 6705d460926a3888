"""Reconstruction metrics: RMSE, PSNR, SSIM and per-sample reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from sgflow.errors import InvalidArgumentError

SSIM_SIGMA = 1.5
SSIM_RADIUS = 5  # 11x11 window
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise InvalidArgumentError(f"shape mismatch {pred.shape} vs {truth.shape}")
    return pred, truth


def l2_error(pred, truth) -> float:
    """Root-mean-square pointwise error."""
    pred, truth = _pair(pred, truth)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def data_range(truth) -> float:
    truth = np.asarray(truth, dtype=float)
    rng = float(truth.max() - truth.min())
    if not rng > 0:
        raise InvalidArgumentError("reference field is constant; its dynamic range is undefined")
    return rng


def psnr(pred, truth, data_range_: float | None = None) -> float:
    pred, truth = _pair(pred, truth)
    rng = data_range(truth) if data_range_ is None else data_range_
    rmse = l2_error(pred, truth)
    if rmse == 0:
        return math.inf
    return 20.0 * math.log10(rng / rmse)


def ssim(a, b, data_range_: float) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), periodic boundaries."""
    a, b = _pair(a, b)
    if a.ndim != 2:
        raise InvalidArgumentError(f"SSIM expects 2D fields, got shape {a.shape}")
    c1 = (SSIM_K1 * data_range_) ** 2
    c2 = (SSIM_K2 * data_range_) ** 2

    def blur(f):
        return gaussian_filter(f, SSIM_SIGMA, mode="wrap", truncate=SSIM_RADIUS / SSIM_SIGMA)

    mu_a, mu_b = blur(a), blur(b)
    saa = blur(a * a) - mu_a**2
    sbb = blur(b * b) - mu_b**2
    sab = blur(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (saa + sbb + c2)
    return float(np.mean(num / den))


def image_metrics(pred, truth) -> tuple[float, float]:
    """``(psnr_db, ssim)`` using the reference frame's min-max range."""
    pred, truth = _pair(pred, truth)
    rng = data_range(truth)
    return psnr(pred, truth, rng), ssim(pred, truth, rng)


REPORT_COLUMNS = ("sample_id", "l2", "residual_metric", "psnr", "ssim", "config_hash")
SUBBAND_COLUMNS = ("sample_id", "HH", "HL", "LL", "LH")


def format_float(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


@dataclass
class EvalReport:
    sample_id: str
    l2: float
    residual_metric: float
    psnr: float
    ssim: float
    subbands: dict[str, float] = field(default_factory=dict)
    config_hash: str = ""

    def row(self) -> list[str]:
        return [
            self.sample_id,
            format_float(self.l2),
            format_float(self.residual_metric),
            format_float(self.psnr),
            format_float(self.ssim),
            self.config_hash,
        ]

    def subband_row(self) -> list[str]:
        return [self.sample_id] + [format_float(self.subbands[k]) for k in SUBBAND_COLUMNS[1:]]
