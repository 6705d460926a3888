"""Single-level orthonormal 2D Haar transform and wavelet-based importance weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sgflow.errors import InvalidArgumentError


@dataclass
class DwtSubbands:
    """Haar subbands of an ``n x n`` field, each ``n/2 x n/2``.

    HL is high-pass along x (columns), LH is high-pass along y (rows).
    """

    LL: np.ndarray
    LH: np.ndarray
    HL: np.ndarray
    HH: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"HH": self.HH, "HL": self.HL, "LL": self.LL, "LH": self.LH}


def dwt2_haar(f: np.ndarray) -> DwtSubbands:
    f = np.asarray(f, dtype=float)
    ny, nx = f.shape[-2:]
    if ny % 2 or nx % 2:
        raise InvalidArgumentError(f"Haar transform needs even dimensions, got {f.shape[-2:]}")
    a = f[..., 0::2, 0::2]
    b = f[..., 0::2, 1::2]
    c = f[..., 1::2, 0::2]
    d = f[..., 1::2, 1::2]
    return DwtSubbands(
        LL=(a + b + c + d) / 2,
        LH=(a + b - c - d) / 2,
        HL=(a - b + c - d) / 2,
        HH=(a - b - c + d) / 2,
    )


def idwt2_haar(s: DwtSubbands) -> np.ndarray:
    shapes = {s.LL.shape, s.LH.shape, s.HL.shape, s.HH.shape}
    if len(shapes) != 1:
        raise InvalidArgumentError(f"subband shapes disagree: {sorted(shapes)}")
    shape = s.LL.shape
    out = np.empty(shape[:-2] + (2 * shape[-2], 2 * shape[-1]))
    out[..., 0::2, 0::2] = (s.LL + s.LH + s.HL + s.HH) / 2
    out[..., 0::2, 1::2] = (s.LL + s.LH - s.HL - s.HH) / 2
    out[..., 1::2, 0::2] = (s.LL - s.LH + s.HL - s.HH) / 2
    out[..., 1::2, 1::2] = (s.LL - s.LH - s.HL + s.HH) / 2
    return out


def subband_energy(s: DwtSubbands) -> np.ndarray:
    """Pointwise high-frequency energy ``HL^2 + LH^2 + HH^2``."""
    return s.HL**2 + s.LH**2 + s.HH**2


@dataclass
class ImportanceMap:
    weights: np.ndarray
    alpha: float
    beta: float
    theta: float


def importance_map(F: np.ndarray, alpha: float = 1.25, beta: float = 6.0, theta: float = 0.8) -> ImportanceMap:
    """Per-pixel loss weights from subband energy ``F`` (half resolution).

    ``F`` is upsampled 2x by block copy. Pixels above the ``theta`` quantile
    are mapped linearly onto ``(alpha, beta]``; all others get weight 1.
    Leading batch axes are handled per field.
    """
    if not (1.0 <= alpha <= beta):
        raise InvalidArgumentError(f"need 1 <= alpha <= beta, got alpha={alpha}, beta={beta}")
    if not (0.0 < theta < 1.0):
        raise InvalidArgumentError(f"theta must lie in (0, 1), got {theta}")
    F = np.asarray(F, dtype=float)
    F_up = np.repeat(np.repeat(F, 2, axis=-2), 2, axis=-1)
    flat = F_up.reshape(F_up.shape[:-2] + (-1,))
    q = np.quantile(flat, theta, axis=-1)[..., None, None]
    top = F_up.max(axis=(-2, -1), keepdims=True)
    span = top - q
    safe = np.where(span > 0, span, 1.0)
    mapped = alpha + (beta - alpha) * (F_up - q) / safe
    weights = np.where((F_up > q) & (span > 0), mapped, 1.0)
    return ImportanceMap(weights=weights, alpha=alpha, beta=beta, theta=theta)


def importance_weights(field: np.ndarray, alpha: float = 1.25, beta: float = 6.0, theta: float = 0.8) -> np.ndarray:
    """Importance weights computed straight from a field."""
    return importance_map(subband_energy(dwt2_haar(field)), alpha, beta, theta).weights


def subband_l2(pred: np.ndarray, truth: np.ndarray) -> dict[str, float]:
    """Mean squared error per Haar subband."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise InvalidArgumentError(f"shape mismatch {pred.shape} vs {truth.shape}")
    diff = dwt2_haar(pred - truth)
    return {name: float(np.mean(band**2)) for name, band in diff.as_dict().items()}
