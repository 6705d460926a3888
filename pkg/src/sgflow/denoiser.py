"""Clean-sample predictors and the importance-weighted training objective.

The trainable model is a diagonal Fourier filter whose gain depends on the
diffusion time bin and the radial wavenumber bin. It predicts ``x0``
directly from ``x_t``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from sgflow.diffusion import VpSchedule, marginal
from sgflow.errors import InvalidArgumentError, NumericalError
from sgflow.spectral import FourierGrid, irfft2, rfft2, wavenumber_grid
from sgflow.wavelet import ImportanceMap, importance_weights

log = logging.getLogger(__name__)


class OracleDenoiser:
    """Test double that always returns the stored clean sample."""

    scale = 1.0

    def __init__(self, truth: np.ndarray):
        self.truth = np.array(truth, dtype=float)

    def predict_x0(self, x_t: np.ndarray, t: float) -> np.ndarray:
        return self.truth.copy()


def oracle_denoiser(truth: np.ndarray) -> OracleDenoiser:
    return OracleDenoiser(truth)


def iw_loss(x0: np.ndarray, x0_hat: np.ndarray, weights: ImportanceMap | np.ndarray | None = None) -> float:
    """Mean of ``weights * (x0 - x0_hat)**2`` over all pixels."""
    x0 = np.asarray(x0, dtype=float)
    x0_hat = np.asarray(x0_hat, dtype=float)
    if x0.shape != x0_hat.shape:
        raise InvalidArgumentError(f"shape mismatch {x0.shape} vs {x0_hat.shape}")
    if weights is None:
        return float(np.mean((x0 - x0_hat) ** 2))
    a = weights.weights if isinstance(weights, ImportanceMap) else np.asarray(weights, dtype=float)
    if np.broadcast_shapes(a.shape, x0.shape) != x0.shape:
        raise InvalidArgumentError(f"weights of shape {a.shape} do not fit data {x0.shape}")
    return float(np.mean(a * (x0 - x0_hat) ** 2))


@dataclass
class SpectralGainDenoiser:
    """Diagonal Fourier gain indexed by (time bin, radial wavenumber bin).

    ``scale`` is the data standard deviation used to normalize training
    fields; predictions are made in normalized units.
    """

    grid: FourierGrid
    gains: np.ndarray
    scale: float = 1.0
    T_diff: float = 1.0
    history: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=float)
        if self.gains.ndim != 2:
            raise InvalidArgumentError(f"gains must be 2D (time_bins, radial_bins), got {self.gains.shape}")
        if not np.all(np.isfinite(self.gains)):
            raise InvalidArgumentError("gains must be finite")
        kmax = float(np.sqrt(self.grid.ksq.max()))
        rb = np.floor(self.grid.kmag_h * self.radial_bins / kmax).astype(int)
        self.radial_index = np.clip(rb, 0, self.radial_bins - 1)

    @property
    def time_bins(self) -> int:
        return self.gains.shape[0]

    @property
    def radial_bins(self) -> int:
        return self.gains.shape[1]

    @classmethod
    def create(cls, grid: FourierGrid, schedule: VpSchedule | None = None, time_bins: int = 32, radial_bins: int = 16, scale: float = 1.0):
        """Gains initialised to the mean scale at each bin centre (white unit-variance prior)."""
        schedule = schedule or VpSchedule()
        centres = (np.arange(time_bins) + 0.5) / time_bins * schedule.T_diff
        m, _ = marginal(schedule, centres)
        gains = np.repeat(m[:, None], radial_bins, axis=1)
        return cls(grid=grid, gains=gains, scale=scale, T_diff=schedule.T_diff)

    def time_bin(self, t) -> np.ndarray:
        b = np.floor(np.asarray(t, dtype=float) / self.T_diff * self.time_bins).astype(int)
        return np.clip(b, 0, self.time_bins - 1)

    def gain_field(self, t) -> np.ndarray:
        """Half-spectrum gain for time ``t`` (scalar) or per-sample times."""
        return self.gains[self.time_bin(t)][..., self.radial_index]

    def predict_x0(self, x_t: np.ndarray, t: float) -> np.ndarray:
        x_t = np.asarray(x_t, dtype=float)
        if x_t.shape[-2:] != self.grid.shape:
            raise InvalidArgumentError(f"input shape {x_t.shape[-2:]} does not match grid {self.grid.shape}")
        return irfft2(self.gain_field(t) * rfft2(x_t), self.grid.n)

    def loss_and_grad(
        self, x0: np.ndarray, x_t: np.ndarray, t: np.ndarray, weights: np.ndarray, curvature: bool = False
    ):
        """Weighted loss over a batch ``(B, n, n)`` and its exact gradient w.r.t. ``gains``.

        ``t`` holds one diffusion time per sample. With ``curvature=True`` a
        third value is returned: the diagonal of the Hessian with the weights
        replaced by their per-sample mean.
        """
        g = self.grid
        B = x0.shape[0]
        N = g.n * g.n
        tb = self.time_bin(t)
        X = rfft2(x_t)
        pred = irfft2(self.gains[tb][:, self.radial_index] * X, g.n)
        err = x0 - pred
        loss = float(np.mean(weights * err**2))
        dpred = -2.0 * weights * err / (B * N)
        Y = rfft2(dpred)
        contrib = g.rfft_weights * np.real(np.conj(Y) * X) / N
        flat_idx = tb[:, None, None] * self.radial_bins + self.radial_index[None, :, :]
        flat_idx = np.broadcast_to(flat_idx, contrib.shape).ravel()
        grad = np.bincount(flat_idx, weights=contrib.ravel(), minlength=self.gains.size).reshape(self.gains.shape)
        if not curvature:
            return loss, grad
        a_mean = weights.mean(axis=(-2, -1))[:, None, None]
        power = 2.0 * a_mean * g.rfft_weights * np.abs(X) ** 2 / (B * N * N)
        hess = np.bincount(flat_idx, weights=power.ravel(), minlength=self.gains.size).reshape(self.gains.shape)
        return loss, grad, hess


def fit_spectral_gains(
    frames: np.ndarray,
    schedule: VpSchedule | None = None,
    alpha: float = 1.25,
    beta: float = 6.0,
    theta: float = 0.8,
    epochs: int = 200,
    lr: float = 0.05,
    seed: int = 0,
    use_importance_weights: bool = True,
    time_bins: int = 32,
    radial_bins: int = 16,
    batch_size: int = 8,
    Lx: float = 2 * np.pi,
    Ly: float | None = None,
    noise_scale: float = 1.0,
) -> SpectralGainDenoiser:
    """Fit gains by minibatch gradient descent on the importance-weighted loss.

    Each epoch visits every frame once in a seeded random order; every visit
    draws a fresh ``t ~ U(0, T_diff)`` and fresh Gaussian noise.
    ``noise_scale=0`` trains on noiseless pairs.

    Steps are scaled per gain by the batch's diagonal curvature, so ``lr`` is
    the fraction of a Newton step. Plain steps leave the rarely visited,
    low-energy bins essentially untrained.
    """
    frames = np.asarray(frames, dtype=float)
    if frames.ndim == 2:
        frames = frames[None]
    if frames.ndim != 3 or frames.shape[0] == 0:
        raise InvalidArgumentError(f"need a non-empty (S, n, n) stack of frames, got shape {frames.shape}")
    schedule = schedule or VpSchedule()
    n = frames.shape[-1]
    grid = wavenumber_grid(n, Lx, Ly)
    scale = float(frames.std()) or 1.0
    model = SpectralGainDenoiser.create(grid, schedule, time_bins, radial_bins, scale)
    x0_all = frames / scale
    if use_importance_weights:
        w_all = importance_weights(frames, alpha, beta, theta)
    else:
        w_all = np.ones_like(frames)
    rng = np.random.default_rng(seed)
    S = frames.shape[0]
    for epoch in range(epochs):
        order = rng.permutation(S)
        total = 0.0
        for start in range(0, S, batch_size):
            idx = order[start : start + batch_size]
            x0 = x0_all[idx]
            t = rng.uniform(0.0, schedule.T_diff, size=len(idx))
            noise = rng.standard_normal(x0.shape)
            m, sd = marginal(schedule, t)
            x_t = m[:, None, None] * x0 + noise_scale * sd[:, None, None] * noise
            loss, grad, hess = model.loss_and_grad(x0, x_t, t, w_all[idx], curvature=True)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise NumericalError(f"non-finite training loss at epoch {epoch}")
            visited = hess > 0
            model.gains[visited] -= lr * grad[visited] / hess[visited]
            total += loss * len(idx)
        model.history.append(total / S)
        if epoch % 50 == 0 or epoch == epochs - 1:
            log.debug("epoch %d loss %.6g", epoch, model.history[-1])
    return model
