"""Fourier-space primitives on doubly periodic square grids.

Arrays are indexed ``[..., y, x]``: the last axis is x, the one before it is y,
and any leading axes are treated as a batch. Transforms are real-to-complex
(``rfft2``) with the unnormalized-forward / ``1/n**2``-inverse convention.
First-derivative symbols are zeroed at the Nyquist index so that every
operator built here maps real fields to real fields and has an exact
real adjoint (the conjugate symbol).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from sgflow.errors import InvalidArgumentError


def fft_workers() -> int:
    """Worker count for scipy.fft, capped by ``SGDIFF_THREADS`` when set."""
    cap = os.environ.get("SGDIFF_THREADS")
    ncpu = os.cpu_count() or 1
    if cap:
        try:
            return max(1, min(int(cap), ncpu))
        except ValueError:
            pass
    return ncpu


def rfft2(f: np.ndarray) -> np.ndarray:
    return scipy.fft.rfft2(f, axes=(-2, -1), workers=fft_workers())


def irfft2(fh: np.ndarray, n: int) -> np.ndarray:
    return scipy.fft.irfft2(fh, s=(n, n), axes=(-2, -1), workers=fft_workers())


def _mode_indices(n: int) -> np.ndarray:
    return np.fft.fftfreq(n, d=1.0 / n)


@dataclass(frozen=True, eq=False)
class FourierGrid:
    """Wavenumbers and masks for an ``n x n`` periodic grid of size ``Lx x Ly``.

    ``kx``, ``ky`` are full-length 1D arrays in FFT ordering; ``ksq`` and
    ``dealias_mask`` are full ``n x n`` arrays indexed ``[y, x]``. The
    half-spectrum arrays used by the rfft-based operators are derived.
    """

    n: int
    Lx: float
    Ly: float
    kx: np.ndarray
    ky: np.ndarray
    ksq: np.ndarray
    dealias_mask: np.ndarray
    _half: dict = field(default_factory=dict, repr=False)

    @property
    def dx(self) -> float:
        return self.Lx / self.n

    @property
    def dy(self) -> float:
        return self.Ly / self.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def _cached(self, key, build):
        if key not in self._half:
            self._half[key] = build()
        return self._half[key]

    @property
    def nh(self) -> int:
        return self.n // 2 + 1

    @property
    def ksq_h(self) -> np.ndarray:
        return self._cached("ksq", lambda: np.ascontiguousarray(self.ksq[:, : self.nh]))

    @property
    def mask_h(self) -> np.ndarray:
        return self._cached("mask", lambda: np.ascontiguousarray(self.dealias_mask[:, : self.nh]))

    @property
    def ikx_h(self) -> np.ndarray:
        """``i*kx`` on the half spectrum, zero on the Nyquist column."""

        def build():
            kx = np.abs(self.kx[: self.nh]).copy()
            kx[-1] = 0.0
            return np.broadcast_to(1j * kx[None, :], (self.n, self.nh)).copy()

        return self._cached("ikx", build)

    @property
    def iky_h(self) -> np.ndarray:
        """``i*ky`` on the half spectrum, zero on the Nyquist row."""

        def build():
            ky = self.ky.copy()
            ky[self.n // 2] = 0.0
            return np.broadcast_to(1j * ky[:, None], (self.n, self.nh)).copy()

        return self._cached("iky", build)

    @property
    def inv_ksq_h(self) -> np.ndarray:
        """``1/|k|^2`` with the mean mode set to zero (zero-mean gauge)."""

        def build():
            out = np.zeros_like(self.ksq_h)
            nz = self.ksq_h > 0
            out[nz] = 1.0 / self.ksq_h[nz]
            return out

        return self._cached("inv_ksq", build)

    @property
    def kmag_h(self) -> np.ndarray:
        return self._cached("kmag", lambda: np.sqrt(self.ksq_h))

    @property
    def rfft_weights(self) -> np.ndarray:
        """Multiplicity of each half-spectrum column in the full spectrum."""

        def build():
            w = np.full(self.nh, 2.0)
            w[0] = 1.0
            w[-1] = 1.0
            return np.broadcast_to(w[None, :], (self.n, self.nh)).copy()

        return self._cached("weights", build)

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid ``(X, Y)`` of gridpoint coordinates, each ``[y, x]``-indexed."""
        x = np.arange(self.n) * self.dx
        y = np.arange(self.n) * self.dy
        return np.meshgrid(x, y, indexing="xy")


def wavenumber_grid(n: int, Lx: float = 2 * np.pi, Ly: float | None = None) -> FourierGrid:
    if Ly is None:
        Ly = Lx
    if int(n) != n or n < 4 or n % 2:
        raise InvalidArgumentError(f"grid size must be an even integer >= 4, got {n}")
    if not (Lx > 0 and Ly > 0):
        raise InvalidArgumentError(f"domain lengths must be positive, got Lx={Lx}, Ly={Ly}")
    n = int(n)
    j = _mode_indices(n)
    kx = (2 * np.pi / Lx) * j
    ky = (2 * np.pi / Ly) * j
    KX, KY = np.meshgrid(kx, ky, indexing="xy")
    ksq = KX**2 + KY**2
    keep = np.abs(j) <= n // 3
    mask = keep[None, :] & keep[:, None]
    return FourierGrid(n=n, Lx=float(Lx), Ly=float(Ly), kx=kx, ky=ky, ksq=ksq, dealias_mask=mask)


def check_shape(f: np.ndarray, grid: FourierGrid) -> None:
    if f.shape[-2:] != grid.shape:
        raise InvalidArgumentError(f"field shape {f.shape[-2:]} does not match grid {grid.shape}")


def apply_symbol(f: np.ndarray, symbol: np.ndarray, grid: FourierGrid) -> np.ndarray:
    """Apply a half-spectrum Fourier multiplier to a real field."""
    check_shape(f, grid)
    return irfft2(symbol * rfft2(f), grid.n)


def spectral_derivative(f: np.ndarray, grid: FourierGrid, axis: str = "x") -> np.ndarray:
    if axis == "x":
        return apply_symbol(f, grid.ikx_h, grid)
    if axis == "y":
        return apply_symbol(f, grid.iky_h, grid)
    raise InvalidArgumentError(f"axis must be 'x' or 'y', got {axis!r}")


def laplacian(f: np.ndarray, grid: FourierGrid) -> np.ndarray:
    return apply_symbol(f, -grid.ksq_h, grid)


def dealias(f: np.ndarray, grid: FourierGrid) -> np.ndarray:
    return apply_symbol(f, grid.mask_h, grid)


def streamfunction(omega: np.ndarray, grid: FourierGrid) -> np.ndarray:
    """Solve ``omega = -lap(psi)`` with zero-mean ``psi``."""
    return apply_symbol(omega, grid.inv_ksq_h, grid)


def velocity_from_vorticity(omega: np.ndarray, grid: FourierGrid) -> tuple[np.ndarray, np.ndarray]:
    """Velocity ``(u, v) = (dpsi/dy, -dpsi/dx)`` for ``omega = -lap(psi)``."""
    check_shape(omega, grid)
    psi_h = rfft2(omega) * grid.inv_ksq_h
    u = irfft2(grid.iky_h * psi_h, grid.n)
    v = irfft2(-grid.ikx_h * psi_h, grid.n)
    return u, v


def kinetic_energy(omega: np.ndarray, grid: FourierGrid) -> np.ndarray:
    """Mean kinetic energy ``0.5 * mean(u^2 + v^2)`` over the grid."""
    u, v = velocity_from_vorticity(omega, grid)
    return 0.5 * np.mean(u**2 + v**2, axis=(-2, -1))


def gaussian_random_field(
    grid: FourierGrid,
    amplitude: float = 1.0,
    power: float = 2.5,
    cutoff: float = 7.0,
    seed: int | np.random.Generator | None = 0,
) -> np.ndarray:
    """Zero-mean Gaussian field with spectral density ``(|k|^2 + cutoff^2)**(-power)``.

    The field is scaled so that its *expected* variance is ``amplitude**2``;
    the normalization does not depend on the draw.
    """
    if power <= 1:
        raise InvalidArgumentError(f"spectral power must exceed 1, got {power}")
    if amplitude < 0:
        raise InvalidArgumentError(f"amplitude must be non-negative, got {amplitude}")
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(grid.shape)
    if amplitude == 0:
        return np.zeros(grid.shape)
    spec = (grid.ksq + cutoff**2) ** (-power)
    spec[0, 0] = 0.0
    expected_var = spec.sum() / grid.n**2
    gain = np.sqrt(spec[:, : grid.nh] / expected_var)
    return amplitude * irfft2(gain * rfft2(white), grid.n)


@dataclass
class VorticityField:
    """A single vorticity snapshot on a periodic ``n x n`` grid."""

    data: np.ndarray
    Lx: float
    Ly: float
    time: float = 0.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] != self.data.shape[1]:
            raise InvalidArgumentError(f"vorticity must be a square 2D array, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise InvalidArgumentError("vorticity contains non-finite entries")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def grid(self) -> FourierGrid:
        return wavenumber_grid(self.n, self.Lx, self.Ly)
