"""Vorticity-equation residual on three consecutive snapshots and its exact gradient.

A sample is a triplet ``(prev, mid, next)`` stacked on axis -3. The time
derivative is a central difference at ``mid``; every spatial term is
evaluated spectrally at ``mid``:

    r = (next - prev) / (2 dt) + u . grad(mid) - (1/Re) lap(mid) - f(mid)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sgflow.errors import InvalidArgumentError
from sgflow.solver import SolverConfig, forcing_field
from sgflow.spectral import FourierGrid, VorticityField, irfft2, rfft2


@dataclass
class SnapshotTriplet:
    prev: VorticityField
    mid: VorticityField
    next: VorticityField
    dt_record: float

    def __post_init__(self):
        shapes = {self.prev.data.shape, self.mid.data.shape, self.next.data.shape}
        if len(shapes) != 1:
            raise InvalidArgumentError(f"triplet frames differ in shape: {sorted(shapes)}")
        d1 = self.mid.time - self.prev.time
        d2 = self.next.time - self.mid.time
        if abs(d1 - self.dt_record) > 1e-9 or abs(d2 - self.dt_record) > 1e-9:
            raise InvalidArgumentError(
                f"triplet spacing ({d1:.12g}, {d2:.12g}) does not match dt_record={self.dt_record}"
            )

    def array(self) -> np.ndarray:
        return np.stack([self.prev.data, self.mid.data, self.next.data])


def triplets_from_frames(frames: np.ndarray) -> np.ndarray:
    """All consecutive triplets of a ``(F, n, n)`` frame stack as ``(F-2, 3, n, n)``."""
    frames = np.asarray(frames)
    if frames.shape[0] < 3:
        raise InvalidArgumentError(f"need at least 3 frames for a triplet, got {frames.shape[0]}")
    return np.stack([frames[:-2], frames[1:-1], frames[2:]], axis=1)


class VorticityResidual:
    """Residual operator bound to a grid, a solver configuration and a record interval."""

    def __init__(self, grid: FourierGrid, config: SolverConfig, dt_record: float | None = None):
        self.grid = grid
        self.config = config
        self.dt = config.dt_record if dt_record is None else dt_record
        self.nu = config.nu
        self.mu = config.forcing.mu if config.forcing is not None else 0.0
        self.f_static = forcing_field(grid, config.forcing)
        g = grid
        self._u_sym = g.iky_h * g.inv_ksq_h
        self._v_sym = -g.ikx_h * g.inv_ksq_h

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim < 3 or x.shape[-3] != 3 or x.shape[-2:] != self.grid.shape:
            raise InvalidArgumentError(
                f"expected triplets of shape (..., 3, {self.grid.n}, {self.grid.n}), got {x.shape}"
            )
        return x

    def _terms(self, mid: np.ndarray):
        g = self.grid
        w_hat = rfft2(mid)
        syms = np.stack([self._u_sym, self._v_sym, g.ikx_h, g.iky_h, -g.ksq_h])
        u, v, wx, wy, lap = np.moveaxis(irfft2(syms * w_hat[..., None, :, :], g.n), -3, 0)
        return u, v, wx, wy, lap

    def pointwise(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        prev, mid, nxt = x[..., 0, :, :], x[..., 1, :, :], x[..., 2, :, :]
        u, v, wx, wy, lap = self._terms(mid)
        r = (nxt - prev) / (2 * self.dt) + u * wx + v * wy - self.nu * lap - self.f_static
        if self.mu:
            r = r + self.mu * mid
        return r

    def value(self, x: np.ndarray) -> np.ndarray:
        """Mean squared residual per sample."""
        return np.mean(self.pointwise(x) ** 2, axis=(-2, -1))

    def value_and_gradient(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Scalar residual per sample and its gradient w.r.t. all three frames."""
        x = self._check(x)
        g = self.grid
        prev, mid, nxt = x[..., 0, :, :], x[..., 1, :, :], x[..., 2, :, :]
        u, v, wx, wy, lap = self._terms(mid)
        r = (nxt - prev) / (2 * self.dt) + u * wx + v * wy - self.nu * lap - self.f_static
        if self.mu:
            r = r + self.mu * mid
        value = np.mean(r**2, axis=(-2, -1))
        G = 2.0 * r / (g.n * g.n)
        # adjoints: D^T = -D for first derivatives and velocity maps, lap^T = lap
        prods = rfft2(np.stack([G * wx, G * wy, G * u, G * v, G], axis=-3))
        adj_hat = (
            -self._u_sym * prods[..., 0, :, :]
            - self._v_sym * prods[..., 1, :, :]
            - g.ikx_h * prods[..., 2, :, :]
            - g.iky_h * prods[..., 3, :, :]
            + self.nu * g.ksq_h * prods[..., 4, :, :]
        )
        grad_mid = irfft2(adj_hat, g.n)
        if self.mu:
            grad_mid = grad_mid + self.mu * G
        grad = np.empty_like(x)
        grad[..., 0, :, :] = -G / (2 * self.dt)
        grad[..., 1, :, :] = grad_mid
        grad[..., 2, :, :] = G / (2 * self.dt)
        return value, grad

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.value_and_gradient(x)[1]


def _as_array(trip) -> np.ndarray:
    return trip.array() if isinstance(trip, SnapshotTriplet) else np.asarray(trip, dtype=float)


def _dt_of(trip, config: SolverConfig) -> float:
    return trip.dt_record if isinstance(trip, SnapshotTriplet) else config.dt_record


def pde_residual(trip, grid: FourierGrid, config: SolverConfig) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise residual field and its mean square."""
    op = VorticityResidual(grid, config, _dt_of(trip, config))
    r = op.pointwise(_as_array(trip))
    return r, np.mean(r**2, axis=(-2, -1))


def residual_gradient(trip, grid: FourierGrid, config: SolverConfig) -> np.ndarray:
    op = VorticityResidual(grid, config, _dt_of(trip, config))
    return op.gradient(_as_array(trip))


def normalized_residual(r_pred, r_truth):
    """``(R_pred - R_truth)^2 / R_truth^2`` on scalar residuals."""
    r_pred = np.asarray(r_pred, dtype=float)
    r_truth = np.asarray(r_truth, dtype=float)
    if np.any(r_truth <= 0):
        raise InvalidArgumentError("normalized residual is undefined when the reference residual is zero")
    return (r_pred - r_truth) ** 2 / r_truth**2


def normalized_residual_metric(pred, truth, grid: FourierGrid, config: SolverConfig):
    _, r_pred = pde_residual(pred, grid, config)
    _, r_truth = pde_residual(truth, grid, config)
    return normalized_residual(r_pred, r_truth)
