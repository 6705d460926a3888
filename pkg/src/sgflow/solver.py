"""Pseudo-spectral solver for the 2D incompressible vorticity equation.

    d(omega)/dt + u . grad(omega) = (1/Re) lap(omega) + f

Diffusion is handled implicitly with Crank-Nicolson; advection and forcing
are advanced with a two-stage Heun average. Products are formed in physical
space and dealiased with the 2/3 rule.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from sgflow import spectral
from sgflow.errors import InvalidArgumentError, NumericalBlowupError
from sgflow.spectral import FourierGrid, VorticityField, irfft2, rfft2, wavenumber_grid

VELOCITY_FLOOR = 1e-8
KOLMOGOROV_BURN_IN = 5.0


@dataclass(frozen=True)
class KolmogorovForcing:
    """``f = -A cos(kf * y) - mu * omega``."""

    A: float = 4.0
    kf: int = 4
    mu: float = 0.1


@dataclass(frozen=True)
class SolverConfig:
    Re: float = 1000.0
    forcing: KolmogorovForcing | None = None
    dt_record: float = 1.0 / 32
    dt_max: float = 1.0 / 32
    cfl_c: float = 0.5
    adaptive: bool = True
    T: float = 1.0
    Lx: float = 2 * np.pi
    Ly: float = 2 * np.pi
    n: int = 64

    def __post_init__(self):
        if not self.Re > 0:
            raise InvalidArgumentError(f"Re must be positive, got {self.Re}")
        if not self.dt_record > 0:
            raise InvalidArgumentError(f"dt_record must be positive, got {self.dt_record}")
        if not self.dt_max > 0:
            raise InvalidArgumentError(f"dt_max must be positive, got {self.dt_max}")
        if not 0 < self.cfl_c <= 1:
            raise InvalidArgumentError(f"cfl_c must lie in (0, 1], got {self.cfl_c}")
        if self.T < 0 or (self.T > 0 and self.T < self.dt_record * (1 - 1e-12)):
            raise InvalidArgumentError(f"T must be 0 or at least dt_record, got T={self.T}")

    @property
    def nu(self) -> float:
        return 1.0 / self.Re

    def replace(self, **changes) -> "SolverConfig":
        return dataclasses.replace(self, **changes)

    def grid(self) -> FourierGrid:
        return wavenumber_grid(self.n, self.Lx, self.Ly)


@dataclass
class Trajectory:
    frames: list[VorticityField]
    config: SolverConfig
    seed: int = 0

    def array(self) -> np.ndarray:
        return np.stack([f.data for f in self.frames])

    @property
    def times(self) -> np.ndarray:
        return np.array([f.time for f in self.frames])

    def __len__(self) -> int:
        return len(self.frames)


def frame_count(T: float, dt_record: float) -> int:
    return int(math.floor(T / dt_record + 1e-9)) + 1


def forcing_field(grid: FourierGrid, forcing: KolmogorovForcing | None) -> np.ndarray:
    """State-independent part of the forcing on the grid."""
    if forcing is None:
        return np.zeros(grid.shape)
    _, Y = grid.coords()
    return -forcing.A * np.cos(forcing.kf * Y)


class _Integrator:
    """Fourier-space stepping state for one grid/config pair."""

    def __init__(self, grid: FourierGrid, config: SolverConfig):
        self.grid = grid
        self.config = config
        self.nu = config.nu
        self.f_hat = rfft2(forcing_field(grid, config.forcing)) * grid.mask_h
        self.mu = config.forcing.mu if config.forcing is not None else 0.0
        self.half_visc = 0.5 * self.nu * grid.ksq_h

    def fields(self, w_hat: np.ndarray):
        g = self.grid
        psi_h = w_hat * g.inv_ksq_h
        stack = np.stack([g.iky_h * psi_h, -g.ikx_h * psi_h, g.ikx_h * w_hat, g.iky_h * w_hat])
        u, v, wx, wy = irfft2(stack, g.n)
        return u, v, wx, wy

    def nonlinear_hat(self, w_hat: np.ndarray, uv=None) -> np.ndarray:
        u, v, wx, wy = self.fields(w_hat) if uv is None else uv
        adv_hat = rfft2(u * wx + v * wy)
        out = -adv_hat * self.grid.mask_h + self.f_hat
        if self.mu:
            out = out - self.mu * w_hat
        return out

    def cfl_dt(self, u: np.ndarray, v: np.ndarray) -> float:
        vmax = max(float(np.max(np.abs(u))), float(np.max(np.abs(v))), VELOCITY_FLOOR)
        return min(self.config.dt_max, self.config.cfl_c * self.grid.dx / vmax)

    def step(self, w_hat: np.ndarray, dt: float, n1: np.ndarray | None = None, t: float = 0.0) -> np.ndarray:
        if n1 is None:
            n1 = self.nonlinear_hat(w_hat)
        denom = 1.0 + dt * self.half_visc
        explicit = w_hat - dt * self.half_visc * w_hat
        w_star = (explicit + dt * n1) / denom
        n2 = self.nonlinear_hat(w_star)
        w_new = (explicit + 0.5 * dt * (n1 + n2)) / denom
        w_new = w_new * self.grid.mask_h
        if not np.all(np.isfinite(w_new)):
            raise NumericalBlowupError(t + dt)
        return w_new

    def advance(self, w_hat: np.ndarray, t: float, t_end: float) -> np.ndarray:
        """Integrate from ``t`` to exactly ``t_end``."""
        cfg = self.config
        if not cfg.adaptive:
            span = t_end - t
            if span <= 0:
                return w_hat
            nsub = max(1, math.ceil(span / cfg.dt_max - 1e-9))
            dt = span / nsub
            for i in range(nsub):
                w_hat = self.step(w_hat, dt, t=t + i * dt)
            return w_hat
        while t_end - t > 1e-12 * max(1.0, abs(t_end)):
            uvw = self.fields(w_hat)
            dt = self.cfl_dt(uvw[0], uvw[1])
            remaining = t_end - t
            if dt >= remaining:
                dt = remaining
            elif remaining - dt < 0.25 * dt:
                # split the tail evenly rather than leave a sliver step
                dt = 0.5 * remaining
            w_hat = self.step(w_hat, dt, n1=self.nonlinear_hat(w_hat, uvw), t=t)
            t += dt
        return w_hat


def _grid_for(omega: np.ndarray, config: SolverConfig) -> FourierGrid:
    return wavenumber_grid(omega.shape[-1], config.Lx, config.Ly)


def nonlinear_term(omega: np.ndarray, grid: FourierGrid, config: SolverConfig) -> np.ndarray:
    """``-u . grad(omega) + f(omega)``, dealiased, in physical space."""
    spectral.check_shape(omega, grid)
    integ = _Integrator(grid, config)
    return irfft2(integ.nonlinear_hat(rfft2(omega)), grid.n)


def step_cn_heun(omega: np.ndarray, dt: float, grid: FourierGrid, config: SolverConfig, t: float = 0.0) -> np.ndarray:
    if not dt > 0:
        raise InvalidArgumentError(f"dt must be positive, got {dt}")
    spectral.check_shape(omega, grid)
    integ = _Integrator(grid, config)
    return irfft2(integ.step(rfft2(omega), dt, t=t), grid.n)


def cfl_dt(omega: np.ndarray, grid: FourierGrid, config: SolverConfig) -> float:
    u, v = spectral.velocity_from_vorticity(omega, grid)
    return _Integrator(grid, config).cfl_dt(u, v)


def integrate(omega: np.ndarray, config: SolverConfig, duration: float) -> np.ndarray:
    """Evolve ``omega`` for ``duration`` without recording frames."""
    grid = _grid_for(omega, config)
    integ = _Integrator(grid, config)
    if duration <= 0:
        return np.array(omega, dtype=float)
    return irfft2(integ.advance(rfft2(omega), 0.0, duration), grid.n)


def simulate_trajectory(omega0: np.ndarray | VorticityField, config: SolverConfig, seed: int = 0) -> Trajectory:
    """Integrate to ``config.T`` and record a frame every ``dt_record``.

    Frame times are ``i * dt_record``; the adaptive stepper clamps its last
    substep so each record time is hit exactly. Grid size is taken from
    ``omega0``.
    """
    data = omega0.data if isinstance(omega0, VorticityField) else np.asarray(omega0, dtype=float)
    if data.ndim != 2 or data.shape[0] != data.shape[1]:
        raise InvalidArgumentError(f"initial vorticity must be square 2D, got {data.shape}")
    grid = _grid_for(data, config)
    config = config.replace(n=grid.n)
    integ = _Integrator(grid, config)
    nframes = frame_count(config.T, config.dt_record)
    frames = [VorticityField(data.copy(), config.Lx, config.Ly, 0.0)]
    w_hat = rfft2(data)
    for i in range(1, nframes):
        t0 = (i - 1) * config.dt_record
        t1 = i * config.dt_record
        w_hat = integ.advance(w_hat, t0, t1)
        frames.append(VorticityField(irfft2(w_hat, grid.n), config.Lx, config.Ly, t1))
    return Trajectory(frames=frames, config=config, seed=seed)


# ---------------------------------------------------------------------------
# initial conditions


def init_taylor_green(
    U0: float,
    k: float,
    perturb_amplitude: float,
    grid: FourierGrid,
    seed: int = 0,
    power: float = 2.5,
    cutoff: float = 7.0,
) -> np.ndarray:
    """``-2 U0 k sin(kx) sin(ky)`` plus an optional Gaussian random field."""
    if not k > 0:
        raise InvalidArgumentError(f"k must be positive, got {k}")
    X, Y = grid.coords()
    omega = -2.0 * U0 * k * np.sin(k * X) * np.sin(k * Y)
    if perturb_amplitude > 0:
        omega = omega + spectral.gaussian_random_field(grid, perturb_amplitude, power, cutoff, seed)
    return omega


def _lamb_oseen_peak() -> float:
    # max over x of (1 - exp(-x^2)) / x
    res = minimize_scalar(lambda x: -(1 - np.exp(-x * x)) / x, bounds=(0.5, 2.0), method="bounded", options={"xatol": 1e-12})
    return float(-res.fun)


_PEAK_FACTOR = _lamb_oseen_peak()


def gaussian_vortices(
    grid: FourierGrid,
    centers: np.ndarray,
    core_radii: np.ndarray,
    max_velocities: np.ndarray,
    signs: np.ndarray | None = None,
) -> np.ndarray:
    """Superpose Gaussian vortices, each with its 8 nearest periodic images.

    A vortex ``Gamma/(pi rc^2) exp(-r^2/rc^2)`` has peak azimuthal velocity
    ``Gamma/(2 pi rc) * 0.638...``; ``Gamma`` is chosen to hit ``max_velocities``.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float)).reshape(-1, 2)
    core_radii = np.asarray(core_radii, dtype=float).reshape(-1)
    max_velocities = np.asarray(max_velocities, dtype=float).reshape(-1)
    signs = np.ones(len(centers)) if signs is None else np.asarray(signs, dtype=float).reshape(-1)
    X, Y = grid.coords()
    omega = np.zeros(grid.shape)
    for (cx, cy), rc, vmax, sgn in zip(centers, core_radii, max_velocities, signs):
        gamma = 2 * np.pi * rc * vmax / _PEAK_FACTOR
        amp = sgn * gamma / (np.pi * rc**2)
        for mx in (-1, 0, 1):
            for my in (-1, 0, 1):
                r2 = (X - cx - mx * grid.Lx) ** 2 + (Y - cy - my * grid.Ly) ** 2
                omega += amp * np.exp(-r2 / rc**2)
    return omega


def init_decaying(
    grid: FourierGrid,
    seed: int = 0,
    count_range: tuple[int, int] = (5, 20),
    core_radius_range: tuple[float, float] = (0.05, 0.15),
    max_velocity_range: tuple[float, float] = (0.5, 1.5),
) -> np.ndarray:
    """Randomly placed Gaussian vortices of random sign, size and strength.

    ``core_radius_range`` is a fraction of ``Lx``.
    """
    lo, hi = count_range
    if lo < 0 or hi < lo:
        raise InvalidArgumentError(f"bad vortex count range {count_range}")
    rng = np.random.default_rng(seed)
    count = int(rng.integers(lo, hi + 1))
    centers = rng.uniform(0, 1, size=(count, 2)) * np.array([grid.Lx, grid.Ly])
    radii = rng.uniform(*core_radius_range, size=count) * grid.Lx
    vmax = rng.uniform(*max_velocity_range, size=count)
    signs = rng.choice([-1.0, 1.0], size=count)
    return gaussian_vortices(grid, centers, radii, vmax, signs)


def init_kolmogorov(
    grid: FourierGrid,
    config: SolverConfig,
    seed: int = 0,
    burn_in: float = KOLMOGOROV_BURN_IN,
    amplitude: float = 1.0,
    power: float = 2.5,
    cutoff: float = 7.0,
) -> np.ndarray:
    """Random field spun up under the forced equation; the final state is returned."""
    if config.forcing is None:
        raise InvalidArgumentError("kolmogorov initialization needs a forcing configuration")
    omega = spectral.gaussian_random_field(grid, amplitude, power, cutoff, seed)
    if burn_in <= 0:
        return omega
    return integrate(omega, config.replace(n=grid.n, Lx=grid.Lx, Ly=grid.Ly), burn_in)


def init_mcwilliams(grid: FourierGrid, seed: int = 0, peak: float = 6.0, energy: float = 0.5) -> np.ndarray:
    """Random isotropic field after McWilliams (1984).

    Streamfunction amplitudes follow ``|k|^-1 (1 + (|k|/peak)^4)^-1`` with
    Gaussian coefficients; the mean is removed and the result rescaled to the
    requested mean kinetic energy.
    """
    if grid.n < 16:
        raise InvalidArgumentError(f"McWilliams initialization needs n >= 16, got {grid.n}")
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(grid.shape)
    kmag = grid.kmag_h
    spec = np.zeros_like(kmag)
    nz = kmag > 0
    spec[nz] = 1.0 / (kmag[nz] * (1.0 + (kmag[nz] / peak) ** 4))
    psi_h = np.sqrt(spec) * rfft2(white) * grid.mask_h
    psi_h[0, 0] = 0.0
    psi = irfft2(psi_h, grid.n)
    omega = -spectral.laplacian(psi, grid)
    ke = float(spectral.kinetic_energy(omega, grid))
    return omega * math.sqrt(energy / ke)


# ---------------------------------------------------------------------------
# degradation


def downsample_uniform(f: np.ndarray, factor: int) -> np.ndarray:
    """Strided subsampling keeping indices ``0, factor, 2*factor, ...`` on both axes."""
    f = np.asarray(f)
    if int(factor) != factor or factor < 1 or f.shape[-1] % factor or f.shape[-2] % factor:
        raise InvalidArgumentError(f"factor {factor} does not divide grid shape {f.shape[-2:]}")
    factor = int(factor)
    return np.ascontiguousarray(f[..., ::factor, ::factor])


def upsample_nearest(f: np.ndarray, factor: int) -> np.ndarray:
    """Nearest-neighbour upsampling: each value fills a ``factor x factor`` block."""
    if int(factor) != factor or factor < 1:
        raise InvalidArgumentError(f"upsampling factor must be a positive integer, got {factor}")
    return np.repeat(np.repeat(np.asarray(f), factor, axis=-2), factor, axis=-1)


def downsample_trajectory(traj: Trajectory, factor: int) -> Trajectory:
    frames = [VorticityField(downsample_uniform(f.data, factor), f.Lx, f.Ly, f.time) for f in traj.frames]
    return Trajectory(frames=frames, config=traj.config.replace(n=traj.config.n // factor), seed=traj.seed)


def make_pair(
    omega0_high: np.ndarray,
    factor: int,
    config: SolverConfig,
    seed: int = 0,
    pipeline: str = "solver",
) -> tuple[Trajectory, Trajectory]:
    """Return ``(low, high)`` trajectories for one initial condition.

    ``pipeline="solver"`` integrates the downsampled initial state on the
    coarse grid ("downsample then integrate"). ``pipeline="downsample"``
    subsamples each frame of the fine trajectory ("integrate then downsample").
    """
    omega0_high = np.asarray(omega0_high, dtype=float)
    if omega0_high.shape[-1] % factor:
        raise InvalidArgumentError(f"factor {factor} does not divide n={omega0_high.shape[-1]}")
    high = simulate_trajectory(omega0_high, config, seed)
    if pipeline == "solver":
        low = simulate_trajectory(downsample_uniform(omega0_high, factor), config, seed)
    elif pipeline == "downsample":
        low = downsample_trajectory(high, factor)
    else:
        raise InvalidArgumentError(f"unknown pipeline {pipeline!r}")
    return low, high


# ---------------------------------------------------------------------------
# dataset presets (desk scale)


@dataclass(frozen=True)
class Preset:
    """Solver settings and initial-condition sampler for one dataset family.

    ``trajectories`` is the desk-scale default count.
    """

    name: str
    config: SolverConfig
    trajectories: int
    init: Callable[[FourierGrid, SolverConfig, int], np.ndarray] = field(repr=False)


TGV_WAVENUMBER = 4.0 / 3.0  # lowest mode periodic on a 3*pi/2 box


def _tgv_init(grid, config, seed):
    amp = 0.1 * 2 * TGV_WAVENUMBER
    return init_taylor_green(1.0, TGV_WAVENUMBER, amp, grid, seed)


PRESETS: dict[str, Preset] = {
    "taylor_green": Preset(
        "taylor_green",
        SolverConfig(Re=1000.0, T=6.0, Lx=1.5 * np.pi, Ly=1.5 * np.pi),
        trajectories=10,
        init=_tgv_init,
    ),
    "decaying": Preset(
        "decaying",
        SolverConfig(Re=450.0, T=2.0, Lx=1.0, Ly=1.0),
        trajectories=40,
        init=lambda grid, config, seed: init_decaying(grid, seed),
    ),
    "kolmogorov": Preset(
        "kolmogorov",
        SolverConfig(Re=1000.0, T=10.0, forcing=KolmogorovForcing(4.0, 4, 0.1)),
        trajectories=5,
        init=lambda grid, config, seed: init_kolmogorov(grid, config, seed),
    ),
    "mcwilliams": Preset(
        "mcwilliams",
        SolverConfig(Re=2000.0, T=10.0),
        trajectories=5,
        init=lambda grid, config, seed: init_mcwilliams(grid, seed),
    ),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise InvalidArgumentError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def generate_high_fidelity(
    preset: Preset | str,
    n: int = 64,
    gen_factor: int = 4,
    seed: int = 0,
    index: int = 0,
    config: SolverConfig | None = None,
) -> Trajectory:
    """Simulate one trajectory at ``n * gen_factor`` and subsample it to ``n``.

    The trajectory seed is ``seed + index``.
    """
    if isinstance(preset, str):
        preset = get_preset(preset)
    cfg = (config or preset.config).replace(n=n * gen_factor)
    grid = cfg.grid()
    traj_seed = seed + index
    omega0 = preset.init(grid, cfg, traj_seed)
    fine = simulate_trajectory(omega0, cfg, traj_seed)
    return downsample_trajectory(fine, gen_factor) if gen_factor > 1 else fine
