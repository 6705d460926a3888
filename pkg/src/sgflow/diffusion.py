"""Variance-preserving diffusion, guided start and the predictor-corrector-advancer sampler."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from sgflow.errors import InvalidArgumentError, NumericalError


@dataclass(frozen=True)
class VpSchedule:
    """Linear ``beta(t) = beta_min + (beta_max - beta_min) t / T_diff``."""

    beta_min: float = 0.1
    beta_max: float = 20.0
    T_diff: float = 1.0

    def __post_init__(self):
        if not (self.beta_min > 0 and self.beta_max >= self.beta_min and self.T_diff > 0):
            raise InvalidArgumentError(f"invalid VP schedule {self}")

    def beta(self, t):
        return self.beta_min + (self.beta_max - self.beta_min) * np.asarray(t) / self.T_diff

    def B(self, t):
        """Integrated rate ``int_0^t beta(s) ds``."""
        t = np.asarray(t)
        return self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t / self.T_diff

    def drift(self, x, t):
        return -0.5 * self.beta(t) * x

    def diffusion(self, t):
        return np.sqrt(self.beta(t))


def _check_time(s: VpSchedule, t) -> None:
    if np.any(np.asarray(t) < 0) or np.any(np.asarray(t) > s.T_diff):
        raise InvalidArgumentError(f"diffusion time {t} outside [0, {s.T_diff}]")


def marginal(s: VpSchedule, t):
    """``(mean_scale, std)`` of ``x_t | x_0``."""
    _check_time(s, t)
    b = s.B(t)
    return np.exp(-0.5 * b), np.sqrt(-np.expm1(-b))


def variance(s: VpSchedule, t):
    _check_time(s, t)
    return -np.expm1(-s.B(t))


def forward_noise(x0: np.ndarray, t: float, s: VpSchedule, noise: np.ndarray) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if noise.shape != x0.shape:
        raise InvalidArgumentError(f"noise shape {noise.shape} does not match data {x0.shape}")
    m, sd = marginal(s, t)
    return m * x0 + sd * noise


def score_from_x0(x_t, x0_hat, t: float, s: VpSchedule):
    """Score of the VP marginal implied by a clean-sample estimate."""
    var = variance(s, t)
    if not var > 0:
        raise ZeroDivisionError("score is undefined at t=0 (zero marginal variance)")
    m, _ = marginal(s, t)
    return -(np.asarray(x_t) - m * np.asarray(x0_hat)) / var


def advancer_step_with_score(x_t, score, t: float, dt: float, s: VpSchedule, noise):
    """Euler-Maruyama step of the reverse SDE from ``t`` to ``t - dt``."""
    if not dt > 0 or t - dt < -1e-12:
        raise InvalidArgumentError(f"invalid reverse step dt={dt} at t={t}")
    b = s.beta(t)
    drift = -0.5 * b * x_t - b * score
    return x_t - drift * dt + np.sqrt(b * dt) * noise


def advancer_step(x_t, x0_hat, t: float, dt: float, s: VpSchedule, noise):
    return advancer_step_with_score(x_t, score_from_x0(x_t, x0_hat, t, s), t, dt, s, noise)


# ---------------------------------------------------------------------------
# correction scheduling

POLICIES = ("UniformN", "StartIEndN", "StartNSpaceS", "EndNSpaceS")


@dataclass(frozen=True)
class CorrectionSchedule:
    policy: str
    params: tuple[int, ...]
    K: int
    indices: frozenset[int]

    @property
    def label(self) -> str:
        p = self.params
        if self.policy == "UniformN":
            return f"Uniform{p[0]}"
        if self.policy == "StartIEndN":
            return f"Start{p[0]}End{p[1]}"
        if self.policy == "StartNSpaceS":
            return f"Start{p[0]}Space{p[1]}"
        if self.policy == "EndNSpaceS":
            return f"End{p[0]}Space{p[1]}"
        return "None"

    def __contains__(self, i: int) -> bool:
        return i in self.indices


def build_correction_schedule(policy: str, params, K: int) -> CorrectionSchedule:
    """Reverse-step indices at which the corrector runs.

    Index ``K-1`` is the first reverse step (at ``t_guide``, "start") and
    index ``0`` the last (near ``t = 0``, "end").
    """
    params = tuple(int(p) for p in params)
    if K < 1:
        raise InvalidArgumentError(f"K must be positive, got {K}")

    def need(count):
        if len(params) != count or any(p < 0 for p in params):
            raise InvalidArgumentError(f"{policy} expects {count} non-negative integers, got {params}")

    if policy == "UniformN":
        need(1)
        (N,) = params
        if N > K:
            raise InvalidArgumentError(f"cannot place {N} corrections in {K} steps")
        idx = [int(math.floor((j + 0.5) * K / N)) for j in range(N)]
    elif policy == "StartIEndN":
        need(2)
        I, N = params
        idx = [K - 1 - j for j in range(I)] + list(range(N))
    elif policy in ("StartNSpaceS", "EndNSpaceS"):
        need(2)
        N, S = params
        if N > 1 and S < 1:
            raise InvalidArgumentError(f"spacing must be at least 1, got {S}")
        idx = [K - 1 - j * S for j in range(N)] if policy == "StartNSpaceS" else [j * S for j in range(N)]
    elif policy == "None":
        idx = []
    else:
        raise InvalidArgumentError(f"unknown correction policy {policy!r}; choose from {POLICIES}")
    if any(i < 0 or i >= K for i in idx):
        raise InvalidArgumentError(f"{policy}{params} places corrections outside 0..{K - 1}")
    if len(set(idx)) != len(idx):
        raise InvalidArgumentError(f"{policy}{params} places overlapping corrections for K={K}")
    return CorrectionSchedule(policy=policy, params=params, K=K, indices=frozenset(idx))


_LABEL_PATTERNS = [
    (re.compile(r"^uniform(\d+)$", re.I), "UniformN"),
    (re.compile(r"^start(\d+)end(\d+)$", re.I), "StartIEndN"),
    (re.compile(r"^start(\d+)space(\d+)$", re.I), "StartNSpaceS"),
    (re.compile(r"^end(\d+)space(\d+)$", re.I), "EndNSpaceS"),
]


def parse_policy(label: str) -> tuple[str, tuple[int, ...]]:
    """Parse labels such as ``Start2End2`` or ``End4Space1``."""
    compact = re.sub(r"[\s_\-]", "", label)
    if compact.lower() == "none":
        return "None", ()
    for pattern, policy in _LABEL_PATTERNS:
        m = pattern.match(compact)
        if m:
            return policy, tuple(int(g) for g in m.groups())
    raise InvalidArgumentError(f"cannot parse correction policy {label!r}")


def schedule_from_label(label: str, K: int) -> CorrectionSchedule:
    policy, params = parse_policy(label)
    return build_correction_schedule(policy, params, K)


# ---------------------------------------------------------------------------
# corrector


class Adam:
    """Bias-corrected Adam on a single array parameter."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(x)
            self.v = np.zeros_like(x)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return x - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def corrector_adam(x0_hat: np.ndarray, residual_grad: Callable[[np.ndarray], np.ndarray], M: int, eta: float) -> np.ndarray:
    """``M`` Adam descent steps on the residual, starting from fresh moments."""
    if M < 0:
        raise InvalidArgumentError(f"M must be non-negative, got {M}")
    if not eta > 0:
        raise InvalidArgumentError(f"eta must be positive, got {eta}")
    x = np.array(x0_hat, dtype=float)
    opt = Adam(eta)
    for step in range(M):
        g = residual_grad(x)
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite residual gradient at corrector step {step}")
        x = opt.step(x, g)
    return x


# ---------------------------------------------------------------------------
# sampler


class Denoiser(Protocol):
    """Predicts the clean sample from ``x_t``; ``scale`` maps data to diffusion units."""

    scale: float

    def predict_x0(self, x_t: np.ndarray, t: float) -> np.ndarray: ...


class ResidualOperator(Protocol):
    def gradient(self, x: np.ndarray) -> np.ndarray: ...


@dataclass
class SamplerConfig:
    K: int = 128
    t_guide: float = 0.4
    M: int = 10
    eta: float = 0.05
    schedule: CorrectionSchedule | None = None
    seed: int = 0
    use_corrector: bool = True
    use_importance_weights: bool = True
    t_min: float = 1e-3

    def __post_init__(self):
        if self.K < 2:
            raise InvalidArgumentError(f"K must be at least 2, got {self.K}")
        if self.M < 0:
            raise InvalidArgumentError(f"M must be non-negative, got {self.M}")
        if not self.eta > 0:
            raise InvalidArgumentError(f"eta must be positive, got {self.eta}")
        if not 0 < self.t_min < self.t_guide:
            raise InvalidArgumentError(f"need 0 < t_min < t_guide, got {self.t_min}, {self.t_guide}")
        if self.schedule is None:
            self.schedule = build_correction_schedule("StartIEndN", (2, 2), self.K)
        if self.schedule.K != self.K:
            raise InvalidArgumentError(f"schedule built for K={self.schedule.K}, sampler uses K={self.K}")

    def times(self) -> np.ndarray:
        """Reverse-step times ``tau_0 < ... < tau_{K-1} = t_guide``."""
        return np.linspace(self.t_min, self.t_guide, self.K)


def reconstruct(
    low: np.ndarray,
    denoiser: Denoiser,
    residual_op: ResidualOperator | None,
    cfg: SamplerConfig,
    s: VpSchedule,
) -> np.ndarray:
    """Guided-start reverse diffusion from an upsampled low-fidelity input.

    ``low`` must already live on the target grid. The input is noised to
    ``t_guide``; each reverse step predicts the clean sample, optionally
    corrects it against the PDE residual (in data units), then advances with
    Euler-Maruyama. The corrected prediction of the final step is returned.
    """
    if not cfg.t_guide < s.T_diff:
        raise InvalidArgumentError(f"t_guide must be below T_diff={s.T_diff}")
    scale = float(getattr(denoiser, "scale", 1.0))
    rng = np.random.default_rng(cfg.seed)
    taus = cfg.times()
    x = forward_noise(np.asarray(low, dtype=float) / scale, taus[-1], s, rng.standard_normal(np.shape(low)))
    correct = cfg.use_corrector and residual_op is not None and cfg.M > 0
    x0 = x
    for i in range(cfg.K - 1, -1, -1):
        t = float(taus[i])
        x0 = denoiser.predict_x0(x, t)
        if correct and i in cfg.schedule:
            x0 = corrector_adam(x0 * scale, residual_op.gradient, cfg.M, cfg.eta) / scale
        if i > 0:
            dt = t - float(taus[i - 1])
            x = advancer_step(x, x0, t, dt, s, rng.standard_normal(x.shape))
    return x0 * scale
