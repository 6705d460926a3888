import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sgflow.denoiser import OracleDenoiser
from sgflow.diffusion import (
    Adam,
    SamplerConfig,
    VpSchedule,
    advancer_step,
    advancer_step_with_score,
    build_correction_schedule,
    corrector_adam,
    forward_noise,
    marginal,
    parse_policy,
    reconstruct,
    schedule_from_label,
    score_from_x0,
    variance,
)
from sgflow.errors import InvalidArgumentError, NumericalError


def test_marginal_endpoints():
    s = VpSchedule()
    m, sd = marginal(s, 0.0)
    assert (m, sd) == (1.0, 0.0)
    m, sd = marginal(s, 1.0)
    assert m == pytest.approx(np.exp(-0.5 * 10.05))
    assert m**2 + sd**2 == pytest.approx(1.0)
    with pytest.raises(InvalidArgumentError):
        marginal(s, 1.5)
    with pytest.raises(InvalidArgumentError):
        VpSchedule(beta_min=0)


@settings(max_examples=30, deadline=None)
@given(t=st.floats(1e-4, 1.0))
def test_variance_preserving(t):
    s = VpSchedule()
    m, sd = marginal(s, t)
    assert m * m + sd * sd == pytest.approx(1.0, abs=1e-12)
    assert variance(s, t) == pytest.approx(sd * sd)


def test_forward_noise_moments(rng):
    s = VpSchedule()
    x0 = np.full(200_000, 2.0)
    x = forward_noise(x0, 0.3, s, rng.standard_normal(x0.shape))
    m, sd = marginal(s, 0.3)
    assert x.mean() == pytest.approx(2 * m, abs=0.01)
    assert x.std() == pytest.approx(sd, rel=0.01)
    with pytest.raises(InvalidArgumentError):
        forward_noise(x0, 0.3, s, np.zeros(3))


def test_score_matches_gaussian_log_density():
    s = VpSchedule()
    m, sd = marginal(s, 0.5)
    assert score_from_x0(1.0, 0.5, 0.5, s) == pytest.approx(-(1.0 - 0.5 * m) / sd**2)
    with pytest.raises(ZeroDivisionError):
        score_from_x0(1.0, 0.5, 0.0, s)


def test_advancer_deterministic_part():
    s = VpSchedule()
    x, t, dt = 0.7, 0.5, 0.01
    b = s.beta(t)
    score = score_from_x0(x, 0.0, t, s)
    expected = x + (0.5 * b * x + b * score) * dt
    assert advancer_step(x, 0.0, t, dt, s, 0.0) == pytest.approx(expected)
    with pytest.raises(InvalidArgumentError):
        advancer_step(x, 0.0, 0.005, 0.01, s, 0.0)


@pytest.mark.parametrize(
    "policy,params,K,expected",
    [
        ("UniformN", (4,), 16, {2, 6, 10, 14}),
        ("StartIEndN", (2, 2), 10, {9, 8, 0, 1}),
        ("StartNSpaceS", (3, 2), 10, {9, 7, 5}),
        ("EndNSpaceS", (3, 2), 10, {0, 2, 4}),
        ("None", (), 10, set()),
    ],
)
def test_correction_schedules(policy, params, K, expected):
    sched = build_correction_schedule(policy, params, K)
    assert set(sched.indices) == expected
    assert schedule_from_label(sched.label, K) == sched


def test_schedule_errors():
    with pytest.raises(InvalidArgumentError):
        build_correction_schedule("UniformN", (20,), 10)
    with pytest.raises(InvalidArgumentError):
        build_correction_schedule("StartIEndN", (6, 6), 10)
    with pytest.raises(InvalidArgumentError):
        build_correction_schedule("EndNSpaceS", (4, 5), 10)
    with pytest.raises(InvalidArgumentError):
        build_correction_schedule("Sideways", (1,), 10)
    with pytest.raises(InvalidArgumentError):
        parse_policy("Middle3")
    assert parse_policy("end_4_space_1") == ("EndNSpaceS", (4, 1))


def test_adam_first_step_is_lr_sign():
    opt = Adam(0.1)
    x = opt.step(np.array([1.0, -2.0]), np.array([3.0, -0.5]))
    assert np.allclose(x, [0.9, -1.9], atol=1e-6)


def test_corrector_minimises_quadratic():
    x = corrector_adam(np.array([5.0, -3.0]), lambda x: 2 * x, M=500, eta=0.1)
    assert np.max(np.abs(x)) < 0.05
    assert np.array_equal(corrector_adam(np.ones(2), lambda x: x, M=0, eta=0.1), np.ones(2))
    with pytest.raises(NumericalError):
        corrector_adam(np.ones(2), lambda x: np.full(2, np.nan), M=1, eta=0.1)


def test_sampler_config_validation():
    with pytest.raises(InvalidArgumentError):
        SamplerConfig(K=1)
    with pytest.raises(InvalidArgumentError):
        SamplerConfig(t_guide=1e-4)
    with pytest.raises(InvalidArgumentError):
        SamplerConfig(K=16, schedule=schedule_from_label("Start2End2", 32))
    t = SamplerConfig(K=8).times()
    assert t[0] == pytest.approx(1e-3) and t[-1] == pytest.approx(0.4)


def test_reconstruct_oracle_and_determinism(rng):
    truth = rng.standard_normal((3, 8, 8))
    low = truth + 0.3 * rng.standard_normal(truth.shape)
    cfg = SamplerConfig(K=16, use_corrector=False, seed=4)
    out = reconstruct(low, OracleDenoiser(truth), None, cfg, VpSchedule())
    assert np.array_equal(out, truth)


def test_reconstruct_gaussian_posterior_variance():
    # with the exact Wiener denoiser the sampler must preserve the prior variance
    S = 0.76
    s = VpSchedule()

    class Wiener:
        scale = 1.0

        def predict_x0(self, x, t):
            m, sd = marginal(s, t)
            return m * S / (m * m * S + sd * sd) * x

    x0 = np.sqrt(S) * np.random.default_rng(99).standard_normal(20_000)
    out = reconstruct(x0, Wiener(), None, SamplerConfig(K=128, t_guide=0.1, use_corrector=False, seed=5), s)
    assert out.var() == pytest.approx(S, rel=0.05)


def test_euler_maruyama_additive_noise_is_strong_order_one():
    # the diffusion coefficient does not depend on x, so halving dt halves the pathwise error
    s = VpSchedule()

    def score(x, t):
        m, sd = marginal(s, t)
        return -(x - m) / (0.25 * m * m + sd * sd)

    rng = np.random.default_rng(0)
    paths, fine = 500, 2048
    x_T = rng.standard_normal(paths)
    dW = rng.standard_normal((fine, paths)) * np.sqrt(1 / fine)

    def solve(K):
        inc = dW.reshape(K, fine // K, paths).sum(axis=1)
        x, dt = x_T.copy(), 1 / K
        for i in range(K):
            t = 1 - i * dt
            x = advancer_step_with_score(x, score(x, t), t, dt, s, inc[i] / np.sqrt(dt))
        return x

    ref = solve(fine)
    e1, e2 = (np.sqrt(np.mean((solve(K) - ref) ** 2)) for K in (64, 128))
    assert e1 / e2 == pytest.approx(2.0, abs=0.15)
