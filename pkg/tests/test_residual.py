import numpy as np
import pytest

from sgflow.errors import InvalidArgumentError
from sgflow.residual import (
    SnapshotTriplet,
    VorticityResidual,
    normalized_residual,
    normalized_residual_metric,
    pde_residual,
    residual_gradient,
    triplets_from_frames,
)
from sgflow.solver import KolmogorovForcing, SolverConfig, init_taylor_green, simulate_trajectory
from sgflow.spectral import VorticityField, wavenumber_grid


def _trip(frames, dt):
    return SnapshotTriplet(*(VorticityField(f, 2 * np.pi, 2 * np.pi, i * dt) for i, f in enumerate(frames)), dt_record=dt)


def test_analytic_tgv_residual_is_small(grid32):
    cfg = SolverConfig(Re=100, dt_record=0.01)
    X, Y = grid32.coords()
    frames = [np.exp(-2 * t / 100) * -2 * np.sin(X) * np.sin(Y) for t in (0, 0.01, 0.02)]
    r, R = pde_residual(_trip(frames, 0.01), grid32, cfg)
    assert R < 1e-12


def test_triplet_spacing_checked(grid16):
    f = np.zeros((16, 16))
    with pytest.raises(InvalidArgumentError):
        SnapshotTriplet(*(VorticityField(f, 1, 1, t) for t in (0, 0.1, 0.3)), dt_record=0.1)


def test_triplets_from_frames():
    f = np.arange(5 * 4).reshape(5, 2, 2)
    t = triplets_from_frames(f)
    assert t.shape == (3, 3, 2, 2)
    assert np.array_equal(t[1, 0], f[1])
    with pytest.raises(InvalidArgumentError):
        triplets_from_frames(f[:2])


def test_zero_triplet_zero_gradient(grid16):
    g = residual_gradient(np.zeros((3, 16, 16)), grid16, SolverConfig())
    assert not np.any(g)


def test_gradient_prev_next_antisymmetric(grid16, rng):
    x = rng.standard_normal((3, 16, 16))
    g = residual_gradient(x, grid16, SolverConfig(forcing=KolmogorovForcing()))
    assert np.allclose(g[0], -g[2])


def test_gradient_matches_directional_fd(grid16, rng):
    op = VorticityResidual(grid16, SolverConfig(Re=50, forcing=KolmogorovForcing()))
    x = rng.standard_normal((3, 16, 16))
    d = rng.standard_normal(x.shape)
    _, g = op.value_and_gradient(x)
    h = 1e-6
    fd = (op.value(x + h * d) - op.value(x - h * d)) / (2 * h)
    assert fd == pytest.approx(np.sum(g * d), rel=1e-6)


def test_batch_matches_single(grid16, rng):
    op = VorticityResidual(grid16, SolverConfig())
    x = rng.standard_normal((4, 3, 16, 16))
    v, g = op.value_and_gradient(x)
    v1, g1 = op.value_and_gradient(x[2])
    assert v[2] == pytest.approx(v1)
    assert np.allclose(g[2], g1)


def test_scale_behaviour(grid16, rng):
    op = VorticityResidual(grid16, SolverConfig())
    x = rng.standard_normal((3, 16, 16))
    assert op.value(1e-6 * x) < 1e-10 * op.value(x)
    with pytest.raises(InvalidArgumentError):
        op.value(np.zeros((2, 16, 16)))


def test_refinement_lowers_residual():
    cfg = SolverConfig(Re=1000, forcing=KolmogorovForcing(), T=11 / 32)
    values = {}
    for n in (32, 64):
        g = wavenumber_grid(n)
        w0 = init_taylor_green(1.0, 1.0, 1.0, g, seed=0)
        frames = simulate_trajectory(w0, cfg).array()
        values[n] = np.mean(VorticityResidual(g, cfg).value(triplets_from_frames(frames)))
    assert values[64] <= values[32]


def test_normalized_residual_formula():
    assert normalized_residual(2.0, 1.0) == 1.0
    assert normalized_residual(0.0, 3.0) == 1.0
    assert normalized_residual(3.0, 3.0) == 0.0
    with pytest.raises(InvalidArgumentError):
        normalized_residual(1.0, 0.0)


def test_metric_identity(grid16, rng):
    x = rng.standard_normal((3, 16, 16))
    assert normalized_residual_metric(x, x, grid16, SolverConfig()) == 0.0


def test_analytic_tgv_triplet_at_record_interval():
    g = wavenumber_grid(32)
    X, Y = g.coords()
    dt = 1 / 32
    frames = np.stack([np.exp(-2 * t / 100) * -2 * np.sin(X) * np.sin(Y) for t in (0, dt, 2 * dt)])
    assert VorticityResidual(g, SolverConfig(Re=100, dt_record=dt)).value(frames) <= 1e-6
