import numpy as np
import pytest

from sgflow.errors import InvalidArgumentError, NumericalBlowupError
from sgflow.solver import (
    KolmogorovForcing,
    SolverConfig,
    cfl_dt,
    downsample_uniform,
    forcing_field,
    frame_count,
    gaussian_vortices,
    generate_high_fidelity,
    get_preset,
    init_decaying,
    init_mcwilliams,
    init_taylor_green,
    make_pair,
    nonlinear_term,
    simulate_trajectory,
    step_cn_heun,
    upsample_nearest,
)
from sgflow.spectral import kinetic_energy, wavenumber_grid


def tgv(grid):
    return init_taylor_green(1.0, 1.0, 0.0, grid)


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        SolverConfig(Re=0)
    with pytest.raises(InvalidArgumentError):
        SolverConfig(cfl_c=1.5)
    with pytest.raises(InvalidArgumentError):
        SolverConfig(T=0.01)
    assert SolverConfig(Re=200).nu == pytest.approx(1 / 200)


def test_frame_count():
    assert frame_count(1.0, 1 / 32) == 33
    assert frame_count(0.0, 1 / 32) == 1


def test_tgv_is_a_steady_nonlinear_balance(grid32):
    # sin*sin TGV has u.grad(omega) == 0
    n = nonlinear_term(tgv(grid32), grid32, SolverConfig())
    assert np.max(np.abs(n)) < 1e-12


def test_single_step_decay(grid32):
    cfg = SolverConfig(Re=100)
    w0 = tgv(grid32)
    dt = 0.01
    w1 = step_cn_heun(w0, dt, grid32, cfg)
    g = 2 * cfg.nu * dt / 2
    assert np.allclose(w1, w0 * (1 - g) / (1 + g), atol=1e-13)
    with pytest.raises(InvalidArgumentError):
        step_cn_heun(w0, 0.0, grid32, cfg)


def test_trajectory_times_and_shape(grid16):
    cfg = SolverConfig(Re=100, T=0.25, dt_record=1 / 16)
    traj = simulate_trajectory(tgv(grid16), cfg)
    assert len(traj) == 5
    assert np.allclose(traj.times, np.arange(5) / 16)
    assert traj.array().shape == (5, 16, 16)


def test_cfl_bound(grid32):
    cfg = SolverConfig(dt_max=1.0, cfl_c=0.5)
    dt = cfl_dt(10 * tgv(grid32), grid32, cfg)
    assert dt == pytest.approx(0.5 * grid32.dx / 10, rel=1e-6)


def test_blowup_reports_time(grid16):
    cfg = SolverConfig(Re=1e12, adaptive=False, dt_max=1.0, T=200.0, dt_record=200.0)
    w = 10 * init_decaying(grid16, seed=0)
    with pytest.raises(NumericalBlowupError) as exc:
        with np.errstate(all="ignore"):
            simulate_trajectory(w, cfg)
    assert exc.value.time > 0


def test_kolmogorov_forcing_field(grid16):
    f = forcing_field(grid16, KolmogorovForcing(A=2, kf=1))
    _, Y = grid16.coords()
    assert np.allclose(f, -2 * np.cos(Y))
    assert not np.any(forcing_field(grid16, None))


def test_energy_decays_without_forcing(grid32):
    w = init_mcwilliams(grid32, seed=1)
    assert kinetic_energy(w, grid32) == pytest.approx(0.5, rel=1e-9)
    assert abs(w.mean()) < 1e-12
    traj = simulate_trajectory(w, SolverConfig(Re=500, T=0.5))
    e = [kinetic_energy(f.data, grid32) for f in traj.frames]
    assert all(b <= a + 1e-12 for a, b in zip(e, e[1:]))


def test_gaussian_vortex_peak_velocity():
    g = wavenumber_grid(128, Lx=1.0)
    w = gaussian_vortices(g, np.array([[0.5, 0.5]]), np.array([0.05]), np.array([1.3]), np.array([1.0]))
    from sgflow.spectral import velocity_from_vorticity

    u, v = velocity_from_vorticity(w, g)
    assert np.max(np.hypot(u, v)) == pytest.approx(1.3, rel=0.05)


def test_down_up_sampling():
    f = np.arange(64.0).reshape(8, 8)
    d = downsample_uniform(f, 2)
    assert np.array_equal(d, f[::2, ::2])
    u = upsample_nearest(d, 2)
    assert u.shape == (8, 8)
    assert np.array_equal(u[::2, ::2], d)
    assert np.array_equal(u[1::2, 1::2], d)
    with pytest.raises(InvalidArgumentError):
        downsample_uniform(f, 3)


@pytest.mark.parametrize("pipeline", ["solver", "downsample"])
def test_make_pair(grid32, pipeline):
    cfg = SolverConfig(Re=100, T=0.125)
    w0 = init_decaying(grid32, seed=2)
    low, high = make_pair(w0, 4, cfg, pipeline=pipeline)
    assert high.array().shape == (5, 32, 32)
    assert low.array().shape == (5, 8, 8)
    assert np.array_equal(low.frames[0].data, downsample_uniform(w0, 4))
    with pytest.raises(InvalidArgumentError):
        make_pair(w0, 4, cfg, pipeline="other")


def test_presets_and_generation_determinism():
    with pytest.raises(InvalidArgumentError):
        get_preset("nope")
    cfg = get_preset("taylor_green").config.replace(T=0.125)
    a = generate_high_fidelity("taylor_green", n=16, gen_factor=2, seed=3, config=cfg)
    b = generate_high_fidelity("taylor_green", n=16, gen_factor=2, seed=3, config=cfg)
    assert np.array_equal(a.array(), b.array())
    assert a.array().shape == (5, 16, 16)


def test_pipelines_agree_on_resolved_tgv():
    g = wavenumber_grid(64)
    cfg = SolverConfig(Re=100, T=1.0)
    low, high = make_pair(tgv(g), 4, cfg, pipeline="solver")
    ref = downsample_uniform(high.frames[-1].data, 4)
    assert np.linalg.norm(low.frames[-1].data - ref) / np.linalg.norm(ref) <= 1e-3


def test_kolmogorov_pipelines_differ():
    cfg = get_preset("kolmogorov").config.replace(T=1.0)
    g = wavenumber_grid(64)
    w0 = get_preset("kolmogorov").init(g, cfg.replace(n=64), 0)
    a, _ = make_pair(w0, 4, cfg, pipeline="solver")
    b, _ = make_pair(w0, 4, cfg, pipeline="downsample")
    assert np.array_equal(a.frames[0].data, b.frames[0].data)
    assert np.linalg.norm(a.frames[-1].data - b.frames[-1].data) > 0


def test_enstrophy_decays_in_inviscid_limit(grid32):
    traj = simulate_trajectory(tgv(grid32), SolverConfig(Re=1e6, T=1.0))
    z = [np.mean(f.data**2) for f in traj.frames]
    assert all(b <= a for a, b in zip(z, z[1:]))


def test_record_times_exact_and_deterministic(grid32):
    w = init_decaying(grid32, seed=4)
    cfg = SolverConfig(Re=450, T=0.5, Lx=1.0, Ly=1.0)
    a = simulate_trajectory(w, cfg)
    b = simulate_trajectory(w, cfg)
    assert np.max(np.abs(a.times - np.arange(len(a)) * cfg.dt_record)) <= 1e-12
    assert a.array().tobytes() == b.array().tobytes()
