import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sgflow.errors import InvalidArgumentError
from sgflow.spectral import (
    VorticityField,
    dealias,
    gaussian_random_field,
    kinetic_energy,
    laplacian,
    spectral_derivative,
    streamfunction,
    velocity_from_vorticity,
    wavenumber_grid,
)


def test_grid_wavenumbers_and_mask():
    g = wavenumber_grid(8, Lx=2 * np.pi)
    assert np.allclose(g.kx, [0, 1, 2, 3, -4, -3, -2, -1])
    assert g.dealias_mask.sum() == 5 * 5  # |j| <= 2
    g2 = wavenumber_grid(8, Lx=np.pi)
    assert np.allclose(g2.kx[:2], [0, 2])


@pytest.mark.parametrize("n", [3, 7, 2, 0])
def test_grid_rejects_bad_sizes(n):
    with pytest.raises(InvalidArgumentError):
        wavenumber_grid(n)


def test_derivatives_of_trig(grid32):
    X, Y = grid32.coords()
    f = np.sin(3 * X) * np.cos(2 * Y)
    assert np.allclose(spectral_derivative(f, grid32, "x"), 3 * np.cos(3 * X) * np.cos(2 * Y), atol=1e-12)
    assert np.allclose(spectral_derivative(f, grid32, "y"), -2 * np.sin(3 * X) * np.sin(2 * Y), atol=1e-12)
    assert np.allclose(laplacian(f, grid32), -13 * f, atol=1e-11)
    with pytest.raises(InvalidArgumentError):
        spectral_derivative(f, grid32, "z")


def test_streamfunction_inverts_laplacian(grid32, rng):
    w = gaussian_random_field(grid32, seed=rng)
    psi = streamfunction(w, grid32)
    assert np.allclose(-laplacian(psi, grid32), w - w.mean(), atol=1e-10)
    assert abs(psi.mean()) < 1e-12


def test_velocity_is_divergence_free_and_matches_tgv(grid32):
    X, Y = grid32.coords()
    w = -2 * np.sin(X) * np.sin(Y)
    u, v = velocity_from_vorticity(w, grid32)
    assert np.allclose(u, -np.sin(X) * np.cos(Y), atol=1e-12)
    assert np.allclose(v, np.cos(X) * np.sin(Y), atol=1e-12)
    div = spectral_derivative(u, grid32, "x") + spectral_derivative(v, grid32, "y")
    assert np.max(np.abs(div)) < 1e-12
    assert kinetic_energy(w, grid32) == pytest.approx(0.25, rel=1e-12)


def test_dealias_removes_upper_third(grid32):
    X, Y = grid32.coords()
    low = np.cos(10 * X)
    high = np.cos(11 * X)
    assert np.allclose(dealias(low, grid32), low, atol=1e-12)
    assert np.max(np.abs(dealias(high, grid32))) < 1e-12


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_derivative_adjoint_property(seed):
    g = wavenumber_grid(16)
    r = np.random.default_rng(seed)
    a, b = r.standard_normal((2, 16, 16))
    for axis in "xy":
        lhs = np.sum(spectral_derivative(a, g, axis) * b)
        rhs = -np.sum(a * spectral_derivative(b, g, axis))
        assert lhs == pytest.approx(rhs, abs=1e-9)


def test_random_field_statistics(grid32):
    fields = np.stack([gaussian_random_field(grid32, 2.0, seed=s) for s in range(200)])
    assert np.allclose(fields.mean(axis=(1, 2)), 0, atol=1e-12)
    assert fields.var() == pytest.approx(4.0, rel=0.1)
    assert np.array_equal(gaussian_random_field(grid32, seed=5), gaussian_random_field(grid32, seed=5))
    assert not np.any(gaussian_random_field(grid32, 0.0, seed=5))


def test_vorticity_field_validation():
    with pytest.raises(InvalidArgumentError):
        VorticityField(np.zeros((4, 6)), 1, 1)
    with pytest.raises(InvalidArgumentError):
        VorticityField(np.full((4, 4), np.nan), 1, 1)
    assert VorticityField(np.zeros((4, 4)), 1, 1).n == 4


def test_shape_mismatch_raises(grid16):
    with pytest.raises(InvalidArgumentError):
        laplacian(np.zeros((8, 8)), grid16)


def test_thread_cap_env(monkeypatch):
    from sgflow.spectral import fft_workers

    monkeypatch.setenv("SGDIFF_THREADS", "1")
    assert fft_workers() == 1
