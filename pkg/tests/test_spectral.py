import numpy as np
import pytest

from mfgkit import (
    DensityField,
    GridError,
    PositivityError,
    ScalarField,
    SpaceTimeGrid,
    TorusGrid,
    VectorField,
    load_field,
    save_field,
    spectral,
)


@pytest.fixture(scope="module")
def g1():
    return TorusGrid((32,))


@pytest.fixture(scope="module")
def g2():
    return TorusGrid((16, 16))


def test_grid_rejects_odd_or_tiny_axes():
    with pytest.raises(GridError):
        TorusGrid((15,))
    with pytest.raises(GridError):
        TorusGrid((2,))
    with pytest.raises(GridError):
        TorusGrid((16, 7))


def test_wavenumbers_are_integers(g1):
    k = g1.wavenumbers[0]
    assert k.dtype.kind == "i"
    assert set(k) == set(range(-16, 16))


def test_gradient_of_sine_mode(g1):
    x = np.arange(32) / 32
    grad = spectral.gradient(g1, np.sin(2 * np.pi * x))
    assert grad.shape == (1, 32)
    assert abs(grad[0, 0] - 2 * np.pi) < 1e-12
    assert np.max(np.abs(grad[0] - 2 * np.pi * np.cos(2 * np.pi * x))) < 1e-12


def test_first_derivative_kills_nyquist(g1):
    saw = (-1.0) ** np.arange(32)
    assert np.max(np.abs(spectral.gradient(g1, saw))) == 0.0
    # the Laplacian keeps the full symbol on the same mode
    assert np.max(np.abs(spectral.laplacian(g1, saw) + (16 * 2 * np.pi) ** 2 * saw)) < 1e-9


def test_laplacian_eigenvalues(g1, g2):
    x = np.arange(32) / 32
    f = np.cos(2 * np.pi * x)
    assert np.max(np.abs(spectral.laplacian(g1, f) + 4 * np.pi**2 * f)) < 1e-11
    xx = np.arange(16) / 16
    X, Y = np.meshgrid(xx, xx, indexing="ij")
    f2 = np.cos(2 * np.pi * X) * np.cos(2 * np.pi * Y)
    assert np.max(np.abs(spectral.laplacian(g2, f2) + 8 * np.pi**2 * f2)) < 1e-11


def test_integrate_and_mean(g2):
    assert spectral.integrate(g2, np.ones((16, 16))) == 1.0
    rng = np.random.default_rng(0)
    f = spectral.random_band_limited(g2, rng)
    assert abs(spectral.mean(g2, f)) < 1e-14


def test_gradient_divergence_adjointness(g2):
    rng = np.random.default_rng(1)
    f = spectral.random_band_limited(g2, rng)
    w = np.stack([spectral.random_band_limited(g2, rng) for _ in range(2)])
    lhs = spectral.integrate(g2, np.sum(spectral.gradient(g2, f) * w, axis=0))
    rhs = -spectral.integrate(g2, f * spectral.divergence(g2, w))
    assert abs(lhs - rhs) < 1e-12


def test_laplacian_self_adjoint_and_divgrad_consistent(g2):
    rng = np.random.default_rng(2)
    f = spectral.random_band_limited(g2, rng)
    h = spectral.random_band_limited(g2, rng)
    lhs = spectral.integrate(g2, f * spectral.laplacian(g2, h))
    rhs = spectral.integrate(g2, h * spectral.laplacian(g2, f))
    assert abs(lhs - rhs) < 1e-12
    # div(grad f) agrees with the dedicated symbol on band-limited data
    gap = spectral.div_grad(g2, f) - spectral.divergence(g2, spectral.gradient(g2, f))
    assert np.max(np.abs(gap)) < 1e-11


def test_parseval(g1):
    rng = np.random.default_rng(3)
    f = spectral.random_band_limited(g1, rng)
    coeffs = np.fft.fftn(f) / f.size
    assert abs(spectral.integrate(g1, f * f) - np.sum(np.abs(coeffs) ** 2)) < 1e-12


def test_project_div_free(g2):
    rng = np.random.default_rng(4)
    w = np.stack([spectral.random_band_limited(g2, rng) for _ in range(2)])
    pw = spectral.project_div_free(g2, w)
    assert np.max(np.abs(spectral.divergence(g2, pw))) < 1e-11
    assert np.max(np.abs(spectral.project_div_free(g2, pw) - pw)) < 1e-12
    # pure gradients are annihilated, constants pass through
    gradf = spectral.gradient(g2, spectral.random_band_limited(g2, rng))
    assert np.max(np.abs(spectral.project_div_free(g2, gradf))) < 1e-11
    const = np.stack([np.full((16, 16), 0.7), np.full((16, 16), -0.2)])
    assert np.max(np.abs(spectral.project_div_free(g2, const) - const)) < 1e-14
    # projection is orthogonal: <pw, gradf> = 0
    ip = spectral.integrate(g2, np.sum(pw * gradf, axis=0))
    assert abs(ip) < 1e-12


def test_solve_poisson(g2):
    rng = np.random.default_rng(5)
    rhs = spectral.random_band_limited(g2, rng)
    u = spectral.solve_poisson(g2, rhs)
    assert abs(spectral.mean(g2, u)) < 1e-14
    assert np.max(np.abs(spectral.laplacian(g2, u) - rhs)) < 1e-11


def test_time_derivative_periodic():
    g = TorusGrid((8,))
    st = SpaceTimeGrid(g, 16, 1.0, periodic_time=True)
    t = np.arange(16)[:, None] / 16
    arr = np.cos(2 * np.pi * t) * np.ones((1, 8))
    d = spectral.time_derivative_periodic(st, arr)
    assert np.max(np.abs(d + 2 * np.pi * np.sin(2 * np.pi * t))) < 1e-11
    saw = ((-1.0) ** np.arange(16))[:, None] * np.ones((1, 8))
    assert np.max(np.abs(spectral.time_derivative_periodic(st, saw))) == 0.0


def test_time_derivative_scales_with_horizon():
    g = TorusGrid((8,))
    st = SpaceTimeGrid(g, 16, 0.5, periodic_time=True)
    t = np.arange(16)[:, None] / 16  # unit cylinder coordinate
    arr = np.sin(2 * np.pi * t) * np.ones((1, 8))
    d = spectral.time_derivative_periodic(st, arr)
    assert np.max(np.abs(d - (2 * np.pi / 0.5) * np.cos(2 * np.pi * t))) < 1e-10


def test_random_band_limited_is_banded_and_seeded(g1):
    a = spectral.random_band_limited(g1, np.random.default_rng(7), kmax=3)
    b = spectral.random_band_limited(g1, np.random.default_rng(7), kmax=3)
    assert np.array_equal(a, b)
    coeffs = np.fft.fftn(a)
    k = g1.wavenumbers[0]
    assert np.max(np.abs(coeffs[np.abs(k) > 3])) < 1e-12
    assert abs(a.mean()) < 1e-14


def test_field_roundtrip(tmp_path, g2):
    rng = np.random.default_rng(8)
    scalar = ScalarField(g2, spectral.random_band_limited(g2, rng))
    vec = VectorField(g2, np.stack([spectral.random_band_limited(g2, rng) for _ in range(2)]))
    dens_vals = 1.0 + spectral.random_band_limited(g2, rng, amplitude=0.3)
    dens_vals /= dens_vals.mean()
    dens = DensityField(g2, dens_vals)
    for name, fld in (("s", scalar), ("v", vec), ("d", dens)):
        path = tmp_path / f"{name}.field"
        save_field(path, fld)
        loaded = load_field(path)
        assert type(loaded) is type(fld)
        assert loaded.grid.shape == g2.shape
        assert np.array_equal(loaded.values, fld.values)


def test_field_roundtrip_space_time(tmp_path):
    g = TorusGrid((8,))
    st = SpaceTimeGrid(g, 4, 0.25)
    vals = np.linspace(0.0, 1.0, 5 * 8).reshape(5, 8)
    path = tmp_path / "u.field"
    save_field(path, ScalarField(st, vals))
    loaded = load_field(path)
    assert loaded.grid.n_t == 4
    assert loaded.grid.horizon == 0.25
    assert np.array_equal(loaded.values, vals)


def test_density_field_validation(g1):
    with pytest.raises(PositivityError):
        DensityField(g1, -np.ones(32))
    with pytest.raises(PositivityError):
        DensityField(g1, np.full(32, 2.0))
