import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slq.errors import ValidationError
from slq.kernels import (
    SpectralDensity,
    bose_factors,
    gamma,
    gamma_brute,
    load_density,
    onshell_gamma_pair,
    save_density,
    thermal_split_density,
)


def lorentzian_window(width=1.0, center=0.0):
    grid = center + np.arange(-10000, 10001) * width / 200
    weights = (width / np.pi) / ((grid - center) ** 2 + width**2)
    return SpectralDensity(grid, weights)


def truncated_lorentzian_pv(x, width, center, lo, hi):
    """Closed-form PV of int_lo^hi L(e)/(e - x) de for the Lorentzian, by partial fractions."""
    d = x - center
    amp = 1.0 / (d * d + width * width)

    def antiderivative(u):
        return amp * (np.log(abs(u - d)) - 0.5 * np.log(u * u + width * width) - (d / width) * np.arctan(u / width))

    return width / np.pi * (antiderivative(hi - center) - antiderivative(lo - center))


def random_smooth_density(rng):
    lo = rng.uniform(-2.0, 1.0)
    hi = lo + rng.uniform(2.0, 4.0)
    n = 2001
    grid = np.linspace(lo, hi, n)
    u = (grid - lo) / (hi - lo)
    bump = np.sin(np.pi * u) ** 2
    centers = rng.uniform(lo, hi, size=3)
    amps = rng.uniform(0.2, 1.0, size=3)
    widths = rng.uniform(0.2, 0.8, size=3)
    shape = sum(a * np.exp(-((grid - c) / w) ** 2) for a, c, w in zip(amps, centers, widths))
    return SpectralDensity(grid, bump * shape)


def off_grid_resonance(density, rng):
    h = density.grid[1] - density.grid[0]
    k = rng.integers(100, density.grid.size - 100)
    return density.grid[k] + rng.uniform(0.25, 0.75) * h, h


def test_symmetric_window_has_no_principal_part():
    density = SpectralDensity(np.linspace(-1.0, 1.0, 201), np.full(201, 0.3))
    value = gamma(density, 0.0).value
    assert value.real == pytest.approx(np.pi * 0.3, rel=1e-15)
    assert abs(value.imag) < 1e-14


def test_resonance_outside_support_is_real_zero():
    density = SpectralDensity(np.linspace(0.0, 1.0, 51), np.ones(51))
    value = gamma(density, 3.0).value
    assert value.real == 0.0
    # plain integral of 1/(e - 3) over [0, 1]; trapezoid of a smooth function
    assert value.imag == pytest.approx(-np.log(2.0 / 3.0), rel=1e-4)


def test_endpoint_singularity_and_empty_grid():
    density = SpectralDensity(np.linspace(0.0, 1.0, 11), np.ones(11))
    with pytest.raises(ValidationError, match="PV endpoint singularity"):
        gamma(density, 0.0)
    with pytest.raises(ValidationError):
        SpectralDensity([], [])


def test_zero_weight_endpoint_is_allowed():
    grid = np.linspace(0.0, 1.0, 11)
    density = SpectralDensity(grid, grid * (1 - grid))
    assert np.isfinite(gamma(density, 0.0).value)


def test_lorentzian_hilbert_transform():
    width, center = 1.0, 0.0
    density = lorentzian_window(width, center)
    x = center + width
    lo, hi = density.support
    for s in (1, -1):
        value = gamma(density, x, s).value
        assert abs(value.imag - (-s) * truncated_lorentzian_pv(x, width, center, lo, hi)) <= 1e-6
        assert value.real == pytest.approx(1 / (2 * width), rel=1e-14)
    # the infinite-line transform differs only by the analytic tail beyond +-50W
    infinite = (x - center) / ((x - center) ** 2 + width**2)
    tail_bound = 2 * width**2 / (3 * np.pi * (50 * width) ** 3) * 1.1
    assert abs(gamma(density, x).value.imag - infinite) < tail_bound


def test_brute_zero_density():
    density = SpectralDensity(np.linspace(0, 1, 11), np.zeros(11))
    assert gamma_brute(density, 0.33, 1, [1e-2, 5e-3, 2.5e-3]).value == 0


def test_brute_requires_decreasing_etas():
    density = SpectralDensity(np.linspace(0, 1, 11), np.ones(11))
    with pytest.raises(ValidationError):
        gamma_brute(density, 0.5, 1, [1e-3, 2e-3, 4e-3])
    with pytest.raises(ValidationError):
        gamma_brute(density, 0.5, 1, [1e-3, 5e-4])


def test_brute_constant_window():
    density = SpectralDensity(np.linspace(-1.0, 1.5, 251), np.full(251, 0.7))
    e0 = 0.0031
    etas = [2e-4, 1e-4, 5e-5, 2.5e-5]
    brute = gamma_brute(density, e0, 1, etas)
    assert brute.converged
    assert abs(brute.value - gamma(density, e0).value) <= 1e-4


def test_brute_lorentzian():
    density = lorentzian_window()
    rng = np.random.default_rng(5)
    e0, h = off_grid_resonance(density, rng)
    etas = h * np.array([0.05, 0.025, 0.0125, 0.00625])
    brute = gamma_brute(density, e0, -1, etas)
    assert brute.converged
    assert abs(brute.value - gamma(density, e0, -1).value) <= 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_brute_matches_random_densities(seed):
    rng = np.random.default_rng(seed)
    density = random_smooth_density(rng)
    e0, h = off_grid_resonance(density, rng)
    s = int(rng.choice([1, -1]))
    etas = h * np.array([0.05, 0.025, 0.0125, 0.00625])
    brute = gamma_brute(density, e0, s, etas)
    assert brute.converged
    assert abs(brute.value - gamma(density, e0, s).value) <= 1e-4


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-3, 6))
def test_orientation_and_positivity(seed, e0):
    density = random_smooth_density(np.random.default_rng(seed))
    lo, hi = density.support
    if e0 in (lo, hi):
        return
    plus, minus = gamma(density, e0, 1).value, gamma(density, e0, -1).value
    assert plus.real == minus.real
    assert plus.imag == -minus.imag
    assert plus.real >= 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-5, 5), st.floats(-5, 5))
def test_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, 3.0, 301)
    j1 = SpectralDensity(grid, rng.uniform(0, 1, 301) + 1j * rng.normal(size=301))
    j2 = SpectralDensity(grid, rng.uniform(0, 1, 301))
    e0 = rng.uniform(0.1, 2.9)
    combined = gamma(j1.scaled(a) + j2.scaled(b), e0).value
    separate = a * gamma(j1, e0).value + b * gamma(j2, e0).value
    assert abs(combined - separate) <= 1e-12


def test_thermal_split_limits():
    grid = np.linspace(1.0, 2.0, 11)
    density = SpectralDensity(grid, np.ones(11))
    jm, jn = thermal_split_density(density, 50.0)
    assert np.all(np.abs(jm.weights - 1) <= 1e-20)
    assert np.all(np.abs(jn.weights) <= 1e-20)
    m, n = bose_factors(np.log(2.0), 1.0)
    assert m == pytest.approx(2.0, rel=1e-15) and n == pytest.approx(1.0, rel=1e-15)
    jm, jn = thermal_split_density(density, 0.7)
    assert np.allclose(jm.weights - jn.weights, density.weights, rtol=0, atol=1e-14)


def test_thermal_split_rejects_nonpositive_energies():
    density = SpectralDensity(np.linspace(0.0, 1.0, 5), np.ones(5))
    with pytest.raises(ValidationError):
        thermal_split_density(density, 1.0)


def test_onshell_pair_values():
    omega = 1.0
    beta = np.log(3.0) / omega
    density = SpectralDensity(np.linspace(0.5, 1.5, 11), np.full(11, 1 / np.pi))
    absorb, emit, off = onshell_gamma_pair(density, beta, omega)
    assert not off
    assert absorb == pytest.approx(1.5, rel=1e-14)
    assert emit == pytest.approx(0.5, rel=1e-14)
    assert onshell_gamma_pair(density, 1.0, 3.0) == (0.0, 0.0, True)
    assert onshell_gamma_pair(density, 200.0, 1.0).emit < 1e-80


@pytest.mark.parametrize("beta", [0.3, 1.0, 4.0])
def test_detailed_balance_ratio(beta):
    density = SpectralDensity(np.linspace(0.2, 3.0, 281), np.linspace(0.2, 3.0, 281) ** 2)
    omega = density.grid[123]
    absorb, emit, _ = onshell_gamma_pair(density, beta, omega)
    assert abs(absorb / emit / np.exp(beta * omega) - 1) < 1e-10
    jm, jn = thermal_split_density(density, beta)
    ratio = gamma(jm, omega).real / gamma(jn, omega).real
    assert abs(ratio / np.exp(beta * omega) - 1) < 1e-10


def test_table_round_trip(tmp_path):
    density = SpectralDensity(np.linspace(0, 1, 7), np.arange(7) + 0.5j)
    path = tmp_path / "density.txt"
    save_density(path, density)
    loaded = load_density(path)
    assert np.array_equal(loaded.grid, density.grid)
    assert np.array_equal(loaded.weights, density.weights)
    two = tmp_path / "two.txt"
    two.write_text("# e J\n0 1\n1 2\n")
    assert np.array_equal(load_density(two).weights, [1, 2])
