import csv
import math
import time

import numpy as np
import pytest

from slq.bcs import (
    BCSParams,
    SpinState,
    bcs_gamma_table,
    build_bcs_generator_smallN,
    closed_form_sigma_plus,
    critical_temperature,
    gap_from_phase_function,
    gap_solve,
    gap_solve_tanh,
    h_function,
    intensive_generators,
    intensive_operators,
    onshell_rates,
    semiclassical_evolve,
)
from slq.errors import ValidationError
from slq.kernels import SpectralDensity, bose_factors
from slq.lindblad import apply_heisenberg, choi_min_eigenvalue
from slq.operators import identity


def smooth_density(scale=1.0):
    grid = np.linspace(0.05, 5.0, 2001)
    return SpectralDensity(grid, scale * np.exp(-grid / 2))


def random_case(rng):
    s0 = rng.uniform(-0.6, 0.6)
    spsm = rng.uniform(0.02, (1 - s0**2) / 4)
    p = BCSParams(eps_tilde=rng.uniform(-1, 1), g=rng.uniform(0.3, 2.0), beta=1.0, S0=s0, SpSm=spsm)
    theta = rng.uniform(0, 2 * np.pi)
    z = rng.uniform(-0.9, 0.9)
    r = math.sqrt(1 - z * z) / 2 * rng.uniform(0.2, 1.0)
    return p, SpinState(r * np.exp(1j * theta), z)


def test_params_validation():
    with pytest.raises(ValidationError):
        BCSParams(0.1, 1.0, 1.0, 0.8, 0.2)
    with pytest.raises(ValidationError):
        BCSParams(0.1, -1.0, 1.0, 0.1, 0.1)
    p = BCSParams(0.1, 2.0, 1.0, 0.6, 0.16)
    assert p.omega == pytest.approx(2.0, rel=1e-15)
    assert p.nu == pytest.approx(1.4, rel=1e-15)


def test_decoupled_rotation():
    p = BCSParams(eps_tilde=0.7, g=1e-300, beta=1.0, S0=0.2, SpSm=0.1)
    state = SpinState(0.3 + 0.1j, 0.4)
    traj = semiclassical_evolve(p, state, 2.0, 1e-3)
    assert abs(traj.sigma_plus[-1] - np.exp(2j * 0.7 * 2.0) * state.sigma_plus) < 1e-12
    assert traj.sigma_0[-1] == pytest.approx(0.4, abs=1e-15)
    undriven = semiclassical_evolve(BCSParams(0.7, 1.0, 1.0, 0.2, 0.0), state, 2.0, 1e-3)
    assert np.allclose(undriven.sigma_0, 0.4, atol=1e-15, rtol=0)
    assert np.allclose(np.abs(undriven.sigma_plus), abs(state.sigma_plus), atol=1e-12, rtol=0)


def test_closed_form_initial_value_and_guard():
    rng = np.random.default_rng(0)
    for _ in range(20):
        p, state = random_case(rng)
        assert abs(closed_form_sigma_plus(p, state, 0.0) - state.sigma_plus) < 1e-14
    with pytest.raises(ValidationError, match="degenerate frequency"):
        closed_form_sigma_plus(BCSParams(0.1, 1.0, 1.0, 0.0, 0.0), SpinState(0.1, 0.2), 1.0)


@pytest.mark.parametrize("seed", range(10))
def test_closed_form_matches_rk4(seed):
    p, state = random_case(np.random.default_rng(100 + seed))
    traj = semiclassical_evolve(p, state, 10.0, 2e-3)
    assert abs(traj.sigma_plus[-1] - closed_form_sigma_plus(p, state, 10.0)) < 1e-6
    assert np.max(np.abs(traj.drive_0 - p.S0)) <= 1e-12
    assert np.max(np.abs(np.abs(traj.drive_plus) - math.sqrt(p.SpSm))) <= 1e-12


def test_closed_form_solves_the_equations_of_motion():
    p, state = random_case(np.random.default_rng(7))
    times = np.linspace(0.5, 10, 100)
    sp_amp = math.sqrt(p.SpSm)
    from slq.bcs import rho_coefficients

    coeffs = rho_coefficients(p)

    def sigma_plus_and_rate(t):
        value = 0j
        rate = 0j
        for alpha, (cp, c0, cm) in coeffs.items():
            amp = cp * state.sigma_plus + c0 * state.sigma_0 + cm * state.sigma_minus
            freq = p.nu + alpha * p.omega
            value += amp * np.exp(1j * freq * t)
            rate += 1j * freq * amp * np.exp(1j * freq * t)
        return value, rate

    def sigma_zero(t):
        value, rate = sigma_plus_and_rate(t)
        return (rate - 2j * p.eps_tilde * value) / (1j * p.g * sp_amp * np.exp(1j * p.nu * t))

    step = 1e-4
    for t in times:
        z = sigma_zero(t)
        assert abs(z.imag) < 1e-10
        dz = (sigma_zero(t + step) - sigma_zero(t - step)) / (2 * step)
        value, _ = sigma_plus_and_rate(t)
        drive = sp_amp * np.exp(1j * p.nu * t)
        rhs = 2j * p.g * (value * drive.conjugate() - value.conjugate() * drive)
        assert abs(dz - rhs) < 1e-6


def test_trajectory_csv(tmp_path):
    p, state = random_case(np.random.default_rng(1))
    path = tmp_path / "traj.csv"
    semiclassical_evolve(p, state, 0.01, 0.005).write_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "Re<sigma_plus>", "Im<sigma_plus>", "<sigma_0>"]
    assert len(rows) == 4


def eq35_oracle(p):
    """Independent rewrite of the phase function straight from its definition."""
    total = 0.0
    w, g, x = p.omega, p.g, p.S0
    for alpha, num_a, num_b, den in ((1, w - g, w + g, (w + g * x) ** 2), (-1, w + g, w - g, (w - g * x) ** 2)):
        e = p.nu + alpha * w
        lo, hi = p.density.support
        if e <= 0 or not lo <= e <= hi:
            continue
        weight = np.interp(e, p.density.grid, p.density.weights.real)
        m = 1 / (1 - math.exp(-p.beta * e))
        n = math.exp(-p.beta * e) / (1 - math.exp(-p.beta * e))
        total += math.pi * weight * (m * num_a + n * num_b) / den
    return total


def test_h_function_against_oracle_and_branches():
    grid = np.linspace(0.01, 6.0, 600)
    box = SpectralDensity(grid, np.full(grid.size, 0.2))
    rng = np.random.default_rng(3)
    for _ in range(10):
        s0 = rng.uniform(-0.5, 0.5)
        p = BCSParams(rng.uniform(0, 1.5), rng.uniform(0.5, 2), rng.uniform(0.5, 3), s0,
                      rng.uniform(0.05, (1 - s0 * s0) / 4), box)
        assert h_function(p) == pytest.approx(eq35_oracle(p), rel=1e-13, abs=1e-15)
    # nu = 0 branch: the minus resonance sits at -omega, off shell
    p = BCSParams(0.2, 1.0, 3.0, -0.4, 0.1, box)
    assert p.nu == pytest.approx(0.0, abs=1e-15)
    assert onshell_rates(p)[-1] == (0.0, 0.0)
    off = BCSParams(0.2, 1.0, 3.0, -0.4, 0.1, SpectralDensity([10.0, 11.0], [1.0, 1.0]))
    assert h_function(off) == 0.0
    with pytest.raises(ValidationError, match="resonant degeneracy"):
        h_function(BCSParams(0.2, 1.0, 3.0, 0.5, 0.0, box))


def test_intensive_generators():
    density = smooth_density()
    p = BCSParams(0.3, 1.0, 2.0, 0.4, 0.0, density)
    assert intensive_generators(p) == (0.0, 0.0)
    p = BCSParams(0.3, 1.0, 2.0, 0.4, 0.15, density)
    h = h_function(p)
    ls0, lr = intensive_generators(p)
    assert ls0 == pytest.approx(-8 * p.S0 * p.SpSm**2 / p.omega**3 * h, rel=1e-14)
    assert lr == pytest.approx(-16 * p.SpSm**3 / p.omega**3 * h, rel=1e-14)
    if h > 0:
        assert ls0 < 0


def test_gap_examples():
    assert gap_solve(1.0, 2.0) == (0.0, False)
    assert gap_solve(1.0, 1.5) == (0.0, False)
    lo, hi = 1e-9, 1 - 1e-12
    f = lambda w: math.exp(4 * w) * (1 - w) - (1 + w)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if f(mid) > 0 else (lo, mid)
    omega, sc = gap_solve(1.0, 4.0)
    assert sc and abs(omega - 0.5 * (lo + hi)) < 1e-12


def test_gap_equivalence_grid():
    start = time.perf_counter()
    worst = 0.0
    for g in (0.5, 1.0, 2.0):
        for beta in np.linspace(2.1 / g, 100 / g, 50):
            omega, sc = gap_solve(g, beta)
            assert sc
            worst = max(worst, abs(omega - gap_solve_tanh(g, beta).omega))
            assert abs(math.exp(beta * omega) * (g - omega) - (g + omega)) <= 1e-9 * math.exp(beta * omega) * g
            assert abs(g * math.tanh(beta * omega / 2) - omega) < 1e-10
    assert worst < 1e-10
    assert time.perf_counter() - start < 1.0


@pytest.mark.parametrize("g", [0.5, 1.0, 2.0])
def test_superconducting_iff_beta_g_above_two(g):
    for beta_g in np.linspace(1.5, 2.5, 41):
        assert gap_solve(g, beta_g / g).superconducting == (beta_g > 2)
    assert critical_temperature(g) == pytest.approx(g / 2, rel=1e-8)


def test_critical_temperature_scaling():
    assert critical_temperature(1.0) == pytest.approx(0.5, rel=1e-8)
    assert critical_temperature(2.0) == pytest.approx(2 * critical_temperature(1.0), rel=1e-12)
    k = 1.380649e-23
    g_joules = 2.0e-22
    assert critical_temperature(g_joules, k) == pytest.approx(g_joules / (2 * k), rel=1e-8)


def test_phase_function_zero_is_the_gap():
    density = smooth_density()
    eps_tilde, g, beta = 0.05, 1.0, 4.0
    omega, _ = gap_solve(g, beta)
    s0 = -2 * eps_tilde / g
    p = BCSParams(eps_tilde, g, beta, s0, ((omega / g) ** 2 - s0**2) / 4, density)
    assert abs(h_function(p)) < 1e-9
    root = gap_from_phase_function(eps_tilde, g, beta, density)
    assert abs(root - omega) < 1e-10
    scaled = gap_from_phase_function(eps_tilde, g, beta, smooth_density(37.5))
    assert abs(scaled - root) <= 1e-12


def test_small_generator_structure():
    density = smooth_density()
    p = BCSParams(0.4, 1.0, 2.0, 0.3, 0.2, density)
    gen = build_bcs_generator_smallN(p, 3)
    assert apply_heisenberg(gen, identity(gen.space)).norm() < 1e-12
    assert choi_min_eigenvalue(gen, 1e-8) >= -1e-10
    with pytest.raises(ValidationError):
        build_bcs_generator_smallN(p, 9)


def test_nu_zero_branch_generator_only_uses_plus_terms():
    p = BCSParams(0.2, 1.0, 3.0, -0.4, 0.1, smooth_density())
    table = {0: (0.0, 0.0), 1: (0.7 + 0.1j, 0.2), -1: (0.0, 0.0)}
    gen = build_bcs_generator_smallN(p, 1, table)
    assert len(gen.terms) == 2


def product_state(p, n_sites):
    site = np.array([[1 + p.S0, 2 * math.sqrt(p.SpSm)], [2 * math.sqrt(p.SpSm), 1 - p.S0]]) / 2
    rho = site
    for _ in range(n_sites - 1):
        rho = np.kron(rho, site)
    return rho


def test_small_n_generator_reproduces_intensive_equations():
    # on-shell real parts make the discrete generator and the closed forms use the same weights
    p = BCSParams(0.4, 1.0, 2.0, 0.3, 0.2, smooth_density())
    full = bcs_gamma_table(p)
    rates = onshell_rates(p)
    table = {0: full[0]}
    for alpha in (1, -1):
        table[alpha] = (rates[alpha][0] + 1j * full[alpha][0].imag, rates[alpha][1] + 1j * full[alpha][1].imag)
    expected_s0, expected_r = intensive_generators(p)
    r_values = []
    for n in (1, 2, 3):
        gen = build_bcs_generator_smallN(p, n, table)
        s0_op, r_op = intensive_operators(gen.space)
        rho = product_state(p, n)
        ds0 = np.trace(rho @ apply_heisenberg(gen, s0_op).entries).real
        assert abs(ds0 - expected_s0) < 1e-12
        r_values.append(np.trace(rho @ apply_heisenberg(gen, r_op).entries).real)
    # pair-correlation rate is exactly linear in 1/N on the product state
    assert abs((2 * r_values[1] - r_values[0]) - expected_r) < 1e-12
    assert abs((3 * r_values[2] - r_values[0]) / 2 - expected_r) < 1e-12
