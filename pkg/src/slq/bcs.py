"""Open strong-coupling BCS model: semiclassical spin dynamics, dissipative
generator of the intensive variables and the gap equation.

Intensive variables are the magnetisation ``S0`` and the pair correlation
``SpSm = S+ S-``.  The phase of ``S+`` is fixed real, ``S+ = S- = sqrt(SpSm)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import bisect

from .errors import NumericalAbort, ValidationError
from .kernels import SpectralDensity, gamma, onshell_gamma_pair, thermal_split_density
from .lindblad import GeneratorSpec, format_float
from .operators import HilbertSpec, OperatorMatrix, embed_site_operator, pauli

DEGENERACY_TOL = 1e-12
CONSTRAINT_TOL = 1e-6
ALPHAS = (0, 1, -1)


@dataclass(frozen=True)
class BCSParams:
    eps_tilde: float
    g: float
    beta: float
    S0: float
    SpSm: float
    density: SpectralDensity | None = None

    def __post_init__(self):
        if not self.g > 0:
            raise ValidationError(f"coupling g must be positive, got {self.g}")
        if not self.beta > 0:
            raise ValidationError(f"beta must be positive, got {self.beta}")
        if not -1 <= self.S0 <= 1:
            raise ValidationError(f"S0 must lie in [-1, 1], got {self.S0}")
        if self.SpSm < 0:
            raise ValidationError(f"SpSm must be non-negative, got {self.SpSm}")
        if self.S0**2 + 4 * self.SpSm > 1 + 1e-12:
            raise ValidationError("S0^2 + 4 SpSm exceeds 1")

    @property
    def omega(self) -> float:
        return self.g * math.sqrt(self.S0**2 + 4 * self.SpSm)

    @property
    def nu(self) -> float:
        return 2 * self.eps_tilde + self.g * self.S0

    @property
    def s_plus(self) -> float:
        return math.sqrt(self.SpSm)

    def resonance(self, alpha: int) -> float:
        """Reservoir energy at which ``nu - e + alpha omega`` vanishes."""
        return self.nu + alpha * self.omega


@dataclass(frozen=True)
class SpinState:
    sigma_plus: complex
    sigma_0: float

    def __post_init__(self):
        object.__setattr__(self, "sigma_plus", complex(self.sigma_plus))
        object.__setattr__(self, "sigma_0", float(self.sigma_0))
        if abs(self.sigma_0) > 1 or abs(self.sigma_plus) > 1:
            raise ValidationError("spin expectations out of range")
        if self.bloch_length > 1 + 1e-12:
            raise ValidationError("spin state outside the Bloch ball")

    @property
    def sigma_minus(self) -> complex:
        return self.sigma_plus.conjugate()

    @property
    def bloch_length(self) -> float:
        return self.sigma_0**2 + 4 * abs(self.sigma_plus) ** 2


class SpinTrajectory(NamedTuple):
    times: np.ndarray
    sigma_plus: np.ndarray
    sigma_0: np.ndarray
    drive_plus: np.ndarray
    drive_0: np.ndarray

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "Re<sigma_plus>", "Im<sigma_plus>", "<sigma_0>"])
            for t, sp, s0 in zip(self.times, self.sigma_plus, self.sigma_0):
                writer.writerow([format_float(v) for v in (t, sp.real, sp.imag, s0)])


def semiclassical_evolve(p: BCSParams, s0: SpinState, t_final: float, dt: float) -> SpinTrajectory:
    """RK4 for one spin driven by the frozen intensive field ``S+(t) = S+ e^{i nu t}``."""
    if not dt > 0:
        raise ValidationError("dt must be positive")
    steps = int(round(t_final / dt))
    if steps < 0 or abs(steps * dt - t_final) > 1e-9 * max(1.0, abs(t_final)):
        raise ValidationError("t_final must be a non-negative multiple of dt")
    eps, g, nu, sp_amp = p.eps_tilde, p.g, p.nu, p.s_plus

    def rhs(t, y):
        sp, sz = y
        drive = sp_amp * np.exp(1j * nu * t)
        dsp = 2j * eps * sp + 1j * g * drive * sz
        dsz = 2j * g * (sp * drive.conjugate() - sp.conjugate() * drive)
        return np.array([dsp, dsz])

    y = np.array([s0.sigma_plus, s0.sigma_0], dtype=complex)
    length0 = s0.bloch_length
    times = dt * np.arange(steps + 1)
    out = np.empty((steps + 1, 2), dtype=complex)
    out[0] = y
    for k in range(steps):
        t = times[k]
        k1 = rhs(t, y)
        k2 = rhs(t + dt / 2, y + dt / 2 * k1)
        k3 = rhs(t + dt / 2, y + dt / 2 * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        y[1] = y[1].real
        out[k + 1] = y
        length = y[1].real ** 2 + 4 * abs(y[0]) ** 2
        if abs(length - length0) > CONSTRAINT_TOL or length > 1 + CONSTRAINT_TOL:
            partial = SpinTrajectory(times[: k + 2], out[: k + 2, 0], out[: k + 2, 1].real,
                                     sp_amp * np.exp(1j * nu * times[: k + 2]),
                                     np.full(k + 2, p.S0))
            raise NumericalAbort(f"spin length drifted to {length:.6g} at t={times[k + 1]:g}", partial=partial)
    drive = sp_amp * np.exp(1j * nu * times)
    return SpinTrajectory(times, out[:, 0], out[:, 1].real, drive, np.full(steps + 1, p.S0))


def rho_coefficients(p: BCSParams):
    """Coefficients ``(c_plus, c_zero, c_minus)`` of ``rho_alpha`` in ``sigma+, sigma0, sigma-``.

    Returned as a dict keyed by ``alpha`` in ``(0, +1, -1)``.
    """
    g, s0, w = p.g, p.S0, p.omega
    sp = sm = p.s_plus
    if w == 0:
        raise ValidationError("degenerate frequency; use semiclassical_evolve")
    if (w - g * s0) ** 2 < DEGENERACY_TOL or (w + g * s0) ** 2 < DEGENERACY_TOL:
        raise ValidationError("resonant degeneracy: omega = g |S0| (SpSm = 0)")
    pre0 = g * g * sp / w**2
    pre = g * sp / w**2
    return {
        0: (pre0 * 2 * sm, pre0 * s0, pre0 * 2 * sp),
        1: (pre * g * sm * (w - g * s0) / (w + g * s0), pre * (w - g * s0) / 2, -pre * g * sp),
        -1: (pre * g * sm * (w + g * s0) / (w - g * s0), -pre * (w + g * s0) / 2, -pre * g * sp),
    }


def closed_form_sigma_plus(p: BCSParams, s0: SpinState, t):
    """Analytic ``<sigma+>(t)`` for the driven spin, three frequencies ``nu, nu +- omega``."""
    if p.omega == 0:
        raise ValidationError("degenerate frequency; use semiclassical_evolve")
    coeffs = rho_coefficients(p)
    t = np.asarray(t, dtype=float)
    total = np.zeros(t.shape, dtype=complex)
    for alpha, (cp, c0, cm) in coeffs.items():
        amplitude = cp * s0.sigma_plus + c0 * s0.sigma_0 + cm * s0.sigma_minus
        total = total + amplitude * np.exp(1j * (p.nu + alpha * p.omega) * t)
    return complex(total) if total.ndim == 0 else total


def onshell_rates(p: BCSParams):
    """Real parts of ``Gamma_alpha^(a)`` and ``Gamma_alpha^(b)`` for ``alpha = +1, -1``.

    Only positive resonance energies inside the reservoir support contribute.
    """
    if p.density is None:
        raise ValidationError("BCS parameters carry no reservoir density")
    rates = {}
    for alpha in (1, -1):
        energy = p.resonance(alpha)
        if energy <= 0:
            rates[alpha] = (0.0, 0.0)
        else:
            absorb, emit, _ = onshell_gamma_pair(p.density, p.beta, energy)
            rates[alpha] = (absorb, emit)
    return rates


def h_function(p: BCSParams) -> float:
    """Phase function whose zeros give the stationary intensive states.

    The numerators follow the published form: ``(omega - g)`` and
    ``(omega + g)`` multiply the ``(a)``/``(b)`` rates at ``+`` and the reverse
    at ``-``.
    """
    w, g, s0 = p.omega, p.g, p.S0
    den_plus = (w + g * s0) ** 2
    den_minus = (w - g * s0) ** 2
    if den_plus < DEGENERACY_TOL or den_minus < DEGENERACY_TOL:
        raise ValidationError("resonant degeneracy: (omega +- g S0)^2 below 1e-12")
    rates = onshell_rates(p)
    a_plus, b_plus = rates[1]
    a_minus, b_minus = rates[-1]
    return (a_plus * (w - g) / den_plus + a_minus * (w + g) / den_minus
            + b_plus * (w + g) / den_plus + b_minus * (w - g) / den_minus)


def intensive_generators(p: BCSParams):
    """Dissipative time derivatives ``(L S0, L SpSm)`` of the intensive variables."""
    w = p.omega
    if w == 0:
        raise ValidationError("omega = 0: intensive generators undefined")
    if p.SpSm == 0:
        return 0.0, 0.0
    h = h_function(p)
    g4 = p.g**4
    return (-8 * g4 * p.S0 * p.SpSm**2 / w**3 * h, -16 * g4 * p.SpSm**3 / w**3 * h)


class GapSolution(NamedTuple):
    omega: float
    superconducting: bool


def _gap_residual(omega, g, beta):
    # (beta omega - ln((g + omega)/(g - omega))) / omega, strictly decreasing on (0, g)
    if omega <= 0:
        return beta - 2.0 / g
    if omega >= g:
        return -math.inf
    return beta - 2.0 * math.atanh(omega / g) / omega


def _tanh_residual(omega, g, beta):
    # g tanh(beta omega / 2) / omega - 1, strictly decreasing on (0, inf)
    if omega <= 0:
        return g * beta / 2 - 1.0
    return g * math.tanh(beta * omega / 2) / omega - 1.0


def _check_gap_inputs(g, beta):
    if not g > 0 or not beta > 0:
        raise ValidationError("gap equation needs g > 0 and beta > 0")


def gap_solve_tanh(g: float, beta: float) -> GapSolution:
    """Root of ``g tanh(beta omega / 2) = omega`` on ``(0, g]``."""
    _check_gap_inputs(g, beta)
    if not beta * g > 2:
        return GapSolution(0.0, False)
    root = bisect(_tanh_residual, 0.0, g, args=(g, beta), xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=2000)
    return GapSolution(float(root), True)


def _root_uncertainty(omega, g, beta):
    # rounding in the residual moved to the root; only matters just above beta g = 2
    x = omega / g
    if not 0 < x < 1:
        return 0.0
    slope = 2 * (1 / (g * omega * (1 - x * x)) - math.atanh(x) / omega**2)
    return 16 * np.finfo(float).eps * (beta + 2 * math.atanh(x) / omega) / abs(slope)


def gap_solve(g: float, beta: float, agreement_tol: float = 1e-10) -> GapSolution:
    """Non-trivial root of ``e^{beta omega} = (g + omega)/(g - omega)`` in ``(0, g)``.

    A root exists iff ``beta g > 2``.  The equivalent ``tanh`` form is solved
    independently and the two roots must agree within ``agreement_tol``, or
    within the rounding-limited uncertainty of the root when that is larger
    (the root is ill-conditioned just above threshold).
    """
    _check_gap_inputs(g, beta)
    if not beta * g > 2:
        return GapSolution(0.0, False)
    root = bisect(_gap_residual, 0.0, g, args=(g, beta), xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=2000)
    other = gap_solve_tanh(g, beta).omega
    if abs(root - other) > max(agreement_tol, _root_uncertainty(root, g, beta)):
        raise NumericalAbort(f"gap roots disagree: {root!r} vs {other!r}")
    return GapSolution(float(root), True)


def critical_temperature(g: float, k: float = 1.0, rtol: float = 1e-8) -> float:
    """Critical temperature from the edge of the superconducting region in ``beta``.

    The edge is located by binary search on ``gap_solve`` and cross-checked
    against ``beta_c = 2 / g``.
    """
    if not g > 0 or not k > 0:
        raise ValidationError("critical temperature needs g > 0 and k > 0")
    lo, hi = 0.5 / g, 4.0 / g
    if gap_solve(g, lo).superconducting or not gap_solve(g, hi).superconducting:
        raise NumericalAbort("superconducting boundary not bracketed")
    while hi - lo > 1e-15 * hi:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if gap_solve(g, mid).superconducting:
            hi = mid
        else:
            lo = mid
    beta_c = hi
    if abs(beta_c - 2.0 / g) > rtol * (2.0 / g):
        raise NumericalAbort(f"boundary beta {beta_c!r} disagrees with 2/g")
    return 1.0 / (k * beta_c)


def bcs_gamma_table(p: BCSParams) -> dict:
    """Complex ``Gamma_alpha^(a)``, ``Gamma_alpha^(b)`` from the thermal split of the density.

    ``(a)`` carries the emission weight ``m J`` with phase ``e^{i tau (e - E)}``,
    ``(b)`` the absorption weight ``n J`` with the opposite phase, where
    ``E = nu + alpha omega``.
    """
    if p.density is None:
        raise ValidationError("BCS parameters carry no reservoir density")
    dens_m, dens_n = thermal_split_density(p.density, p.beta)
    table = {}
    for alpha in ALPHAS:
        energy = p.resonance(alpha)
        table[alpha] = (gamma(dens_m, energy, 1).value, gamma(dens_n, energy, -1).value)
    return table


def build_bcs_generator_smallN(p: BCSParams, n_sites: int, gammas: dict | None = None) -> GeneratorSpec:
    """Explicit generator on ``n_sites`` spins with frozen intensive coefficients.

    ``gammas`` maps ``alpha`` to ``(Gamma^(a), Gamma^(b))``; computed from the
    density when omitted.  Jump ``rho^dag`` carries ``Gamma^(a)`` and jump
    ``rho`` carries ``Gamma^(b)``.
    """
    if not 1 <= n_sites <= 8:
        raise ValidationError("n_sites must be between 1 and 8")
    if gammas is None:
        gammas = bcs_gamma_table(p)
    space = HilbertSpec.spins(n_sites)
    _, _, sz, sp, sm = pauli()
    coeffs = rho_coefficients(p)
    terms = []
    for site in range(n_sites):
        up = embed_site_operator(space, site, sp)
        z = embed_site_operator(space, site, sz)
        down = embed_site_operator(space, site, sm)
        for alpha in ALPHAS:
            rate_a, rate_b = (complex(v) for v in gammas[alpha])
            if rate_a == 0 and rate_b == 0:
                continue
            cp, c0, cm = coeffs[alpha]
            rho = up * cp + z * c0 + down * cm
            if rate_a != 0:
                terms.append((rho.dag(), rate_a))
            if rate_b != 0:
                terms.append((rho, rate_b))
    return GeneratorSpec(space, None, tuple(terms))


def intensive_operators(space: HilbertSpec):
    """``S0_N`` and ``S+_N S-_N`` on a spin chain."""
    _, _, sz, sp, sm = pauli()
    n = len(space)
    s0 = sum((embed_site_operator(space, j, sz) for j in range(1, n)), embed_site_operator(space, 0, sz)) * (1 / n)
    splus = sum((embed_site_operator(space, j, sp) for j in range(1, n)), embed_site_operator(space, 0, sp)) * (1 / n)
    return s0, splus @ splus.dag()


def gap_from_phase_function(eps_tilde: float, g: float, beta: float, density: SpectralDensity):
    """Gap frequency as the zero of ``h`` on the ``nu = 0`` branch, or ``None``.

    On this branch ``S0 = -2 eps_tilde / g`` and ``omega`` ranges over
    ``(g |S0|, g]``; ``SpSm`` follows from ``omega``.
    """
    s0 = -2 * eps_tilde / g
    if abs(s0) >= 1:
        raise ValidationError("nu = 0 branch needs |2 eps_tilde / g| < 1")

    def phase(omega):
        spsm = max(((omega / g) ** 2 - s0**2) / 4, 0.0)
        return h_function(BCSParams(eps_tilde, g, beta, s0, spsm, density))

    lo = g * abs(s0)
    lo = lo + 1e-5 * g
    hi = g
    f_lo, f_hi = phase(lo), phase(hi)
    if f_lo == 0 or f_hi == 0 or np.sign(f_lo) == np.sign(f_hi):
        return None
    return float(bisect(phase, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=2000))
