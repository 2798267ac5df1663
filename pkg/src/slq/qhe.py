"""Landau-level transport with a fermion-boson reservoir coupling.

Single-electron levels are labelled ``(n, p)``: Landau index and x-momentum
quantum number in a strip of length ``L_x`` with periodic x boundary.
The x-current response is tied to an arithmetic condition on

    ratio = 2 pi e E / (m omega^2 L_x)

namely whether ``ratio`` equals some quotient ``(n_b - n_b') / (p_b' - p_b)``
over the bounded index set (the fine tuning condition, FTC).

Reservoir kernels enter through a provider object with two methods:

* ``kernel(key, eps)``: the half-line correlation integral ``G_-`` for the
  index quadruple ``key = (a, b, a2, b2)`` evaluated at transition energy ``eps``
* ``lam(key, eps)``: ``i dG_-/d eps`` at ``eps``, the E-derivative density

``LambdaTable`` reads a tabulated ``lam``; ``TableKernels`` wraps a table with
a smooth model ``G`` around a reference configuration so that a brute-force
Fock-space generator can be differentiated in E.  ``FormFactorKernels``
builds everything from the Landau wavefunctions and a reservoir dispersion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from itertools import product
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import Polynomial
from numpy.polynomial.hermite import herm2poly

from .errors import ValidationError
from .kernels import SpectralDensity, gamma
from .operators import dimension_cap

ENERGY_TOL = 1e-10
FOCK_LEVEL_CAP = 12


@dataclass(frozen=True)
class PiMultiple:
    """A length given exactly as ``coefficient * pi``."""

    coefficient: Fraction

    def __post_init__(self):
        object.__setattr__(self, "coefficient", Fraction(self.coefficient))

    def __float__(self):
        return float(self.coefficient) * math.pi


def _is_exact(v):
    return isinstance(v, (int, Fraction)) and not isinstance(v, bool)


class LevelIndex(NamedTuple):
    n: int
    p: int


@dataclass(frozen=True)
class LandauConfig:
    E: float
    B: float
    L_x: float
    e: float = 1
    m: float = 1
    c: float = 1
    hbar: float = 1
    n_max: int = 0
    p_max: int = 1
    alpha_c: float = 1.0
    h_equals_hbar: bool = False
    ftc_tol: float = 1e-9
    higher_levels: bool = False

    def __post_init__(self):
        if not float(self.E) >= 0:
            raise ValidationError(f"E must be non-negative, got {self.E}")
        if not float(self.B) > 0:
            raise ValidationError(f"B must be positive, got {self.B}")
        if not float(self.L_x) > 0:
            raise ValidationError(f"L_x must be positive, got {self.L_x}")
        for name in ("e", "m", "c", "hbar"):
            if not float(getattr(self, name)) > 0:
                raise ValidationError(f"{name} must be positive")
        if self.n_max < 0 or self.p_max < 1:
            raise ValidationError("need n_max >= 0 and p_max >= 1")
        size = (self.n_max + 1) * (2 * self.p_max + 1)
        if size > dimension_cap():
            raise ValidationError(f"index set of size {size} exceeds cap {dimension_cap()}")

    @property
    def omega(self) -> float:
        return float(self.e) * float(self.B) / (float(self.m) * float(self.c))

    @property
    def lx(self) -> float:
        return float(self.L_x)

    @property
    def h(self) -> float:
        return float(self.hbar) * (1.0 if self.h_equals_hbar else 2 * math.pi)

    @property
    def magnetic_length(self) -> float:
        return math.sqrt(float(self.hbar) / (float(self.m) * self.omega))

    def exact_ratio(self):
        """The FTC ratio as a Fraction when every input allows it, else None."""
        if _is_exact(self.E) and self.E == 0:
            return Fraction(0)
        if not isinstance(self.L_x, PiMultiple):
            return None
        if not all(_is_exact(v) for v in (self.E, self.B, self.e, self.m, self.c)):
            return None
        omega = Fraction(self.e) * Fraction(self.B) / (Fraction(self.m) * Fraction(self.c))
        return 2 * Fraction(self.e) * Fraction(self.E) / (
            Fraction(self.m) * omega**2 * self.L_x.coefficient
        )

    @property
    def ratio(self):
        exact = self.exact_ratio()
        if exact is not None:
            return exact
        return 2 * math.pi * float(self.e) * float(self.E) / (
            float(self.m) * self.omega**2 * self.lx
        )

    def levels(self) -> list[LevelIndex]:
        return [
            LevelIndex(n, p)
            for n in range(self.n_max + 1)
            for p in range(-self.p_max, self.p_max + 1)
        ]

    def check_level(self, idx) -> LevelIndex:
        idx = LevelIndex(*idx)
        if not (0 <= idx.n <= self.n_max and -self.p_max <= idx.p <= self.p_max):
            raise ValidationError(
                f"level {tuple(idx)} outside n in [0, {self.n_max}], |p| <= {self.p_max}"
            )
        return idx

    def y0(self, p: int) -> float:
        """Guiding centre of the level with momentum number ``p``."""
        k = 2 * math.pi * p / self.lx
        m, w = float(self.m), self.omega
        return (float(self.hbar) * k * w - float(self.e) * float(self.E)) / (m * w * w)

    def with_field(self, E) -> "LandauConfig":
        return replace(self, E=E)


@dataclass(frozen=True)
class OccupationSet:
    """Ordered list of distinct occupied levels."""

    levels: tuple = ()

    def __post_init__(self):
        levels = tuple(LevelIndex(*lv) for lv in self.levels)
        if len(set(levels)) != len(levels):
            raise ValidationError("occupation set contains duplicate levels")
        object.__setattr__(self, "levels", levels)

    def __contains__(self, idx):
        return LevelIndex(*idx) in self.levels

    def chi(self, idx) -> int:
        return 1 if idx in self else 0

    def __len__(self):
        return len(self.levels)


def _check_occupation(cfg: LandauConfig, occupied: OccupationSet):
    for lv in occupied.levels:
        cfg.check_level(lv)
        if lv.n != 0 and not cfg.higher_levels:
            raise ValidationError(
                f"occupied level {tuple(lv)} is above the lowest Landau level; "
                "set higher_levels to allow it"
            )


def level_energy(cfg: LandauConfig, idx) -> float:
    idx = cfg.check_level(idx)
    hb, w = float(cfg.hbar), cfg.omega
    eE = float(cfg.e) * float(cfg.E)
    return hb * w * (idx.n + 0.5) - eE / (2 * float(cfg.m) * w * w) * (
        eE - 4 * hb * w * math.pi * idx.p / cfg.lx
    )


def _degenerate(cfg, e1, e2):
    return abs(e1 - e2) <= ENERGY_TOL * float(cfg.hbar) * cfg.omega


# Landau wavefunctions, y part -------------------------------------------------

def _hermite_norm(n):
    return 1.0 / math.sqrt(math.sqrt(math.pi) * 2.0**n * math.factorial(n))


def _shifted_hermite(n, shift):
    """Power-series coefficients of ``H_n(u + shift)`` in ``u``."""
    base = Polynomial(herm2poly([0] * n + [1]))
    return base(Polynomial([shift, 1.0])).coef


def _y_integral(n_a, n_b, xi_a, xi_b, kl=0.0):
    """``int phi_a(xi - xi_a) exp(i kl xi) phi_b(xi - xi_b) dxi`` in oscillator units.

    After centring, the Gaussian part is ``exp(-u^2 - d^2)`` and the rest is
    a polynomial in ``u``, so the integral reduces to Gaussian moments.
    """
    centre = 0.5 * (xi_a + xi_b)
    d = 0.5 * (xi_b - xi_a)
    coef = np.convolve(_shifted_hermite(n_a, d), _shifted_hermite(n_b, -d))
    kl = np.asarray(kl, dtype=float)
    half = 0.5j * kl
    # M_j = int exp(-u^2 + i kl u) u^j du,  M_{j+1} = (i kl M_j + j M_{j-1}) / 2
    prev = np.zeros_like(half)
    cur = math.sqrt(math.pi) * np.exp(-0.25 * kl * kl) + 0j
    total = coef[0] * cur
    for j in range(1, coef.size):
        prev, cur = cur, half * cur + 0.5 * (j - 1) * prev
        total = total + coef[j] * cur
    return _hermite_norm(n_a) * _hermite_norm(n_b) * math.exp(-d * d) * np.exp(1j * kl * centre) * total


def shifted_overlap(cfg: LandauConfig, gamma_: LevelIndex, mu: LevelIndex) -> float:
    """``int phi_{n_gamma}(y - y0_gamma) phi_{n_mu}(y - y0_mu) dy``."""
    ell = cfg.magnetic_length
    if gamma_.n == 0 and mu.n == 0:
        dy = (cfg.y0(mu.p) - cfg.y0(gamma_.p)) / ell
        return math.exp(-dy * dy / 4)
    val = _y_integral(gamma_.n, mu.n, cfg.y0(gamma_.p) / ell, cfg.y0(mu.p) / ell)
    return float(np.real(val))


class PositionElements(NamedTuple):
    X1: complex
    X2: float
    x_tilde: float


def position_matrix_elements(cfg: LandauConfig, gamma_, mu) -> PositionElements:
    """Matrix elements of the x and y position operators between two levels.

    Closed form in the lowest Landau level.  Higher levels use the exact
    Gauss-Hermite overlap and are only available with ``cfg.higher_levels``.
    """
    gamma_, mu = cfg.check_level(gamma_), cfg.check_level(mu)
    if (gamma_.n != 0 or mu.n != 0) and not cfg.higher_levels:
        raise ValidationError("matrix elements implemented for LLL only")
    dp = mu.p - gamma_.p
    if dp == 0:
        x1 = 0j
    else:
        sign = -1.0 if dp % 2 else 1.0
        x1 = sign * cfg.lx * shifted_overlap(cfg, gamma_, mu) / (2j * math.pi * dp)
    x2 = 0.0
    if dp == 0:
        if gamma_.n == mu.n:
            x2 = cfg.y0(gamma_.p)
        elif abs(gamma_.n - mu.n) == 1:
            x2 = cfg.magnetic_length * math.sqrt(max(gamma_.n, mu.n) / 2)
    return PositionElements(complex(x1), float(x2), float((1j * x1).real))


# form factors -------------------------------------------------------------------

def form_factor(cfg: LandauConfig, alpha, beta, kx, ky):
    """Overlap ``<psi_alpha| exp(i k.r) |psi_beta>`` for in-plane wave vectors."""
    alpha, beta = cfg.check_level(alpha), cfg.check_level(beta)
    kx = np.asarray(kx, dtype=float)
    ky = np.asarray(ky, dtype=float)
    q = kx + 2 * math.pi * (beta.p - alpha.p) / cfg.lx
    xpart = np.sinc(q * cfg.lx / (2 * math.pi))
    ell = cfg.magnetic_length
    ypart = _y_integral(alpha.n, beta.n, cfg.y0(alpha.p) / ell, cfg.y0(beta.p) / ell, ky * ell)
    return xpart * ypart


def _sphere_rule(n_theta, n_phi):
    mu, wmu = np.polynomial.legendre.leggauss(n_theta)
    phi = 2 * math.pi * np.arange(n_phi) / n_phi
    sin_t = np.sqrt(1 - mu**2)
    dirx = np.outer(sin_t, np.cos(phi)).ravel()
    diry = np.outer(sin_t, np.sin(phi)).ravel()
    weights = np.outer(wmu, np.full(n_phi, 2 * math.pi / n_phi)).ravel()
    return dirx, diry, weights


def form_factor_density(cfg: LandauConfig, alpha, beta, alpha2, beta2, dispersion, k_grid,
                        n_theta: int = 24, n_phi: int = 48) -> SpectralDensity:
    """``int d^3k g_ab(k) conj(g_a2b2(k)) delta(eps - w(|k|))`` on the grid ``w(k_grid)``.

    ``g = V / sqrt((2 pi)^3 2 w)``.  The delta function is resolved by the
    change of variables ``eps = w(k)``, which needs ``w`` strictly monotone.
    """
    k = np.asarray(k_grid, dtype=float)
    if k.ndim != 1 or k.size < 3 or np.any(k <= 0):
        raise ValidationError("k grid must hold at least 3 positive radii")
    if np.any(np.diff(k) <= 0):
        raise ValidationError("k grid must be strictly increasing")
    eps = np.asarray(dispersion(k), dtype=float)
    steps = np.diff(eps)
    if not (np.all(steps > 0) or np.all(steps < 0)):
        raise ValidationError("dispersion is not monotone on the radial grid")
    if np.any(eps <= 0):
        raise ValidationError("dispersion must be positive")
    slope = np.abs(np.gradient(eps, k, edge_order=2))

    dirx, diry, wang = _sphere_rule(n_theta, n_phi)
    kx = np.outer(k, dirx)
    ky = np.outer(k, diry)
    v1 = form_factor(cfg, alpha, beta, kx, ky)
    if (alpha, beta) == (alpha2, beta2):
        angular = (np.abs(v1) ** 2) @ wang + 0j
    else:
        angular = (v1 * np.conj(form_factor(cfg, alpha2, beta2, kx, ky))) @ wang
    weights = k**2 * angular / ((2 * math.pi) ** 3 * 2 * eps * slope)
    order = np.argsort(eps)
    return SpectralDensity(eps[order], weights[order])


# kernel providers -----------------------------------------------------------------

class LambdaTable:
    """Tabulated E-derivative densities keyed by level quadruples."""

    def __init__(self, entries: dict):
        self.entries = {}
        for key, value in entries.items():
            key = tuple(LevelIndex(*lv) for lv in key)
            if len(key) != 4:
                raise ValidationError("lambda table keys are quadruples of levels")
            self.entries[key] = complex(value)

    def lam(self, key, eps=None) -> complex:
        return self.entries.get(tuple(key), 0j)

    def supports(self, key) -> bool:
        return tuple(key) in self.entries

    def check_levels(self, cfg: LandauConfig):
        for key in self.entries:
            for lv in key:
                cfg.check_level(lv)


def load_lambda_table(path) -> LambdaTable:
    """Columns ``n_a p_a n_b p_b n_a' p_a' n_b' p_b' ReL ImL``, '#' comments."""
    table = np.loadtxt(path, comments="#", ndmin=2)
    if table.size == 0:
        return LambdaTable({})
    if table.shape[1] != 10:
        raise ValidationError(f"{path}: expected 10 columns, got {table.shape[1]}")
    ints = table[:, :8]
    if np.any(ints != np.round(ints)):
        raise ValidationError(f"{path}: level indices must be integers")
    entries = {}
    for row in table:
        q = [int(v) for v in row[:8]]
        key = tuple(LevelIndex(q[i], q[i + 1]) for i in range(0, 8, 2))
        if key in entries:
            raise ValidationError(f"{path}: duplicate entry {key}")
        entries[key] = complex(row[8], row[9])
    return LambdaTable(entries)


def save_lambda_table(path, table: LambdaTable):
    rows = [
        [*(v for lv in key for v in lv), val.real, val.imag]
        for key, val in sorted(table.entries.items())
    ]
    header = "n_a p_a n_b p_b n_a2 p_a2 n_b2 p_b2 ReLambda ImLambda"
    fmt = ["%d"] * 8 + ["%.16e"] * 2
    np.savetxt(path, np.array(rows, dtype=float).reshape(-1, 10), fmt=fmt, header=header)


def transition_energy(cfg: LandauConfig, alpha, beta) -> float:
    return level_energy(cfg, alpha) - level_energy(cfg, beta)


class TableKernels:
    """Smooth kernel model consistent with a Lambda table at ``reference``.

    ``G(eps) = L * (offset - i tanh(eps - eps_ref))`` so that ``i dG/deps``
    equals the tabulated ``L`` at the reference transition energy.
    """

    def __init__(self, table: LambdaTable, reference: LandauConfig, offset: float = 0.25):
        self.table = table
        self.offset = offset
        self._ref = {key: transition_energy(reference, key[0], key[1]) for key in table.entries}

    def lam(self, key, eps=None) -> complex:
        return self.table.lam(key)

    def supports(self, key) -> bool:
        return self.table.supports(key)

    def kernel(self, key, eps) -> complex:
        key = tuple(key)
        if key not in self._ref:
            return 0j
        return self.table.lam(key) * (self.offset - 1j * math.tanh(eps - self._ref[key]))


class FormFactorKernels:
    """Kernels from Landau form factors and an isotropic reservoir dispersion.

    ``lam`` differentiates under the integral: with ``J`` on ``[a, b]``,
    ``i dG/deps = i pi J' + PV int J'/(w - eps) + J(a)/(a - eps) - J(b)/(b - eps)``.
    Finite differences of the trapezoid principal value are noisy below the
    grid spacing, this form is not.
    """

    def __init__(self, cfg: LandauConfig, dispersion=None, k_grid=None, **quad):
        self.cfg = cfg
        self.dispersion = dispersion if dispersion is not None else (lambda k: k)
        if k_grid is None:
            k_grid = np.linspace(0.02, 8.0, 800) / cfg.magnetic_length
        self.k_grid = np.asarray(k_grid, dtype=float)
        self.quad = quad
        self._cache = {}

    def density(self, key) -> SpectralDensity:
        key = tuple(LevelIndex(*lv) for lv in key)
        if key not in self._cache:
            d = form_factor_density(self.cfg, *key, self.dispersion, self.k_grid, **self.quad)
            slope = SpectralDensity(d.grid, np.gradient(d.weights, d.grid, edge_order=2))
            self._cache[key] = (d, slope)
        return self._cache[key][0]

    def supports(self, key) -> bool:
        return True

    def kernel(self, key, eps) -> complex:
        return gamma(self.density(key), eps, 1).value

    def lam(self, key, eps) -> complex:
        d = self.density(key)
        slope = self._cache[tuple(LevelIndex(*lv) for lv in key)][1]
        a, b = d.support
        w = d.weights
        return 1j * gamma(slope, eps, 1).value + w[0] / (a - eps) - w[-1] / (b - eps)


# fine tuning condition ---------------------------------------------------------------

class FTCResult(NamedTuple):
    satisfied: bool
    ratio: object
    witnesses: list
    quotients: list


def quotient_set(cfg: LandauConfig) -> list:
    """All ``(n_b - n_b') / (p_b' - p_b)`` over the bounded index set, sorted."""
    dn = range(-cfg.n_max, cfg.n_max + 1)
    dp = [d for d in range(-2 * cfg.p_max, 2 * cfg.p_max + 1) if d != 0]
    return sorted({Fraction(a, b) for a in dn for b in dp})


def _matches(cfg, ratio, quotient):
    if isinstance(ratio, Fraction):
        return ratio == quotient
    return abs(float(ratio) - float(quotient)) <= cfg.ftc_tol


def ftc_check(cfg: LandauConfig) -> FTCResult:
    ratio = cfg.ratio
    quotients = quotient_set(cfg)
    satisfied = any(_matches(cfg, ratio, q) for q in quotients)
    witnesses = []
    if satisfied:
        levels = cfg.levels()
        for b, b2 in product(levels, levels):
            if b.p != b2.p and _matches(cfg, ratio, Fraction(b.n - b2.n, b2.p - b.p)):
                witnesses.append((b, b2))
    return FTCResult(satisfied, ratio, witnesses, quotients)


# transport sums --------------------------------------------------------------------

def theta_sums(cfg: LandauConfig, occupied: OccupationSet, kernels, ftc: FTCResult | None = None):
    """Return ``(Theta_x, Theta_y)``.

    Theta_x runs over all alpha and over the FTC witness pairs only.
    """
    _check_occupation(cfg, occupied)
    ftc = ftc if ftc is not None else ftc_check(cfg)
    levels = cfg.levels()
    chi = {lv: occupied.chi(lv) for lv in levels}
    energy = {lv: level_energy(cfg, lv) for lv in levels}

    theta_x = 0.0
    if len(occupied):
        for b, b2 in ftc.witnesses:
            xt = None
            for a in levels:
                gain = chi[a] * (1 - chi[b2])
                loss = chi[b2] * (1 - chi[a])
                if not gain and not loss:
                    continue
                if xt is None:
                    xt = position_matrix_elements(cfg, b, b2).x_tilde
                term = 0.0
                if gain:
                    term += 2 * kernels.lam((a, b, a, b2), energy[a] - energy[b]).real
                if loss:
                    term -= 2 * kernels.lam((b, a, b2, a), energy[b] - energy[a]).real
                theta_x += (b.p - a.p) * xt * term

    theta_y = 0.0
    for a in occupied.levels:
        for b in levels:
            if chi[b] or a.p == b.p:
                continue
            lam = kernels.lam((a, b, a, b), energy[a] - energy[b])
            theta_y += (a.p - b.p) ** 2 * lam.imag
    return theta_x, theta_y


@dataclass(frozen=True)
class TransportResult:
    sigma: np.ndarray
    rho: np.ndarray
    ftc_satisfied: bool
    ratio: object
    Theta_x: float
    Theta_y: float
    alpha_c: float
    j_x: float = field(default=0.0)
    j_y: float = field(default=0.0)


def response_coefficients(cfg: LandauConfig):
    """Prefactors turning ``(Theta_x, Theta_y)`` into ``(j_x, j_y)``."""
    e3 = float(cfg.e) ** 3
    scale = cfg.h / (float(cfg.m) * cfg.omega * cfg.lx)
    return cfg.alpha_c * e3 * scale, -2 * cfg.alpha_c * e3 * scale**2


def transport(cfg: LandauConfig, occupied: OccupationSet, kernels) -> TransportResult:
    ftc = ftc_check(cfg)
    theta_x, theta_y = theta_sums(cfg, occupied, kernels, ftc)
    cx, cy = response_coefficients(cfg)
    jx, jy = cx * theta_x, cy * theta_y
    sigma = np.array([[jy, jx], [-jx, jy]])
    den = jy * jy + jx * jx
    if den == 0:
        raise ValidationError("resistivity singular: sigma_yy^2 + sigma_xy^2 = 0")
    if ftc.satisfied:
        rxx, rxy = jy / den, jx / den
    else:
        rxx, rxy = 1.0 / jy, 0.0
    rho = np.array([[rxx, rxy], [-rxy, rxx]])
    return TransportResult(sigma, rho, ftc.satisfied, ftc.ratio, theta_x, theta_y,
                           cfg.alpha_c, jx, jy)


# generator contributions on Slater states ------------------------------------------------

def _position_table(cfg, levels, component):
    out = {}
    for g, m in product(levels, levels):
        if component == 1:
            if g.p != m.p:
                out[(g, m)] = position_matrix_elements(cfg, g, m).X1
        else:
            if g.p == m.p and abs(g.n - m.n) <= 1:
                val = position_matrix_elements(cfg, g, m).X2
                if val:
                    out[(g, m)] = val
    return out


def degenerate_pairs(cfg: LandauConfig) -> list:
    """Ordered pairs of distinct levels with equal energy."""
    levels = cfg.levels()
    energy = {lv: level_energy(cfg, lv) for lv in levels}
    return [(a, b) for a, b in product(levels, levels)
            if a != b and _degenerate(cfg, energy[a], energy[b])]


def l1_value(cfg: LandauConfig, occupied: OccupationSet, kernels, component: int = 1,
             pairs=None) -> float:
    """The occupation-difference part of ``<psi_I, L(X) psi_I>``.

    ``pairs`` fixes which (alpha, beta) count as degenerate; by default the
    degeneracies of ``cfg`` itself.
    """
    _check_occupation(cfg, occupied)
    if not len(occupied):
        return 0.0
    pairs = degenerate_pairs(cfg) if pairs is None else pairs
    levels = cfg.levels()
    pos = _position_table(cfg, levels, component)
    total = 0.0
    for a, b in pairs:
        diff = occupied.chi(a) - occupied.chi(b)
        x_ba = pos.get((b, a), 0)
        if not diff or not x_ba:
            continue
        eps = transition_energy(cfg, a, b)
        for a2 in occupied.levels:
            g = kernels.kernel((a, b, a2, a2), eps)
            total += diff * 2 * (x_ba * g).real
    return float(cfg.e) ** 2 * total


def l2_value(cfg: LandauConfig, occupied: OccupationSet, kernels, component: int = 2,
             diagonal_only: bool = False) -> float:
    """The particle-hole part of ``<psi_I, L(X) psi_I>``.

    With ``diagonal_only`` the (beta, beta') sum keeps only beta = beta'.
    """
    _check_occupation(cfg, occupied)
    levels = cfg.levels()
    energy = {lv: level_energy(cfg, lv) for lv in levels}
    chi = {lv: occupied.chi(lv) for lv in levels}
    pos = _position_table(cfg, levels, component)
    total = 0j
    for (b, b2), x in pos.items():
        if diagonal_only and b != b2:
            continue
        if not _degenerate(cfg, energy[b], energy[b2]):
            continue
        x_rev = np.conj(x)
        for a in levels:
            gain = chi[a] * (1 - chi[b2])
            loss = chi[b2] * (1 - chi[a])
            if not gain and not loss:
                continue
            g_ab = kernels.kernel((a, b, a, b2), energy[a] - energy[b]) if gain else 0j
            g_ba = kernels.kernel((b, a, b2, a), energy[b] - energy[a]) if loss else 0j
            total += x * (g_ab * gain - np.conj(g_ba) * loss)
            total -= x_rev * (g_ba * loss - np.conj(g_ab) * gain)
    return float(cfg.e) ** 2 * total.real


def _field_step(cfg: LandauConfig, step):
    if step is not None:
        return step
    # shifts transition energies by about 1e-5 hbar omega per unit of p
    return 1e-5 * float(cfg.m) * cfg.omega**2 * cfg.lx / (2 * math.pi * float(cfg.e))


def _e_derivative(cfg: LandauConfig, fn, step):
    E = float(cfg.E)
    h = _field_step(cfg, step)
    if E - h >= 0:
        return (fn(cfg.with_field(E + h)) - fn(cfg.with_field(E - h))) / (2 * h)
    f0, f1, f2 = (fn(cfg.with_field(E + k * h)) for k in range(3))
    return (-3 * f0 + 4 * f1 - f2) / (2 * h)


def e_independence_check(cfg: LandauConfig, occupied: OccupationSet, kernels=None,
                         step=None) -> float:
    """``|d/dE|`` of the occupation-difference part for the x position.

    Degeneracies are frozen at ``cfg`` while E moves, and kernels follow the
    moving transition energies.
    """
    _check_occupation(cfg, occupied)
    if not len(occupied):
        return 0.0
    pairs = degenerate_pairs(cfg)
    if kernels is None:
        kernels = FormFactorKernels(cfg)
    return abs(_e_derivative(cfg, lambda c: l1_value(c, occupied, kernels, 1, pairs), step))


# brute-force Fock space generator -----------------------------------------------------------

def _annihilators(n_modes):
    lower = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))
    z = sp.csr_matrix(np.diag([1.0, -1.0]))
    eye = sp.identity(2, format="csr")
    ops = []
    for j in range(n_modes):
        factors = [z] * j + [lower] + [eye] * (n_modes - j - 1)
        op = factors[0]
        for f in factors[1:]:
            op = sp.kron(op, f, format="csr")
        ops.append(op.astype(complex))
    return ops


def slater_vector(occupied: OccupationSet, levels, creators):
    vec = np.zeros(creators[0].shape[0], dtype=complex)
    vec[0] = 1.0
    where = {lv: i for i, lv in enumerate(levels)}
    for lv in reversed(occupied.levels):
        vec = creators[where[lv]] @ vec
    return vec


class FockGenerator:
    """The full quadratic-jump generator acting on operators of the Fock space.

    ``L(X) = e^2 sum [A_ab, X] Gam_ab + h.c.`` with ``A_ab = a_a^+ a_b`` and
    ``Gam_ab = sum G^{ab a'b'} A_b'a'`` over quadruples whose transition
    energies are equal at ``pattern_cfg``.
    """

    def __init__(self, pattern_cfg: LandauConfig, kernels):
        levels = pattern_cfg.levels()
        if len(levels) > FOCK_LEVEL_CAP:
            raise ValidationError(f"Fock oracle limited to {FOCK_LEVEL_CAP} levels")
        self.levels = levels
        self.kernels = kernels
        ann = _annihilators(len(levels))
        cre = [a.conj().T.tocsr() for a in ann]
        self.annihilators, self.creators = ann, cre
        n = len(levels)
        self.hops = {(i, j): (cre[i] @ ann[j]).tocsr() for i in range(n) for j in range(n)}
        energy = [level_energy(pattern_cfg, lv) for lv in levels]
        self.quads = []
        for i, j, k, l in product(range(n), repeat=4):
            key = (levels[i], levels[j], levels[k], levels[l])
            if not kernels.supports(key):
                continue
            if _degenerate(pattern_cfg, energy[i] - energy[j], energy[k] - energy[l]):
                self.quads.append((i, j, k, l))

    def observable(self, cfg: LandauConfig, component: int):
        idx = {lv: i for i, lv in enumerate(self.levels)}
        pos = _position_table(cfg, self.levels, component)
        dim = self.creators[0].shape[0]
        out = sp.csr_matrix((dim, dim), dtype=complex)
        for (g, m), x in pos.items():
            out = out + x * self.hops[(idx[g], idx[m])]
        return out

    def apply(self, cfg: LandauConfig, x):
        levels = self.levels
        energy = [level_energy(cfg, lv) for lv in levels]
        gams = {}
        for i, j, k, l in self.quads:
            key = (levels[i], levels[j], levels[k], levels[l])
            g = self.kernels.kernel(key, energy[i] - energy[j])
            if g == 0:
                continue
            term = g * self.hops[(l, k)]
            gams[(i, j)] = gams[(i, j)] + term if (i, j) in gams else term
        out = sp.csr_matrix(x.shape, dtype=complex)
        for (i, j), gam in gams.items():
            hop = self.hops[(i, j)]
            t = (hop @ x - x @ hop) @ gam
            out = out + t + t.conj().T
        return float(cfg.e) ** 2 * out

    def expectation(self, cfg: LandauConfig, occupied: OccupationSet, component: int) -> float:
        psi = slater_vector(occupied, self.levels, self.creators)
        lx = self.apply(cfg, self.observable(cfg, component))
        return float(np.vdot(psi, lx @ psi).real)


def fock_space_response(cfg: LandauConfig, occupied: OccupationSet, kernels, step=None):
    """``(j_x, j_y)`` by finite differences of the brute-force generator in E."""
    _check_occupation(cfg, occupied)
    gen = FockGenerator(cfg, kernels)
    jx = _e_derivative(cfg, lambda c: gen.expectation(c, occupied, 1), step)
    jy = _e_derivative(cfg, lambda c: gen.expectation(c, occupied, 2), step)
    return cfg.alpha_c * jx, cfg.alpha_c * jy
