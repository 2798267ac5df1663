"""Matter-radiation laser generators and their equivalences.

Three generators are built on explicit matrices:

* the phenomenological two-level-atom laser generator (``as``): per-site
  relaxation with rates ``gamma1``, ``gamma2`` and pump parameter ``eta``,
  damped cavity modes and a dipolar coupling;
* the weak-coupling generator of spin atoms coupled to two reservoirs per
  site (``hl``), described by complex damping coefficients;
* the weak-coupling generator of two-mode fermion sites (``dhl``).

Atoms sit at sites ``r = -N..N`` and come first in the tensor product,
followed by the cavity modes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .lindblad import GeneratorSpec, superoperator
from .operators import (
    HilbertSpec,
    OperatorMatrix,
    boson_ladder,
    embed_site_operator,
    fermion_site_pair,
    pauli,
)

RESONANCE_TOL = 1e-12


def _tuple(values, n, name, kind=float):
    if np.isscalar(values):
        values = [values] * n
    values = tuple(kind(v) for v in values)
    if len(values) != n:
        raise ValidationError(f"{name} needs {n} entries, got {len(values)}")
    return values


def _check_sizes(N, n_modes, fock_cutoff):
    if N < 0:
        raise ValidationError("N must be >= 0")
    if n_modes < 0:
        raise ValidationError("n_modes must be >= 0")
    if n_modes and fock_cutoff < 2:
        raise ValidationError("fock_cutoff must be >= 2")


@dataclass(frozen=True)
class ASParams:
    N: int = 0
    n_modes: int = 1
    eps: float = 1.0
    gamma1: float = 1.0
    gamma2: float = 1.0
    eta: float = 0.0
    omega: tuple = (1.0,)
    kappa: tuple = (0.5,)
    lam: tuple = (0.0,)
    fock_cutoff: int = 6

    def __post_init__(self):
        _check_sizes(self.N, self.n_modes, self.fock_cutoff)
        for name in ("omega", "kappa", "lam"):
            object.__setattr__(self, name, _tuple(getattr(self, name), self.n_modes, name))
        if not 0 < self.gamma2 <= 2 * self.gamma1 * (1 + 1e-12):
            raise ValidationError(f"need 0 < gamma2 <= 2 gamma1, got gamma1={self.gamma1}, gamma2={self.gamma2}")
        if not -1 <= self.eta <= 1:
            raise ValidationError(f"need -1 <= eta <= 1, got {self.eta}")
        if any(k <= 0 for k in self.kappa) or any(w <= 0 for w in self.omega):
            raise ValidationError("mode frequencies and damping constants must be positive")


@dataclass(frozen=True)
class HLParams:
    N: int = 0
    n_modes: int = 1
    gamma_g: tuple = (0.5 + 1.0j,)
    gamma_h1: complex = 0.25
    gamma_h2: complex = 0.25
    lam: tuple = (0.0,)
    fock_cutoff: int = 6
    rwa: bool = True
    beta: float = 0.0
    omega_r: float | None = None
    mu: float | None = None

    def __post_init__(self):
        _check_sizes(self.N, self.n_modes, self.fock_cutoff)
        object.__setattr__(self, "gamma_g", _tuple(self.gamma_g, self.n_modes, "gamma_g", complex))
        object.__setattr__(self, "lam", _tuple(self.lam, self.n_modes, "lam"))
        object.__setattr__(self, "gamma_h1", complex(self.gamma_h1))
        object.__setattr__(self, "gamma_h2", complex(self.gamma_h2))
        rates = (*self.gamma_g, self.gamma_h1, self.gamma_h2)
        if any(g.real < 0 for g in rates):
            raise ValidationError("damping coefficients must have non-negative real part")


@dataclass(frozen=True)
class DHLParams:
    N: int = 0
    n_modes: int = 1
    gamma_g: tuple = (0.5 + 1.0j,)
    gamma_b_plus: complex = 0.25
    gamma_b_minus: complex = 0.25
    gamma_c_plus: complex = 0.25
    gamma_c_minus: complex = 0.25
    lam: tuple = (0.0,)
    fock_cutoff: int = 6

    def __post_init__(self):
        _check_sizes(self.N, self.n_modes, self.fock_cutoff)
        object.__setattr__(self, "gamma_g", _tuple(self.gamma_g, self.n_modes, "gamma_g", complex))
        object.__setattr__(self, "lam", _tuple(self.lam, self.n_modes, "lam"))
        for name in ("gamma_b_plus", "gamma_b_minus", "gamma_c_plus", "gamma_c_minus"):
            object.__setattr__(self, name, complex(getattr(self, name)))
        rates = (*self.gamma_g, self.gamma_b_plus, self.gamma_b_minus, self.gamma_c_plus, self.gamma_c_minus)
        if any(g.real < 0 for g in rates):
            raise ValidationError("damping coefficients must have non-negative real part")


def _space(kind, local, N, n_modes, cutoff):
    return HilbertSpec(tuple([(kind, local)] * (2 * N + 1) + [("boson", cutoff)] * n_modes))


def site_labels(N):
    return list(range(-N, N + 1))


def mode_operators(space, N, n_modes, cutoff):
    a, _ = boson_ladder(cutoff)
    first = 2 * N + 1
    return [embed_site_operator(space, first + j, a) for j in range(n_modes)]


def radiation_field(space, N, n_modes, cutoff, lam):
    """Field value at each site: ``-i (2N+1)^{-1/2} sum_l lam_l a_l exp(2 pi i l r / n)``."""
    modes = mode_operators(space, N, n_modes, cutoff)
    fields = []
    for r in site_labels(N):
        phi = OperatorMatrix(space, np.zeros((space.dim, space.dim)))
        for l, a in enumerate(modes):
            phase = np.exp(2j * np.pi * l * r / n_modes)
            phi = phi + a * (-1j * lam[l] * phase / np.sqrt(2 * N + 1))
        fields.append(phi)
    return fields


def _coupling(space, raising_ops, fields):
    ham = OperatorMatrix(space, np.zeros((space.dim, space.dim)))
    for up, phi in zip(raising_ops, fields):
        term = up @ phi
        ham = ham + term + term.dag()
    return ham


def atom_relaxation_rates(gamma1, gamma2, eta):
    """Real damping coefficients ``(decay, pump, dephasing)`` for one atom.

    Decay ``gamma2 (1 - eta)/4`` on ``sigma_-``, pumping ``gamma2 (1 + eta)/4``
    on ``sigma_+`` and dephasing ``(2 gamma1 - gamma2)/8`` on ``sigma_z`` give
    ``L sigma_pm = -gamma1 sigma_pm`` and ``L sigma_z = -gamma2 (sigma_z - eta)``.
    """
    return gamma2 * (1 - eta) / 4, gamma2 * (1 + eta) / 4, (2 * gamma1 - gamma2) / 8


def build_as_generator(p: ASParams) -> GeneratorSpec:
    space = _space("spin", 2, p.N, p.n_modes, p.fock_cutoff)
    _, _, sz, sp, sm = pauli()
    down, up, dephase = atom_relaxation_rates(p.gamma1, p.gamma2, p.eta)
    ham = OperatorMatrix(space, np.zeros((space.dim, space.dim)))
    terms = []
    raising = []
    for site in range(2 * p.N + 1):
        z = embed_site_operator(space, site, sz)
        ham = ham + z * (p.eps / 2)
        lower = embed_site_operator(space, site, sm)
        upper = embed_site_operator(space, site, sp)
        raising.append(upper)
        terms += [(lower, down), (upper, up)]
        if dephase != 0:
            terms.append((z, dephase))
    for a, w, k in zip(mode_operators(space, p.N, p.n_modes, p.fock_cutoff), p.omega, p.kappa):
        ham = ham + (a.dag() @ a) * w
        terms.append((a, k))
    fields = radiation_field(space, p.N, p.n_modes, p.fock_cutoff, p.lam)
    ham = ham + _coupling(space, raising, fields)
    return GeneratorSpec(space, ham, tuple(terms))


def _check_resonance(p: HLParams):
    if p.omega_r is None and p.mu is None:
        return
    if p.omega_r is None or p.mu is None or abs(p.omega_r - 2 * p.mu) > RESONANCE_TOL * max(1.0, abs(p.omega_r)):
        raise ValidationError("off-resonance: SL interaction Hamiltonian time-dependent")


def build_hl_generator(p: HLParams) -> GeneratorSpec:
    """Two-reservoir spin generator. The counter-rotating coupling never enters."""
    _check_resonance(p)
    space = _space("spin", 2, p.N, p.n_modes, p.fock_cutoff)
    _, _, _, sp, sm = pauli()
    terms = []
    for a, g in zip(mode_operators(space, p.N, p.n_modes, p.fock_cutoff), p.gamma_g):
        terms.append((a, g))
    raising = []
    for site in range(2 * p.N + 1):
        lower = embed_site_operator(space, site, sm)
        upper = embed_site_operator(space, site, sp)
        raising.append(upper)
        terms += [(lower, p.gamma_h1), (upper, p.gamma_h2)]
    fields = radiation_field(space, p.N, p.n_modes, p.fock_cutoff, p.lam)
    return GeneratorSpec(space, _coupling(space, raising, fields), tuple(terms))


def match_hl_to_as(p: HLParams) -> ASParams:
    """Phenomenological parameters reproducing the two-reservoir generator.

    The result always satisfies ``gamma2 = 2 gamma1``.
    """
    re1, re2 = p.gamma_h1.real, p.gamma_h2.real
    total = re1 + re2
    if total == 0:
        raise ValidationError("Re(gamma_h1 + gamma_h2) = 0: eta undefined")
    return ASParams(
        N=p.N,
        n_modes=p.n_modes,
        eps=(p.gamma_h1 - p.gamma_h2).imag,
        gamma1=total,
        gamma2=2 * total,
        eta=(re2 - re1) / total,
        omega=tuple(g.imag for g in p.gamma_g),
        kappa=tuple(g.real for g in p.gamma_g),
        lam=p.lam,
        fock_cutoff=p.fock_cutoff,
    )


def build_dhl_generator(p: DHLParams) -> GeneratorSpec:
    space = _space("fermion-site", 4, p.N, p.n_modes, p.fock_cutoff)
    bp, bm = fermion_site_pair()
    terms = []
    for a, g in zip(mode_operators(space, p.N, p.n_modes, p.fock_cutoff), p.gamma_g):
        terms.append((a, g))
    raising = []
    for site in range(2 * p.N + 1):
        plus = embed_site_operator(space, site, bp)
        minus = embed_site_operator(space, site, bm)
        raising.append(plus.dag() @ minus)
        terms += [
            (plus, p.gamma_b_plus),
            (plus.dag(), p.gamma_c_plus),
            (minus, p.gamma_b_minus),
            (minus.dag(), p.gamma_c_minus),
        ]
    fields = radiation_field(space, p.N, p.n_modes, p.fock_cutoff, p.lam)
    return GeneratorSpec(space, _coupling(space, raising, fields), tuple(terms))


def dhl_closed_form(p: DHLParams):
    """Closed-form site action on ``b+^dag b-`` and ``n+ - n-`` as ``(coefficient, (n+ coeff, n- coeff, constant))``.

    ``L(b+^dag b-) = coefficient * b+^dag b-`` and
    ``L(n+ - n-) = c_plus n+ + c_minus n- + constant``.
    """
    bp, bm, cp, cm = p.gamma_b_plus, p.gamma_b_minus, p.gamma_c_plus, p.gamma_c_minus
    coefficient = -((bp + bm + cp + cm).real - 1j * (bp - bm - cp + cm).imag)
    c_plus = -2 * (bp + cp).real
    c_minus = 2 * (bm + cm).real
    constant = 2 * (cp.real - cm.real)
    return coefficient, (c_plus, c_minus, constant)


@dataclass
class DHLEquivalence:
    defect: float
    holds: bool
    gamma1: float
    gamma2: float
    eps: float
    eta: float | None
    eta_out_of_range: bool
    notes: list = field(default_factory=list)

    def as_params(self, p: DHLParams) -> ASParams:
        """Matching phenomenological parameters; only defined when the condition holds."""
        if not self.holds:
            raise ValidationError(f"DHL/AS matching condition violated by {self.defect:g}")
        if self.eta_out_of_range:
            raise ValidationError(f"implied eta {self.eta} outside [-1, 1]")
        return ASParams(
            N=p.N,
            n_modes=p.n_modes,
            eps=self.eps,
            gamma1=self.gamma1,
            gamma2=self.gamma2,
            eta=self.eta,
            omega=tuple(g.imag for g in p.gamma_g),
            kappa=tuple(g.real for g in p.gamma_g),
            lam=p.lam,
            fock_cutoff=p.fock_cutoff,
        )


def check_dhl_as_equivalence(p: DHLParams, tol: float = 1e-12) -> DHLEquivalence:
    """Compare the fermion-site generator with the phenomenological atom form.

    ``defect = Re(B+ + C+) - Re(B- + C-)``; when it vanishes ``sigma_z`` relaxes
    at ``gamma2 = 2 Re(B+ + C+)`` towards ``eta = Re(C+ - C-) / Re(B+ + C+)`` and
    ``gamma1 = gamma2``.
    """
    rate_plus = (p.gamma_b_plus + p.gamma_c_plus).real
    rate_minus = (p.gamma_b_minus + p.gamma_c_minus).real
    defect = rate_plus - rate_minus
    holds = abs(defect) <= tol * max(1.0, abs(rate_plus))
    coefficient, _ = dhl_closed_form(p)
    gamma1 = -coefficient.real
    eps = coefficient.imag
    notes = []
    mean_rate = 0.5 * (rate_plus + rate_minus)
    eta = None
    out_of_range = False
    if mean_rate > 0:
        eta = (p.gamma_c_plus.real - p.gamma_c_minus.real) / mean_rate
        out_of_range = abs(eta) > 1
        if out_of_range:
            notes.append(f"implied eta {eta:g} outside [-1, 1]")
    else:
        notes.append("no relaxation: eta undefined")
    if not holds:
        notes.append(f"matching condition violated: defect {defect:g}")
    return DHLEquivalence(float(defect), bool(holds), float(gamma1), float(2 * mean_rate),
                          float(eps), eta, bool(out_of_range), notes)


def counter_rotating_vanishes(p: HLParams) -> dict:
    """Show that the counter-rotating coupling leaves the generator unchanged.

    Builds the generator with the flag as given and with the rotating-wave
    form, then compares the superoperator matrices.
    """
    reference = build_hl_generator(HLParams(**{**p.__dict__, "rwa": True, "beta": 0.0}))
    actual = build_hl_generator(p)
    difference = float(np.max(np.abs(superoperator(actual) - superoperator(reference))))
    return {
        "identical": difference == 0.0,
        "max_difference": difference,
        "rwa": p.rwa,
        "beta": p.beta,
        "resonance": "omega_R = 2 mu",
        "note": "counter-rotating contributions to the wave operator vanish in the weak-coupling limit",
    }
