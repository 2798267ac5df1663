"""Heisenberg-form Markov generators, their Schrödinger duals and an RK4 integrator.

A generator is a Hamiltonian plus a list of dissipative terms ``(A, Gamma)``
acting on observables as

    L(X) = i[H, X] + sum Gamma [A^dag, X] A - conj(Gamma) A^dag [A, X]

With ``Gamma = gamma/2 + i S`` each term is the usual dissipator
``gamma (A^dag X A - {A^dag A, X}/2)`` plus the level shift ``i S [A^dag A, X]``.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DimensionMismatchError, NumericalAbort, ValidationError
from .operators import HilbertSpec, OperatorMatrix

TRACE_TOL = 1e-6
EIG_TOL = 1e-6
FOCK_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class GeneratorSpec:
    space: HilbertSpec
    hamiltonian: OperatorMatrix | None = None
    terms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        d = self.space.dim
        ham = self.hamiltonian
        if ham is None:
            ham = OperatorMatrix(self.space, np.zeros((d, d)))
        if ham.space != self.space:
            raise DimensionMismatchError("hamiltonian acts on a different space")
        if not ham.is_hermitian(1e-12):
            raise ValidationError("hamiltonian is not hermitian to 1e-12")
        object.__setattr__(self, "hamiltonian", ham)
        terms = []
        for jump, rate in self.terms:
            if jump.space != self.space:
                raise DimensionMismatchError("jump operator acts on a different space")
            rate = complex(rate)
            if rate.real < 0:
                warnings.warn(f"damping coefficient {rate} has negative real part; the map is not CP")
            terms.append((jump, rate))
        object.__setattr__(self, "terms", tuple(terms))

    @property
    def dim(self) -> int:
        return self.space.dim

    @cached_property
    def _parts(self):
        h = self.hamiltonian.entries
        parts = []
        for jump, rate in self.terms:
            a = jump.entries
            ad = a.conj().T
            parts.append((a, ad, ad @ a, rate))
        return h, parts

    def __add__(self, other: "GeneratorSpec") -> "GeneratorSpec":
        if other.space != self.space:
            raise DimensionMismatchError("generators act on different spaces")
        return GeneratorSpec(self.space, self.hamiltonian + other.hamiltonian, self.terms + other.terms)


def _heisenberg_array(gen: GeneratorSpec, x: np.ndarray) -> np.ndarray:
    h, parts = gen._parts
    out = 1j * (h @ x - x @ h)
    for a, ad, ada, rate in parts:
        out += 2 * rate.real * (ad @ x @ a) - rate * (x @ ada) - rate.conjugate() * (ada @ x)
    return out


def _schrodinger_array(gen: GeneratorSpec, rho: np.ndarray) -> np.ndarray:
    h, parts = gen._parts
    out = -1j * (h @ rho - rho @ h)
    for a, ad, ada, rate in parts:
        out += 2 * rate.real * (a @ rho @ ad) - rate * (ada @ rho) - rate.conjugate() * (rho @ ada)
    return out


def _check_space(gen, op):
    if op.space != gen.space:
        raise DimensionMismatchError("operator and generator act on different spaces")


def apply_heisenberg(gen: GeneratorSpec, x: OperatorMatrix) -> OperatorMatrix:
    """Action of the generator on an observable."""
    _check_space(gen, x)
    return OperatorMatrix(gen.space, _heisenberg_array(gen, x.entries))


def apply_schrodinger(gen: GeneratorSpec, rho: OperatorMatrix, unchecked: bool = False) -> OperatorMatrix:
    """Dual action on a state, ``Tr(L*(rho) X) = Tr(rho L(X))``."""
    _check_space(gen, rho)
    if not unchecked and not rho.is_density(1e-9):
        raise ValidationError("input is not a density matrix (pass unchecked=True to skip)")
    return OperatorMatrix(gen.space, _schrodinger_array(gen, rho.entries))


def gauge_form(gen: GeneratorSpec, x: OperatorMatrix) -> OperatorMatrix:
    """Same generator written as dissipator plus level shift, for cross-checks."""
    _check_space(gen, x)
    h = gen.hamiltonian.entries
    xa = x.entries
    out = 1j * (h @ xa - xa @ h)
    for jump, rate in gen.terms:
        a = jump.entries
        ad = a.conj().T
        ada = ad @ a
        rate_full, shift = 2 * rate.real, rate.imag
        out = out + rate_full * (ad @ xa @ a - 0.5 * (ada @ xa + xa @ ada))
        out = out + 1j * shift * (ada @ xa - xa @ ada)
    return OperatorMatrix(gen.space, out)


def superoperator(gen: GeneratorSpec, picture: str = "heisenberg") -> np.ndarray:
    """Matrix of the generator on row-major vectorised operators."""
    d = gen.dim
    one = np.eye(d)
    h, parts = gen._parts
    if picture == "heisenberg":
        mat = 1j * (np.kron(h, one) - np.kron(one, h.T))
        for a, ad, ada, rate in parts:
            mat += 2 * rate.real * np.kron(ad, a.T)
            mat -= rate * np.kron(one, ada.T) + rate.conjugate() * np.kron(ada, one)
    elif picture == "schrodinger":
        mat = -1j * (np.kron(h, one) - np.kron(one, h.T))
        for a, ad, ada, rate in parts:
            mat += 2 * rate.real * np.kron(a, ad.T)
            mat -= rate * np.kron(ada, one) + rate.conjugate() * np.kron(one, ada.T)
    else:
        raise ValidationError(f"unknown picture {picture!r}")
    return mat


def choi_min_eigenvalue(gen: GeneratorSpec, dt: float) -> float:
    """Smallest eigenvalue of the Choi matrix of the step map ``1 + dt L*``.

    The first-order map carries an intrinsic ``-O(dt^2)`` defect, so ``dt``
    has to be small compared to the inverse squared norm of the generator for
    a ``1e-10`` certificate.
    """
    d = gen.dim
    step = np.eye(d * d) + dt * superoperator(gen, "schrodinger")
    choi = step.reshape(d, d, d, d).transpose(2, 0, 3, 1).reshape(d * d, d * d)
    choi = 0.5 * (choi + choi.conj().T)
    return float(np.linalg.eigvalsh(choi).min())


def _top_fock_populations(space: HilbertSpec, rho: np.ndarray) -> list[float]:
    dims = space.local_dims
    tensor = rho.reshape(dims + dims)
    n = len(dims)
    diag = np.einsum(tensor, list(range(n)) * 2, list(range(n))).real
    pops = []
    for site, (kind, dim) in enumerate(space.factors):
        if kind != "boson":
            continue
        pops.append(float(np.take(diag, dim - 1, axis=site).sum()))
    return pops


@dataclass
class Trajectory:
    space: HilbertSpec
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    trace_drift: list = field(default_factory=list)
    min_eig: list = field(default_factory=list)
    top_fock: list = field(default_factory=list)

    def expectation(self, op: OperatorMatrix) -> np.ndarray:
        """``Tr(rho(t) op)`` at each recorded time."""
        o = op.entries
        return np.array([np.einsum("ij,ji->", r, o) for r in self.states])

    def write_csv(self, path, observables: dict) -> None:
        """Write ``t, trace_drift, min_eig`` followed by one column per observable.

        ``observables`` maps a column name to a function of the density matrix
        returning a real number.
        """
        names = list(observables)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "trace_drift", "min_eig", *names])
            for t, drift, eig, rho in zip(self.times, self.trace_drift, self.min_eig, self.states):
                values = [observables[name](rho) for name in names]
                writer.writerow([format_float(v) for v in (t, drift, eig, *values)])


def format_float(value) -> str:
    """Seventeen significant digits in scientific notation."""
    return f"{float(value):.16e}"


def evolve(gen: GeneratorSpec, rho0: OperatorMatrix, t_final: float, dt: float, *,
           sample_every: int = 1, trace_tol: float = TRACE_TOL, eig_tol: float = EIG_TOL,
           fock_tol: float = FOCK_TOL) -> Trajectory:
    """Integrate ``d rho/dt = L*(rho)`` with classical RK4 at fixed step.

    Raises ``NumericalAbort`` carrying the partial trajectory when the trace
    drifts by more than ``trace_tol``, an eigenvalue drops below ``-eig_tol``
    or a bosonic top Fock level holds more than ``fock_tol`` population.
    """
    _check_space(gen, rho0)
    if not dt > 0:
        raise ValidationError("dt must be positive")
    if t_final < 0:
        raise ValidationError("t_final must be non-negative")
    if not rho0.is_density(1e-9):
        raise ValidationError("initial state is not a density matrix")
    steps = int(round(t_final / dt))
    if abs(steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValidationError("t_final must be an integer multiple of dt")
    traj = Trajectory(gen.space)
    rho = np.array(rho0.entries)
    has_boson = any(kind == "boson" for kind, _ in gen.space.factors)

    def record(k, rho):
        herm = 0.5 * (rho + rho.conj().T)
        drift = abs(np.trace(rho) - 1.0)
        eig = float(np.linalg.eigvalsh(herm).min())
        top = max(_top_fock_populations(gen.space, rho)) if has_boson else 0.0
        traj.times.append(k * dt)
        traj.states.append(rho.copy())
        traj.trace_drift.append(float(drift))
        traj.min_eig.append(eig)
        traj.top_fock.append(top)
        if drift > trace_tol:
            raise NumericalAbort(f"trace drift {drift:.3e} at t={k * dt:g}", partial=traj)
        if eig < -eig_tol:
            raise NumericalAbort(f"negative eigenvalue {eig:.3e} at t={k * dt:g}", partial=traj)
        if top > fock_tol:
            raise NumericalAbort(f"top Fock level population {top:.3e} at t={k * dt:g}", partial=traj)

    record(0, rho)
    f = lambda r: _schrodinger_array(gen, r)
    for k in range(1, steps + 1):
        k1 = f(rho)
        k2 = f(rho + 0.5 * dt * k1)
        k3 = f(rho + 0.5 * dt * k2)
        k4 = f(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if k % sample_every == 0 or k == steps:
            record(k, rho)
    return traj
