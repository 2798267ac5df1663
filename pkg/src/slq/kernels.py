"""Complex damping coefficients from tabulated reservoir spectral densities.

A damping coefficient for a resonance ``e0`` and orientation ``s`` is

    gamma = pi * J(e0) - s * 1j * PV int J(e) / (e - e0) de

i.e. the half-line Fourier transform of the reservoir two-point function.
The principal value is taken by singularity subtraction followed by the
trapezoid rule on the density's own grid.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True, eq=False)
class SpectralDensity:
    """Piecewise-linear spectral weight on a strictly increasing energy grid.

    The density vanishes identically outside ``[grid[0], grid[-1]]``.
    """

    grid: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float).ravel()
        weights = np.array(self.weights, dtype=complex).ravel()
        if grid.size == 0:
            raise ValidationError("spectral density grid is empty")
        if grid.shape != weights.shape:
            raise ValidationError(
                f"grid has {grid.size} points but weights has {weights.size}"
            )
        if not np.all(np.isfinite(grid)) or not np.all(np.isfinite(weights)):
            raise ValidationError("spectral density contains non-finite values")
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise ValidationError("spectral density grid must be strictly increasing")
        grid.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "weights", weights)

    @property
    def support(self) -> tuple[float, float]:
        return float(self.grid[0]), float(self.grid[-1])

    @property
    def is_diagonal(self) -> bool:
        """Real and non-negative weights, as for ``|f(k)|^2``."""
        return bool(np.all(self.weights.imag == 0) and np.all(self.weights.real >= 0))

    def __call__(self, energy):
        e = np.asarray(energy, dtype=float)
        re = np.interp(e, self.grid, self.weights.real, left=0.0, right=0.0)
        im = np.interp(e, self.grid, self.weights.imag, left=0.0, right=0.0)
        out = re + 1j * im
        return complex(out) if out.ndim == 0 else out

    def scaled(self, factor) -> "SpectralDensity":
        return SpectralDensity(self.grid, factor * self.weights)

    def __add__(self, other: "SpectralDensity") -> "SpectralDensity":
        if not np.array_equal(self.grid, other.grid):
            raise ValidationError("densities must share a grid to be added")
        return SpectralDensity(self.grid, self.weights + other.weights)

    @classmethod
    def from_function(cls, func, lo: float, hi: float, n: int) -> "SpectralDensity":
        grid = np.linspace(lo, hi, n)
        return cls(grid, func(grid))


def load_density(path) -> SpectralDensity:
    """Read a whitespace-separated table with columns ``energy ReJ [ImJ]``."""
    table = np.loadtxt(path, comments="#", ndmin=2)
    if table.size == 0:
        raise ValidationError(f"{path}: spectral density table is empty")
    if table.shape[1] not in (2, 3):
        raise ValidationError(f"{path}: expected 2 or 3 columns, got {table.shape[1]}")
    weights = table[:, 1].astype(complex)
    if table.shape[1] == 3:
        weights = weights + 1j * table[:, 2]
    return SpectralDensity(table[:, 0], weights)


def save_density(path, density: SpectralDensity) -> None:
    table = np.column_stack([density.grid, density.weights.real, density.weights.imag])
    np.savetxt(path, table, fmt="%.16e", header="energy ReJ ImJ")


@dataclass(frozen=True)
class GammaCoefficient:
    value: complex
    resonance: float
    orientation: int

    def __complex__(self):
        return complex(self.value)

    @property
    def real(self) -> float:
        return self.value.real

    @property
    def imag(self) -> float:
        return self.value.imag


def _check_orientation(orientation):
    if orientation not in (1, -1):
        raise ValidationError(f"orientation must be +1 or -1, got {orientation}")


def principal_value(density: SpectralDensity, resonance: float) -> complex:
    """PV of ``int J(e) / (e - resonance) de`` over the support of ``density``."""
    x = density.grid
    w = density.weights
    if x.size < 2:
        return 0j
    e0 = float(resonance)
    a, b = density.support
    j0 = density(e0)
    if (e0 == a and w[0] != 0) or (e0 == b and w[-1] != 0):
        raise ValidationError(f"PV endpoint singularity at resonance {e0}")
    inside = a < e0 < b
    sub = j0 if inside else 0j

    h = np.diff(x)
    slope = np.diff(w) / h
    with np.errstate(divide="ignore", invalid="ignore"):
        f = (w - sub) / (x - e0)
    # On a segment touching the resonance the subtracted integrand is the
    # segment slope, exactly, because the interpolant is linear there.
    left = np.where(x[:-1] == e0, slope, f[:-1])
    right = np.where(x[1:] == e0, slope, f[1:])
    total = np.sum(h * (left + right)) / 2
    if inside and j0 != 0:
        total += j0 * np.log(abs((b - e0) / (a - e0)))
    return complex(total)


def gamma(density: SpectralDensity, resonance: float, orientation: int = 1) -> GammaCoefficient:
    """Damping coefficient ``pi J(e0) - s i PV int J/(e - e0)``."""
    _check_orientation(orientation)
    if not np.isfinite(resonance):
        raise ValidationError("resonance must be finite")
    pv = principal_value(density, resonance)
    value = np.pi * density(resonance) - orientation * 1j * pv
    return GammaCoefficient(complex(value), float(resonance), orientation)


class BruteForceGamma(NamedTuple):
    value: complex
    converged: bool
    samples: tuple


def _regularized_gamma(density: SpectralDensity, resonance: float, orientation: int, eta: float) -> complex:
    # time integral done in closed form: int_{-inf}^0 e^{(eta + s i x) tau} dtau = 1 / (eta + s i x);
    # the energy integral is exact on each linear segment of the interpolant
    x = density.grid - resonance
    w = density.weights
    if x.size < 2:
        return 0j
    s = orientation
    slope = np.diff(w) / np.diff(x)
    intercept = w[:-1] - slope * x[:-1]
    z0 = eta + 1j * s * x[:-1]
    z1 = eta + 1j * s * x[1:]
    isx = 1j * s
    # int (c + m u) / (eta + i s u) du with z = eta + i s u
    log_part = (intercept - slope * eta / isx) * (np.log(z1) - np.log(z0))
    lin_part = slope * (z1 - z0) / isx
    return complex(np.sum((log_part + lin_part) / isx))


def gamma_brute(density: SpectralDensity, resonance: float, orientation: int = 1, etas=None) -> BruteForceGamma:
    """Damping coefficient from the damped time integral, extrapolated to zero damping.

    ``etas`` must hold at least three strictly decreasing positive values;
    polynomial (Neville) extrapolation to ``eta = 0`` is applied.  The result
    is flagged unconverged when successive extrapolation increments grow.
    """
    _check_orientation(orientation)
    if etas is None:
        raise ValidationError("gamma_brute needs a list of damping values")
    etas = np.asarray(etas, dtype=float)
    if etas.size < 3 or np.any(etas <= 0) or np.any(np.diff(etas) >= 0):
        raise ValidationError("etas must be >= 3 strictly decreasing positive values")
    samples = [_regularized_gamma(density, resonance, orientation, e) for e in etas]
    table = list(samples)
    diagonal = [table[-1]]
    n = len(etas)
    for level in range(1, n):
        table = [
            (etas[i] * table[i + 1] - etas[i + level] * table[i]) / (etas[i] - etas[i + level])
            for i in range(n - level)
        ]
        diagonal.append(table[-1])
    increments = np.abs(np.diff(diagonal))
    converged = bool(np.all(np.isfinite(increments))) and bool(
        increments.size < 2 or increments[-1] <= increments[-2]
    )
    return BruteForceGamma(complex(diagonal[-1]), converged, tuple(samples))


def bose_factors(energy, beta: float):
    """Return ``(m, n)`` with ``m = 1/(1 - e^{-beta e})`` and ``n = e^{-beta e}/(1 - e^{-beta e})``."""
    e = np.asarray(energy, dtype=float)
    m = -1.0 / np.expm1(-beta * e)
    n = 1.0 / np.expm1(beta * e)
    return m, n


def thermal_split_density(density: SpectralDensity, beta: float):
    """Split a thermal density into its emission and absorption parts ``(m J, n J)``."""
    if not beta > 0:
        raise ValidationError(f"beta must be positive, got {beta}")
    if not density.is_diagonal:
        raise ValidationError("thermal split needs a diagonal (real, non-negative) density")
    if np.any(density.grid <= 0):
        raise ValidationError("thermal split needs all grid energies > 0 (Bose factors singular)")
    m, n = bose_factors(density.grid, beta)
    return SpectralDensity(density.grid, m * density.weights), SpectralDensity(density.grid, n * density.weights)


class OnShellRates(NamedTuple):
    absorb: float
    emit: float
    off_shell: bool


def onshell_gamma_pair(density: SpectralDensity, beta: float, omega: float) -> OnShellRates:
    """Real parts of the two thermal damping coefficients at frequency ``omega``.

    Returns ``pi m(omega) J(omega)`` and ``pi n(omega) J(omega)``; their ratio is
    ``e^{beta omega}``.  Outside the support both vanish and ``off_shell`` is set.
    """
    if not beta > 0:
        raise ValidationError(f"beta must be positive, got {beta}")
    if not omega > 0:
        raise ValidationError(f"omega must be positive, got {omega}")
    a, b = density.support
    if not a <= omega <= b:
        return OnShellRates(0.0, 0.0, True)
    weight = density(omega).real
    m, n = bose_factors(omega, beta)
    return OnShellRates(float(np.pi * m * weight), float(np.pi * n * weight), False)
