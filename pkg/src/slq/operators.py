"""Finite-dimensional operator algebra on tensor-product Hilbert spaces.

Three kinds of local factor are supported: a spin-1/2 (dimension 2), a
truncated bosonic mode (dimension = Fock cutoff) and a fermion site holding
two modes ``b_plus`` and ``b_minus`` (dimension 4).  Operators living on
different factors are combined with a plain Kronecker product, so operators
on distinct sites commute, fermion sites included.

The fermion-site basis is ordered ``|vac>, |+>, |->, |+->``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import DimensionMismatchError, ValidationError

DEFAULT_DIM_CAP = 4096
KINDS = ("spin", "boson", "fermion-site")


def dimension_cap() -> int:
    """Return the total-dimension cap, overridable through ``SLQ_DIM_CAP``."""
    raw = os.environ.get("SLQ_DIM_CAP")
    if raw is None:
        return DEFAULT_DIM_CAP
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ValidationError(f"SLQ_DIM_CAP must be an integer, got {raw!r}") from exc
    if cap < 1:
        raise ValidationError("SLQ_DIM_CAP must be positive")
    return cap


@dataclass(frozen=True)
class HilbertSpec:
    """Ordered list of local factors ``(kind, local_dimension)``."""

    factors: tuple

    def __post_init__(self):
        factors = tuple((str(kind), int(dim)) for kind, dim in self.factors)
        object.__setattr__(self, "factors", factors)
        if not factors:
            raise ValidationError("a Hilbert space needs at least one factor")
        for site, (kind, dim) in enumerate(factors):
            if kind not in KINDS:
                raise ValidationError(f"factor {site}: unknown kind {kind!r}")
            if kind == "spin" and dim != 2:
                raise ValidationError(f"factor {site}: spin dimension must be 2, got {dim}")
            if kind == "fermion-site" and dim != 4:
                raise ValidationError(f"factor {site}: fermion-site dimension must be 4, got {dim}")
            if kind == "boson" and dim < 2:
                raise ValidationError(f"factor {site}: boson cutoff must be >= 2, got {dim}")
        cap = dimension_cap()
        if self.dim > cap:
            raise ValidationError(f"total dimension {self.dim} exceeds cap {cap}")

    @property
    def dim(self) -> int:
        return int(np.prod([d for _, d in self.factors]))

    @property
    def local_dims(self) -> list[int]:
        return [d for _, d in self.factors]

    def __len__(self):
        return len(self.factors)

    @classmethod
    def build(cls, *factors) -> "HilbertSpec":
        return cls(tuple(factors))

    @classmethod
    def spins(cls, n: int) -> "HilbertSpec":
        return cls(tuple(("spin", 2) for _ in range(n)))


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Dense complex matrix acting on ``space``."""

    space: HilbertSpec
    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        n = self.space.dim
        if entries.shape != (n, n):
            raise DimensionMismatchError(
                f"operator shape {entries.shape} does not match space dimension {n}",
                expected=n,
                got=entries.shape,
            )

    @property
    def dim(self) -> int:
        return self.space.dim

    def dag(self) -> "OperatorMatrix":
        return OperatorMatrix(self.space, self.entries.conj().T)

    def _check(self, other):
        if not isinstance(other, OperatorMatrix):
            return NotImplemented
        if other.space != self.space:
            raise DimensionMismatchError("operators act on different spaces")
        return other

    def __matmul__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return OperatorMatrix(self.space, self.entries @ other.entries)

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return OperatorMatrix(self.space, self.entries + other.entries)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return OperatorMatrix(self.space, self.entries - other.entries)

    def __neg__(self):
        return OperatorMatrix(self.space, -self.entries)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return OperatorMatrix(self.space, scalar * self.entries)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries))

    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.linalg.norm(self.entries - self.entries.conj().T) <= tol)

    def is_density(self, tol: float = 1e-9) -> bool:
        """Hermitian, unit trace and positive semidefinite, all within ``tol``."""
        if not self.is_hermitian(tol):
            return False
        if abs(self.trace() - 1.0) > tol:
            return False
        herm = 0.5 * (self.entries + self.entries.conj().T)
        return bool(np.linalg.eigvalsh(herm).min() >= -tol)


def identity(space: HilbertSpec) -> OperatorMatrix:
    return OperatorMatrix(space, np.eye(space.dim, dtype=complex))


def _local_space(kind: str, dim: int) -> HilbertSpec:
    return HilbertSpec(((kind, dim),))


def _as_array(op) -> np.ndarray:
    return op.entries if isinstance(op, OperatorMatrix) else np.asarray(op, dtype=complex)


def embed_site_operator(space: HilbertSpec, site: int, local) -> OperatorMatrix:
    """Return ``1 x ... x local x ... x 1`` with ``local`` on factor ``site``."""
    if not 0 <= site < len(space):
        raise DimensionMismatchError(
            f"site {site} out of range for {len(space)} factors", site=site
        )
    block = _as_array(local)
    expected = space.factors[site][1]
    if block.shape != (expected, expected):
        raise DimensionMismatchError(
            f"site {site} expects a {expected}x{expected} operator, got {block.shape}",
            site=site,
            expected=expected,
            got=block.shape,
        )
    dims = space.local_dims
    left = int(np.prod(dims[:site]))
    right = int(np.prod(dims[site + 1:]))
    full = np.kron(np.kron(np.eye(left), block), np.eye(right))
    return OperatorMatrix(space, full)


def tensor(*ops: OperatorMatrix) -> OperatorMatrix:
    """Kronecker product of operators, concatenating their spaces."""
    space = HilbertSpec(tuple(f for op in ops for f in op.space.factors))
    return OperatorMatrix(space, reduce(np.kron, [op.entries for op in ops]))


def pauli():
    """Return ``(sx, sy, sz, s_plus, s_minus)`` on a single spin."""
    space = _local_space("spin", 2)
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    sp = np.array([[0, 1], [0, 0]], dtype=complex)
    return tuple(OperatorMatrix(space, m) for m in (sx, sy, sz, sp, sp.T.copy()))


def boson_ladder(cutoff: int):
    """Annihilation and creation operators on a Fock space truncated at ``cutoff`` levels."""
    if cutoff < 2:
        raise ValidationError(f"boson cutoff must be >= 2, got {cutoff}")
    space = _local_space("boson", cutoff)
    a = np.diag(np.sqrt(np.arange(1, cutoff, dtype=float)), k=1).astype(complex)
    return OperatorMatrix(space, a), OperatorMatrix(space, a.conj().T)


def fermion_site_pair():
    """Return ``(b_plus, b_minus)`` on the 4-dimensional fermion site.

    The two modes anticommute with each other on the site (a sign is carried
    by ``b_minus`` when ``b_plus`` is occupied).
    """
    space = _local_space("fermion-site", 4)
    # basis: 0=|vac>, 1=|+>, 2=|->, 3=|+->  with |+-> = b+^dag b-^dag |vac>
    bp = np.zeros((4, 4), dtype=complex)
    bm = np.zeros((4, 4), dtype=complex)
    bp[0, 1] = 1.0  # b+ |+> = |vac>
    bp[2, 3] = 1.0  # b+ |+-> = |->
    bm[0, 2] = 1.0  # b- |-> = |vac>
    bm[1, 3] = -1.0  # b- b+^dag b-^dag |vac> = -b+^dag |vac>
    return OperatorMatrix(space, bp), OperatorMatrix(space, bm)


def commutator(a: OperatorMatrix, b: OperatorMatrix) -> OperatorMatrix:
    return a @ b - b @ a


def anticommutator(a: OperatorMatrix, b: OperatorMatrix) -> OperatorMatrix:
    return a @ b + b @ a
