"""Potentials, Hamiltonians, the half-filling sector basis and the mirror operator.

Conventions used throughout the package:

* energies and fields are measured in units of the hopping ``J`` (``J = 1`` by
  default);
* site indices are 1-based: the monomial potential is ``h * i**gamma`` for
  ``i = 1..L`` while the parabolic potential is ``h1*(i-1) - h2*(i-1)**2``;
* many-body basis states are bit-masks, bit ``i-1`` holds site ``i`` and a set
  bit means spin up (``s = +1``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Union

import numpy as np
import scipy.sparse as sp


class DegeneratePotentialError(ValueError):
    """The potential couples to a conserved quantity and carries no signal."""


class SectorError(ValueError):
    """The half-filling sector is undefined or does not match the probe."""


class Family(str, enum.Enum):
    SINGLE_PARTICLE = "single"
    MANY_BODY = "many-body"


@dataclass(frozen=True)
class Monomial:
    """``V_i = h * i**gamma`` with 1-based ``i``."""

    h: float
    gamma: float

    def __post_init__(self):
        if not (math.isfinite(self.h) and math.isfinite(self.gamma)):
            raise ValueError("field parameters must be finite")
        if self.gamma <= 0:
            raise DegeneratePotentialError(
                f"gamma={self.gamma}: a uniform shift carries no information about h"
            )

    @property
    def parameters(self) -> tuple[str, ...]:
        return ("h",)

    @property
    def in_nonnegative_regime(self) -> bool:
        return self.h >= 0


@dataclass(frozen=True)
class Parabolic:
    """``V_i = h1*(i-1) - h2*(i-1)**2``."""

    h1: float
    h2: float

    def __post_init__(self):
        if not (math.isfinite(self.h1) and math.isfinite(self.h2)):
            raise ValueError("field parameters must be finite")

    @property
    def parameters(self) -> tuple[str, ...]:
        return ("h1", "h2")

    @property
    def in_nonnegative_regime(self) -> bool:
        return self.h1 >= 0 and self.h2 >= 0


PotentialSpec = Union[Monomial, Parabolic]


def potential_values(potential: PotentialSpec, L: int) -> np.ndarray:
    """On-site energies ``V_1..V_L`` of `potential`."""
    if L < 2:
        raise ValueError(f"need at least two sites, got L={L}")
    if isinstance(potential, Monomial):
        i = np.arange(1, L + 1, dtype=float)
        return potential.h * i**potential.gamma
    if isinstance(potential, Parabolic):
        x = np.arange(L, dtype=float)
        return potential.h1 * x - potential.h2 * x**2
    raise TypeError(f"unknown potential {potential!r}")


def field_profile(potential: PotentialSpec, parameter: str, L: int) -> np.ndarray:
    """Derivative of the site energies with respect to one field parameter."""
    if isinstance(potential, Monomial) and parameter == "h":
        return np.arange(1, L + 1, dtype=float) ** potential.gamma
    if isinstance(potential, Parabolic) and parameter == "h1":
        return np.arange(L, dtype=float)
    if isinstance(potential, Parabolic) and parameter == "h2":
        return -np.arange(L, dtype=float) ** 2
    raise ValueError(f"{type(potential).__name__} has no parameter {parameter!r}")


def with_parameter(potential: PotentialSpec, parameter: str, value: float) -> PotentialSpec:
    if parameter not in potential.parameters:
        raise ValueError(f"{type(potential).__name__} has no parameter {parameter!r}")
    kwargs = {name: getattr(potential, name) for name in potential.__dataclass_fields__}
    kwargs[parameter] = float(value)
    return type(potential)(**kwargs)


@dataclass(frozen=True)
class ProbeSpec:
    """Full physical configuration of a probe."""

    L: int
    potential: PotentialSpec
    family: Family = Family.SINGLE_PARTICLE
    J: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.L < 2:
            raise ValueError(f"need at least two sites, got L={self.L}")
        if not self.J > 0:
            raise ValueError(f"hopping J must be positive, got {self.J}")
        if self.family is Family.MANY_BODY and self.L % 2:
            raise SectorError(f"half filling needs an even number of sites, got L={self.L}")
        for name in self.potential.parameters:
            prof = field_profile(self.potential, name, self.L)
            if np.ptp(prof) == 0:
                raise DegeneratePotentialError(f"profile of {name} is uniform")

    @property
    def parameters(self) -> tuple[str, ...]:
        return self.potential.parameters

    def value(self, parameter: str) -> float:
        return float(getattr(self.potential, parameter))

    def with_value(self, parameter: str, value: float) -> "ProbeSpec":
        return ProbeSpec(self.L, with_parameter(self.potential, parameter, value), self.family, self.J)


# ---------------------------------------------------------------------------
# single particle


@dataclass(frozen=True)
class TridiagonalHamiltonian:
    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        if len(self.offdiag) != len(self.diag) - 1:
            raise ValueError("offdiag must have exactly L-1 entries")

    @property
    def dim(self) -> int:
        return len(self.diag)

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[:-1] += self.offdiag * v[1:]
        out[1:] += self.offdiag * v[:-1]
        return out


def build_single_particle(spec: ProbeSpec) -> TridiagonalHamiltonian:
    if spec.family is not Family.SINGLE_PARTICLE:
        raise ValueError("build_single_particle needs a single-particle probe")
    return TridiagonalHamiltonian(
        diag=potential_values(spec.potential, spec.L),
        offdiag=np.full(spec.L - 1, float(spec.J)),
    )


# ---------------------------------------------------------------------------
# many body, half-filling sector


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Bit-masks with exactly ``L/2`` set bits, in increasing order."""

    L: int
    states: np.ndarray
    spins: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.states)

    def index(self, state) -> np.ndarray | int:
        """Ordinal of one or many bit-masks; raises KeyError for outsiders."""
        state_arr = np.asarray(state, dtype=np.int64)
        pos = np.searchsorted(self.states, state_arr)
        pos_c = np.minimum(pos, len(self.states) - 1)
        if np.any(self.states[pos_c] != state_arr):
            raise KeyError(f"state(s) outside the half-filling sector: {state}")
        return int(pos_c) if np.ndim(pos_c) == 0 else pos_c

    def contains(self, state: int) -> bool:
        pos = np.searchsorted(self.states, state)
        return bool(pos < len(self.states) and self.states[pos] == state)


@lru_cache(maxsize=16)
def enumerate_half_filling(L: int) -> SectorBasis:
    if L < 2 or L % 2:
        raise SectorError(f"half-filling sector needs even L >= 2, got L={L}")
    states = np.array(
        sorted(sum(1 << i for i in up) for up in combinations(range(L), L // 2)),
        dtype=np.int64,
    )
    spins = 2 * ((states[:, None] >> np.arange(L)) & 1) - 1
    states.setflags(write=False)
    spins.setflags(write=False)
    return SectorBasis(L, states, spins.astype(np.int8))


@dataclass(frozen=True, eq=False)
class SparseHamiltonian:
    """Diagonal plus upper-triangle flip-flop triples; symmetric completion implied."""

    dim: int
    diagonal: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    @property
    def offdiagonal(self) -> list[tuple[int, int, float]]:
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.values.tolist()))

    def to_csr(self) -> sp.csr_matrix:
        r = np.concatenate([self.rows, self.cols, np.arange(self.dim)])
        c = np.concatenate([self.cols, self.rows, np.arange(self.dim)])
        v = np.concatenate([self.values, self.values, self.diagonal])
        return sp.csr_matrix((v, (r, c)), shape=(self.dim, self.dim))

    def to_dense(self) -> np.ndarray:
        out = np.diag(self.diagonal.astype(float))
        out[self.rows, self.cols] = self.values
        out[self.cols, self.rows] = self.values
        return out


def _exchange_pairs(basis: SectorBasis) -> tuple[np.ndarray, np.ndarray]:
    """All (row, col) with row < col related by one adjacent spin exchange."""
    rows, cols = [], []
    ks = np.arange(len(basis))
    for i in range(basis.L - 1):
        anti = basis.spins[:, i] != basis.spins[:, i + 1]
        src = ks[anti]
        dst = basis.index(basis.states[anti] ^ (3 << i))
        keep = src < dst
        rows.append(src[keep])
        cols.append(dst[keep])
    return np.concatenate(rows), np.concatenate(cols)


def build_many_body(spec: ProbeSpec, basis: SectorBasis) -> SparseHamiltonian:
    """Pauli-convention Heisenberg chain with on-site field, restricted to the sector.

    Diagonal: ``J * sum_i s_i s_{i+1} + sum_i V_i s_i``; every adjacent flip-flop
    couples with amplitude ``2J``.
    """
    if spec.family is not Family.MANY_BODY:
        raise ValueError("build_many_body needs a many-body probe")
    if basis.L != spec.L:
        raise SectorError(f"basis built for L={basis.L}, probe has L={spec.L}")
    s = basis.spins.astype(float)
    V = potential_values(spec.potential, spec.L)
    diagonal = spec.J * np.sum(s[:, :-1] * s[:, 1:], axis=1) + s @ V
    rows, cols = _exchange_pairs(basis)
    return SparseHamiltonian(
        dim=len(basis),
        diagonal=diagonal,
        rows=rows,
        cols=cols,
        values=np.full(len(rows), 2.0 * spec.J),
    )


def field_operator_diagonal(spec: ProbeSpec, parameter: str, basis: SectorBasis | None = None) -> np.ndarray:
    """Diagonal of ``dH/d(parameter)`` in the working basis."""
    prof = field_profile(spec.potential, parameter, spec.L)
    if spec.family is Family.SINGLE_PARTICLE:
        return prof
    if basis is None:
        basis = enumerate_half_filling(spec.L)
    return basis.spins @ prof


# ---------------------------------------------------------------------------
# mirror symmetry


def mirror_state(state: int, L: int) -> int:
    """Reverse the site order of a bit-mask: |i_1..i_L> -> |i_L..i_1>."""
    out = 0
    for i in range(L):
        if state >> i & 1:
            out |= 1 << (L - 1 - i)
    return out


def mirror_permutation(basis: SectorBasis) -> np.ndarray:
    rev = np.zeros_like(basis.states)
    for i in range(basis.L):
        rev |= ((basis.states >> i) & 1) << (basis.L - 1 - i)
    return basis.index(rev)


def mirror_commutator_norm(H: TridiagonalHamiltonian | SparseHamiltonian, basis: SectorBasis | None = None) -> float:
    """Max-norm of ``HM - MH``; zero iff the potential is mirror symmetric."""
    if isinstance(H, TridiagonalHamiltonian):
        # M is a permutation, so ||HM - MH|| = ||H - MHM||
        return float(max(np.max(np.abs(H.diag - H.diag[::-1])),
                         np.max(np.abs(H.offdiag - H.offdiag[::-1]), initial=0.0)))
    if basis is None:
        raise ValueError("a SectorBasis is needed for the many-body mirror")
    perm = mirror_permutation(basis)
    A = H.to_csr()
    B = A[perm][:, perm]
    diff = (A - B).tocoo()
    return float(np.max(np.abs(diff.data), initial=0.0))


def build_hamiltonian(spec: ProbeSpec, basis: SectorBasis | None = None):
    if spec.family is Family.SINGLE_PARTICLE:
        return build_single_particle(spec)
    return build_many_body(spec, basis if basis is not None else enumerate_half_filling(spec.L))
