"""Eigen-decompositions, ground states, gaps and the analytic Bloch reference."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .models import (
    ProbeSpec,
    SparseHamiltonian,
    TridiagonalHamiltonian,
    build_hamiltonian,
)

DENSE_CAP = 2048
# many-body sectors at or below this dimension are diagonalised densely
SPARSE_DENSE_THRESHOLD = 256
DEGENERACY_RTOL = 1e-12
RESIDUAL_RTOL = 1e-10
GAUGE_TIE_RTOL = 1e-8
DEFAULT_SEED = 20240517


class SolverError(RuntimeError):
    def __init__(self, message: str, iterations: int | None = None):
        super().__init__(message if iterations is None else f"{message} (after {iterations} iterations)")
        self.iterations = iterations


class NearDegeneracyWarning(RuntimeWarning):
    pass


@dataclass(frozen=True, eq=False)
class EigenPair:
    energy: float
    vector: np.ndarray
    residual: float


@dataclass(frozen=True, eq=False)
class Spectrum:
    energies: np.ndarray
    vectors: np.ndarray | None = None

    @property
    def gap(self) -> float:
        return float(self.energies[1] - self.energies[0])


@dataclass(frozen=True)
class GapRecord:
    gap: float
    E1: float
    E2: float


def sign_gauge(v: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude component positive.

    Components within ``GAUGE_TIE_RTOL`` of the maximum count as tied and the
    lowest index wins, so mirror-related amplitudes do not flip the gauge on
    rounding noise.
    """
    a = np.abs(v)
    i = int(np.argmax(a >= a.max() * (1.0 - GAUGE_TIE_RTOL)))
    return v if v[i] >= 0 else -v


def _gauge_columns(vecs: np.ndarray) -> np.ndarray:
    a = np.abs(vecs)
    idx = np.argmax(a >= a.max(axis=0) * (1.0 - GAUGE_TIE_RTOL), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def is_near_degenerate(E1: float, E2: float) -> bool:
    return (E2 - E1) < DEGENERACY_RTOL * max(1.0, abs(E1))


def _matvec(H, v):
    if isinstance(H, TridiagonalHamiltonian):
        return H.matvec(v)
    return H @ v


def _pairs(H, energies, vectors) -> list[EigenPair]:
    out = []
    for E, v in zip(energies, vectors.T):
        v = np.ascontiguousarray(v)
        out.append(EigenPair(float(E), v, float(np.linalg.norm(_matvec(H, v) - E * v))))
    return out


def full_spectrum(H: TridiagonalHamiltonian, dense_cap: int = DENSE_CAP) -> Spectrum:
    """All eigenpairs of a tridiagonal Hamiltonian, ascending and gauge-fixed."""
    if H.dim > dense_cap:
        raise ValueError(f"L={H.dim} exceeds the dense cap {dense_cap}")
    try:
        w, v = sla.eigh_tridiagonal(H.diag, H.offdiag)
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise SolverError(f"tridiagonal eigensolver failed: {exc}") from exc
    return Spectrum(w, _gauge_columns(v))


def _norm_bound(H) -> float:
    """Cheap upper bound on the spectral norm (largest absolute row sum)."""
    if isinstance(H, TridiagonalHamiltonian):
        return float(np.max(np.abs(H.diag)) + 2 * np.max(np.abs(H.offdiag), initial=0.0))
    rows = np.abs(H.diagonal).copy()
    np.add.at(rows, H.rows, np.abs(H.values))
    np.add.at(rows, H.cols, np.abs(H.values))
    return float(rows.max())


def ground_pair(
    H: TridiagonalHamiltonian | SparseHamiltonian,
    k: int = 1,
    *,
    seed: int = DEFAULT_SEED,
    maxiter: int | None = None,
    dense_threshold: int = SPARSE_DENSE_THRESHOLD,
    warn: bool = True,
) -> list[EigenPair]:
    """The `k` lowest eigenpairs.

    Tridiagonal Hamiltonians use bisection plus inverse iteration on the
    requested window. Sector Hamiltonians above `dense_threshold` go through
    implicitly restarted Lanczos (ARPACK) touching the matrix only through
    products, with a start vector drawn from ``default_rng(seed)``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if H.dim < k:
        raise ValueError(f"dimension {H.dim} < k={k}")
    if isinstance(H, TridiagonalHamiltonian):
        try:
            w, v = sla.eigh_tridiagonal(H.diag, H.offdiag, select="i", select_range=(0, k - 1))
        except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
            raise SolverError(f"tridiagonal eigensolver failed: {exc}") from exc
        op = H
    elif isinstance(H, SparseHamiltonian):
        op = H.to_csr()
        if H.dim <= max(dense_threshold, k + 1):
            w, v = sla.eigh(op.toarray(), subset_by_index=[0, k - 1])
        else:
            v0 = np.random.default_rng(seed).standard_normal(H.dim)
            try:
                w, v = spla.eigsh(op, k=k, which="SA", v0=v0, tol=0, maxiter=maxiter)
            except spla.ArpackNoConvergence as exc:
                raise SolverError("Lanczos did not converge", maxiter or 10 * H.dim) from exc
            order = np.argsort(w)
            w, v = w[order], v[:, order]
    else:
        raise TypeError(f"unsupported Hamiltonian {type(H).__name__}")
    v = _gauge_columns(v / np.linalg.norm(v, axis=0))
    pairs = _pairs(op, w, v)
    # backward-stable solvers reach eps*|H|, so the contract scales with the norm
    scale = max(1.0, _norm_bound(H))
    for p in pairs:
        if p.residual > RESIDUAL_RTOL * scale:
            raise SolverError(f"residual {p.residual:.3e} above contract at E={p.energy:.6g}")
    if warn and k >= 2 and is_near_degenerate(pairs[0].energy, pairs[1].energy):
        warnings.warn(
            f"near-degenerate ground state: E2-E1={pairs[1].energy - pairs[0].energy:.3e}",
            NearDegeneracyWarning,
            stacklevel=2,
        )
    return pairs


def energy_gap(spec: ProbeSpec, **solver_kw) -> GapRecord:
    pairs = ground_pair(build_hamiltonian(spec), k=2, warn=False, **solver_kw)
    E1, E2 = pairs[0].energy, pairs[1].energy
    return GapRecord(gap=max(E2 - E1, 0.0), E1=E1, E2=E2)


def analytic_bloch(L: int, J: float = 1.0) -> Spectrum:
    """Closed-form open-chain spectrum at zero field.

    ``E_k = -2J cos(k pi/(L+1))`` with amplitudes
    ``sqrt(2/(L+1)) (-1)^j sin(j k pi/(L+1))``; vectors are returned gauge-fixed
    as columns so they compare entrywise with :func:`full_spectrum`.
    """
    if L < 2:
        raise ValueError(f"need L >= 2, got {L}")
    k = np.arange(1, L + 1)
    j = np.arange(1, L + 1)[:, None]
    energies = -2.0 * J * np.cos(k * np.pi / (L + 1))
    vecs = np.sqrt(2.0 / (L + 1)) * (-1.0) ** j * np.sin(j * k[None, :] * np.pi / (L + 1))
    return Spectrum(energies, _gauge_columns(vecs))


def inverse_participation_ratio(v: np.ndarray) -> float:
    p = np.abs(v) ** 2
    return float(np.sum(p**2) / np.sum(p) ** 2)


def lowest_energies(spec: ProbeSpec, k: int = 2, **solver_kw) -> np.ndarray:
    return np.array([p.energy for p in ground_pair(build_hamiltonian(spec), k=k, warn=False, **solver_kw)])


__all__: Sequence[str] = [
    "EigenPair",
    "GapRecord",
    "NearDegeneracyWarning",
    "SolverError",
    "Spectrum",
    "analytic_bloch",
    "energy_gap",
    "full_spectrum",
    "ground_pair",
    "inverse_participation_ratio",
    "is_near_degenerate",
    "lowest_energies",
    "sign_gauge",
]
