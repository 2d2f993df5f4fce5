"""Quantum and classical Fisher information of probe ground states.

Derivatives of the ground state are central differences of sign-gauged
eigenvectors. The step is adapted until the overlap deficit
``1 - |<psi(theta - d/2)|psi(theta + d/2)>|`` (which is ``~ d**2 F_Q / 8``)
lands inside a fixed window, so the same policy works whether the Fisher
information is 1e-5 or 1e30.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .models import (
    Family,
    Monomial,
    Parabolic,
    ProbeSpec,
    SparseHamiltonian,
    TridiagonalHamiltonian,
    build_hamiltonian,
    enumerate_half_filling,
)
from .spectral import GapRecord, analytic_bloch, ground_pair, is_near_degenerate, sign_gauge

PROBABILITY_FLOOR = 1e-14
# relative accuracy of a finite-difference Fisher entry at the top of the step window
FD_RTOL = 1e-4
NOISE_FLAG = 1e-3


class DegenerateGroundStateError(RuntimeError):
    pass


class StepSearchError(RuntimeError):
    pass


class IllConditionedBoundError(ValueError):
    def __init__(self, message: str, condition_number: float):
        super().__init__(f"{message} (condition number {condition_number:.3e})")
        self.condition_number = condition_number


class FisherKind(str, enum.Enum):
    QUANTUM = "quantum"
    CLASSICAL = "classical"


class Method(str, enum.Enum):
    PERTURBATIVE = "perturbative"
    FINITE_DIFFERENCE = "finite-difference"


class Povm(str, enum.Enum):
    POSITION = "position"
    SPIN_CONFIGURATION = "spin-configuration"


@dataclass(frozen=True)
class StepPolicy:
    relative: float = 1e-6
    floor: float = 1e-13
    window: tuple[float, float] = (1e-10, 1e-4)
    max_adjustments: int = 40
    step: float | None = None  # fixed step; disables adaptation

    def initial_step(self, theta: float) -> float:
        if self.step is not None:
            return float(self.step)
        return max(self.relative * abs(theta), self.floor)


@dataclass(frozen=True, eq=False)
class GroundState:
    spec: ProbeSpec
    vector: np.ndarray
    energy: float
    gap: float
    degenerate: bool
    norm_bound: float


@dataclass(frozen=True, eq=False)
class StateDerivative:
    direction: str
    step: float
    vector: np.ndarray
    projected: np.ndarray
    overlap_deficit: float
    minus: np.ndarray = field(repr=False)
    plus: np.ndarray = field(repr=False)
    adjustments: int = 0
    noise_ratio: float = 0.0


@dataclass(frozen=True, eq=False)
class FisherMatrix:
    entries: np.ndarray
    kind: FisherKind
    method: Method
    parameters: tuple[str, ...]
    steps: tuple[float, ...] = ()
    weak_commutativity_residual: float | None = None
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.entries, dtype=float))
        if F.shape[0] != F.shape[1] or not np.array_equal(F, F.T):
            raise ValueError("Fisher matrix must be square and exactly symmetric")
        object.__setattr__(self, "entries", F)

    @property
    def order(self) -> int:
        return self.entries.shape[0]

    def __getitem__(self, ij):
        return self.entries[ij]

    def is_psd(self, rtol: float = 1e-10) -> bool:
        w = np.linalg.eigvalsh(self.entries)
        return bool(w.min() >= -rtol * max(abs(w).max(), np.finfo(float).tiny))


def _symmetrize(F: np.ndarray) -> np.ndarray:
    upper = np.triu(F)
    return upper + np.triu(F, 1).T


# ---------------------------------------------------------------------------
# ground states and derivatives


def _norm_bound(H) -> float:
    if isinstance(H, TridiagonalHamiltonian):
        return float(np.max(np.abs(H.diag)) + 2 * np.max(np.abs(H.offdiag)))
    return float(np.max(np.abs(H.diagonal)) + (H.values.max(initial=0.0) * 2 * (len(H.diagonal) > 1)))


def ground_state(spec: ProbeSpec, k: int = 2) -> GroundState:
    H = build_hamiltonian(spec)
    pairs = ground_pair(H, k=min(k, H.dim), warn=False)
    E1 = pairs[0].energy
    gap = pairs[1].energy - E1 if len(pairs) > 1 else math.inf
    degenerate = len(pairs) > 1 and is_near_degenerate(E1, pairs[1].energy)
    return GroundState(spec, pairs[0].vector, E1, gap, degenerate, _norm_bound(H))


def _aligned_ground(spec: ProbeSpec, reference: np.ndarray) -> np.ndarray:
    v = ground_pair(build_hamiltonian(spec), k=1, warn=False)[0].vector
    # the sign gauge already fixes v; aligning with the centre state only matters
    # when the largest amplitude migrates between mirror sites within one step
    return v if np.dot(v, reference) >= 0 else -v


def differentiate_ground_state(
    spec: ProbeSpec,
    direction: str,
    policy: StepPolicy | None = None,
    *,
    allow_degenerate: bool = False,
    center: GroundState | None = None,
) -> StateDerivative:
    """Central-difference derivative of the ground state along one field parameter."""
    policy = policy or StepPolicy()
    center = center or ground_state(spec)
    if center.degenerate and not allow_degenerate:
        raise DegenerateGroundStateError(
            f"ground state is near-degenerate (gap {center.gap:.3e}); opt in with allow_degenerate"
        )
    theta = spec.value(direction)
    psi = center.vector
    lo, hi = policy.window
    target = math.sqrt(lo * hi)
    delta = policy.initial_step(theta)
    adjustments = 0
    while True:
        a = _aligned_ground(spec.with_value(direction, theta - delta / 2), psi)
        b = _aligned_ground(spec.with_value(direction, theta + delta / 2), psi)
        deficit = 1.0 - abs(float(np.vdot(a, b)))
        if policy.step is not None or lo <= deficit <= hi:
            break
        if deficit > hi:
            n = max(1, math.ceil(0.5 * math.log2(deficit / target)))
            delta /= 2.0**n
        elif deficit <= 0.0:
            n = 2
            delta *= 4.0
        else:
            n = max(1, round(0.5 * math.log2(target / deficit)))
            delta *= 2.0**n
        adjustments += n
        if adjustments > policy.max_adjustments:
            raise StepSearchError(
                f"no step for {direction}={theta:.6g} lands the overlap deficit in "
                f"[{lo:g}, {hi:g}] within {policy.max_adjustments} halvings/doublings "
                f"(last deficit {deficit:.3e})"
            )
    dpsi = (b - a) / delta
    projected = dpsi - np.vdot(psi, dpsi) * psi
    eps = np.finfo(float).eps
    noise = eps * max(center.norm_bound, 1.0) / max(center.gap, eps) / delta
    noise_ratio = noise / max(float(np.linalg.norm(projected)), np.finfo(float).tiny)
    return StateDerivative(direction, delta, dpsi, projected, deficit, a, b, adjustments, noise_ratio)


# ---------------------------------------------------------------------------
# Fisher information


def qfi_scalar(psi: np.ndarray, dpsi: np.ndarray) -> float:
    """``4 [<dpsi|dpsi> - |<psi|dpsi>|^2]`` for a normalised pure state."""
    val = 4.0 * (np.vdot(dpsi, dpsi).real - abs(np.vdot(psi, dpsi)) ** 2)
    return max(float(val), 0.0)


def qfi_from_derivatives(psi: np.ndarray, dpsis: Sequence[np.ndarray]) -> np.ndarray:
    """Pure-state QFI matrix ``4 Re[<d_i|d_j> - <d_i|psi><psi|d_j>]``.

    With the real gauge-fixed vectors used here the real part is a no-op; it is
    kept so complex states work unchanged.
    """
    p = len(dpsis)
    F = np.zeros((p, p))
    for i in range(p):
        for j in range(i, p):
            F[i, j] = 4.0 * (
                np.vdot(dpsis[i], dpsis[j]) - np.vdot(dpsis[i], psi) * np.vdot(psi, dpsis[j])
            ).real
    return _symmetrize(F)


def cfi_from_probabilities(p: np.ndarray, dps: Sequence[np.ndarray], floor: float = PROBABILITY_FLOOR) -> np.ndarray:
    """``sum_k dp_i dp_j / p`` over outcomes with ``p_k >= floor``."""
    keep = p >= floor
    q = p[keep]
    d = [dp[keep] for dp in dps]
    F = np.zeros((len(d), len(d)))
    for i in range(len(d)):
        for j in range(i, len(d)):
            F[i, j] = float(np.sum(d[i] * d[j] / q))
    return _symmetrize(F)


def _check_povm(spec: ProbeSpec, povm: Povm) -> None:
    povm = Povm(povm)
    if (spec.family is Family.SINGLE_PARTICLE) != (povm is Povm.POSITION):
        raise ValueError(f"POVM {povm.value} does not match a {spec.family.value} probe")


@dataclass(frozen=True, eq=False)
class FisherBundle:
    """QFI and (optionally) CFI computed from one set of state derivatives."""

    quantum: FisherMatrix
    classical: FisherMatrix | None
    center: GroundState
    derivatives: tuple[StateDerivative, ...]


def fisher_information(
    spec: ProbeSpec,
    policy: StepPolicy | None = None,
    *,
    povm: Povm | str | None = None,
    allow_degenerate: bool = False,
    parameters: Sequence[str] | None = None,
) -> FisherBundle:
    parameters = tuple(parameters or spec.parameters)
    if povm is not None:
        _check_povm(spec, Povm(povm))
    center = ground_state(spec)
    ders = tuple(
        differentiate_ground_state(spec, name, policy, allow_degenerate=allow_degenerate, center=center)
        for name in parameters
    )
    psi = center.vector
    flags = []
    if center.degenerate:
        flags.append("degenerate")
    if max(d.noise_ratio for d in ders) > NOISE_FLAG:
        flags.append("noisy-derivative")
    steps = tuple(d.step for d in ders)
    residual = None
    if len(ders) == 2:
        residual = abs(sld_pair(psi, ders[0].vector, ders[1].vector).trace_commutator)
    FQ = FisherMatrix(
        qfi_from_derivatives(psi, [d.vector for d in ders]),
        FisherKind.QUANTUM, Method.FINITE_DIFFERENCE, parameters, steps, residual, tuple(flags),
    )
    FC = None
    if povm is not None:
        p = np.abs(psi) ** 2
        dps = [(np.abs(d.plus) ** 2 - np.abs(d.minus) ** 2) / d.step for d in ders]
        FC = FisherMatrix(
            cfi_from_probabilities(p, dps), FisherKind.CLASSICAL, Method.FINITE_DIFFERENCE,
            parameters, steps, None, tuple(flags),
        )
    return FisherBundle(FQ, FC, center, ders)


def qfi_finite_difference(spec: ProbeSpec, policy: StepPolicy | None = None, *, allow_degenerate: bool = False) -> FisherMatrix:
    return fisher_information(spec, policy, allow_degenerate=allow_degenerate).quantum


def qfi_matrix(spec: ProbeSpec, policy: StepPolicy | None = None, *, allow_degenerate: bool = False) -> FisherMatrix:
    """2x2 QFI matrix in ``(h1, h2)`` for a parabolic probe."""
    if not isinstance(spec.potential, Parabolic):
        raise ValueError("qfi_matrix needs a parabolic potential")
    return fisher_information(spec, policy, allow_degenerate=allow_degenerate).quantum


def cfi_matrix(
    spec: ProbeSpec,
    povm: Povm | str,
    policy: StepPolicy | None = None,
    *,
    allow_degenerate: bool = False,
) -> FisherMatrix:
    """CFI of a projective measurement in the site basis (or spin-configuration basis)."""
    return fisher_information(spec, policy, povm=povm, allow_degenerate=allow_degenerate).classical


class PerturbativeQFI(NamedTuple):
    value: float
    lower_bound: float


def qfi_perturbative(spec: ProbeSpec) -> PerturbativeQFI:
    """Zero-field QFI of a single-particle monomial probe from the Bloch spectrum.

    ``F = 4/(J^2 (L+1)^2) * sum_{k>=2} N(k)/D(k)`` with
    ``N(k) = [sum_i i^gamma sin(i k pi/(L+1)) sin(i pi/(L+1))]^2`` and
    ``D(k) = [cos(k pi/(L+1)) - cos(pi/(L+1))]^2``; the ``k = 2`` term alone is
    returned as ``lower_bound``.
    """
    if spec.family is not Family.SINGLE_PARTICLE:
        raise NotImplementedError("no closed spectrum for the many-body probe")
    if not isinstance(spec.potential, Monomial):
        raise ValueError("qfi_perturbative needs a monomial potential")
    L, J, g = spec.L, spec.J, spec.potential.gamma
    q = np.pi / (L + 1)
    i = np.arange(1, L + 1, dtype=float)
    k = np.arange(2, L + 1, dtype=float)
    amp = (i**g * np.sin(i * q))[None, :] * np.sin(np.outer(k, i) * q)
    N = amp.sum(axis=1) ** 2
    D = (np.cos(k * q) - np.cos(q)) ** 2
    pref = 4.0 / (J**2 * (L + 1) ** 2)
    return PerturbativeQFI(float(pref * np.sum(N / D)), float(pref * N[0] / D[0]))


def qfi_perturbative_matrix_elements(spec: ProbeSpec) -> float:
    """Same zero-field QFI via explicit matrix elements on the Bloch vectors."""
    bloch = analytic_bloch(spec.L, spec.J)
    H1 = np.arange(1, spec.L + 1, dtype=float) ** spec.potential.gamma
    m = bloch.vectors.T @ (H1 * bloch.vectors[:, 0])
    dE = bloch.energies[1:] - bloch.energies[0]
    return float(4.0 * np.sum(m[1:] ** 2 / dE**2))


# ---------------------------------------------------------------------------
# SLD operators and precision bounds


@dataclass(frozen=True, eq=False)
class SldPair:
    """Pure-state SLDs ``L_i = 2(|d_i><psi| + |psi><d_i|)``."""

    psi: np.ndarray
    d1: np.ndarray
    d2: np.ndarray

    def _apply(self, d: np.ndarray, v: np.ndarray) -> np.ndarray:
        return 2.0 * (d * np.vdot(self.psi, v) + self.psi * np.vdot(d, v))

    @property
    def trace_commutator(self) -> complex:
        """``Tr(rho [L1, L2]) = <L1 psi|L2 psi> - <L2 psi|L1 psi>``."""
        u1 = self._apply(self.d1, self.psi)
        u2 = self._apply(self.d2, self.psi)
        return complex(np.vdot(u1, u2) - np.vdot(u2, u1))

    def operators(self) -> tuple[np.ndarray, np.ndarray]:
        psi = self.psi
        L1 = 2.0 * (np.outer(self.d1, psi.conj()) + np.outer(psi, self.d1.conj()))
        L2 = 2.0 * (np.outer(self.d2, psi.conj()) + np.outer(psi, self.d2.conj()))
        return L1, L2

    def sld_residuals(self) -> tuple[float, float]:
        """``max |d rho - (rho L + L rho)/2|`` for each operator."""
        rho = np.outer(self.psi, self.psi.conj())
        out = []
        for d, Lop in zip((self.d1, self.d2), self.operators()):
            drho = np.outer(d, self.psi.conj()) + np.outer(self.psi, d.conj())
            out.append(float(np.max(np.abs(drho - 0.5 * (rho @ Lop + Lop @ rho)))))
        return out[0], out[1]

    def commutator_norm(self) -> float:
        L1, L2 = self.operators()
        return float(np.linalg.norm(L1 @ L2 - L2 @ L1, 2))


def sld_pair(psi: np.ndarray, dpsi1: np.ndarray, dpsi2: np.ndarray) -> SldPair:
    """SLD pair built from derivatives projected orthogonal to `psi`."""
    d1 = dpsi1 - np.vdot(psi, dpsi1) * psi
    d2 = dpsi2 - np.vdot(psi, dpsi2) * psi
    return SldPair(psi, d1, d2)


def total_uncertainty(F: FisherMatrix | np.ndarray, W: np.ndarray | None = None, max_condition: float = 1e14) -> float:
    """Weighted bound ``Tr[W F^-1]`` (identity weights by default)."""
    M = F.entries if isinstance(F, FisherMatrix) else np.atleast_2d(np.asarray(F, dtype=float))
    p = M.shape[0]
    W = np.eye(p) if W is None else np.atleast_2d(np.asarray(W, dtype=float))
    w = np.linalg.eigvalsh(M)
    cond = math.inf if w.min() <= 0 else float(w.max() / w.min())
    if w.min() <= 0 or cond > max_condition:
        raise IllConditionedBoundError("Fisher matrix is not safely positive definite", cond)
    if p == 1:
        return float(W[0, 0] / M[0, 0])
    if p == 2:
        det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        inv = np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]]) / det
        return float(np.trace(W @ inv))
    return float(np.trace(W @ np.linalg.inv(M)))


def time_normalized(F: FisherMatrix, gap: GapRecord | float) -> FisherMatrix:
    """``F / t`` with preparation time ``t = 1/gap`` (energy units, prefactor 1)."""
    g = gap.gap if isinstance(gap, GapRecord) else float(gap)
    if not g > 0:
        raise ValueError(f"cannot normalise by a non-positive gap ({g})")
    return replace(F, entries=F.entries * g, flags=F.flags + ("time-normalized",))
