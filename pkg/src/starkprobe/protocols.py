"""Measurement protocols: field scans, peak tracking and exponent pipelines.

Each function here turns a family of probes into the numbers that scaling
analyses consume. They are shared by the command line runner and the
acceptance checks, so grids and windows are explicit arguments.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .fisher import (
    DegenerateGroundStateError,
    FisherMatrix,
    IllConditionedBoundError,
    StepPolicy,
    StepSearchError,
    fisher_information,
    ground_state,
    time_normalized,
    total_uncertainty,
)
from .models import Family, Monomial, Parabolic, ProbeSpec
from .scaling import (
    CollapseResult,
    CurveFamily,
    FitResult,
    PeakResult,
    collapse,
    crossover_field,
    find_peak,
    fit_beta_gamma,
    fit_decay_exponent,
    fit_power_law,
)
from .spectral import NearDegeneracyWarning, SolverError, energy_gap

PLATEAU_RTOL = 1e-6
SOLVER_ERRORS = (SolverError, StepSearchError, DegenerateGroundStateError, np.linalg.LinAlgError, ArithmeticError)


def log_grid(start: float, stop: float, per_decade: int) -> np.ndarray:
    """Log-spaced grid with `per_decade` points per decade, endpoints included."""
    n = max(2, int(round(per_decade * math.log10(stop / start))) + 1)
    return np.logspace(math.log10(start), math.log10(stop), n)


@dataclass(frozen=True)
class FisherPoint:
    """Fisher data at one field point; ``flag`` is empty when the point is clean."""

    field: float
    quantum: np.ndarray | None
    classical: np.ndarray | None
    gap: float
    step: tuple[float, ...]
    weak_residual: float | None
    flag: str

    @property
    def ok(self) -> bool:
        return not self.flag


def fisher_point(
    spec: ProbeSpec,
    *,
    povm: str | None = None,
    policy: StepPolicy | None = None,
    allow_degenerate: bool = False,
) -> FisherPoint:
    """Fisher matrices at `spec`, with solver failures folded into the flag."""
    x = spec.value(spec.parameters[-1])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearDegeneracyWarning)
        try:
            b = fisher_information(spec, policy, povm=povm, allow_degenerate=allow_degenerate)
        except DegenerateGroundStateError:
            return FisherPoint(x, None, None, 0.0, (), None, "degenerate")
        except StepSearchError:
            # expected where the two lowest levels merge; a genuine failure elsewhere
            center = ground_state(spec)
            flag = "degenerate;step-search" if center.degenerate else "step-search"
            return FisherPoint(x, None, None, center.gap, (), None, flag)
        except SOLVER_ERRORS:
            return FisherPoint(x, None, None, math.nan, (), None, "solver")
    C = None if b.classical is None else b.classical.entries
    return FisherPoint(
        x, b.quantum.entries, C, float(b.center.gap), b.quantum.steps,
        b.quantum.weak_commutativity_residual, ";".join(b.quantum.flags),
    )


def monomial_spec(L: int, gamma: float, h: float, family: Family | str = Family.SINGLE_PARTICLE) -> ProbeSpec:
    return ProbeSpec(L, Monomial(float(h), float(gamma)), Family(family))


def line_spec(L: int, h2: float, offset: float = 1.0, family: Family | str = Family.SINGLE_PARTICLE) -> ProbeSpec:
    """Parabolic probe on the line ``h1 = offset * h2 * (L - 1)``; ``offset = 1`` is mirror symmetric."""
    return ProbeSpec(L, Parabolic(offset * float(h2) * (L - 1), float(h2)), Family(family))


# ---------------------------------------------------------------------------
# single-parameter curves


@dataclass(frozen=True, eq=False)
class QfiCurve:
    L: int
    h: np.ndarray
    qfi: np.ndarray
    flags: tuple[str, ...]
    steps: np.ndarray

    def clean(self) -> tuple[np.ndarray, np.ndarray]:
        ok = np.array([not f for f in self.flags]) & np.isfinite(self.qfi) & (self.qfi > 0)
        return self.h[ok], self.qfi[ok]


def qfi_value(L: int, gamma: float, h: float, family=Family.SINGLE_PARTICLE, policy=None) -> float:
    p = fisher_point(monomial_spec(L, gamma, h, family), policy=policy)
    return float(p.quantum[0, 0]) if p.quantum is not None else math.nan


def qfi_curve(L: int, gamma: float, hs: Sequence[float], family=Family.SINGLE_PARTICLE, policy=None) -> QfiCurve:
    vals, flags, steps = [], [], []
    for h in hs:
        p = fisher_point(monomial_spec(L, gamma, h, family), policy=policy)
        vals.append(p.quantum[0, 0] if p.quantum is not None else math.nan)
        flags.append(p.flag)
        steps.append(p.step[0] if p.step else math.nan)
    return QfiCurve(L, np.asarray(hs, float), np.asarray(vals), tuple(flags), np.asarray(steps))


@dataclass(frozen=True)
class CurvePeak:
    peak: PeakResult
    plateau: bool
    crossover: float | None


def curve_peak(curve: QfiCurve, evaluator: Callable[[float], float] | None = None) -> CurvePeak:
    """Peak of a QFI curve.

    Curves that are monotone from the smallest field (a zero-field plateau)
    report the left edge as the maximum and carry the half-maximum crossover
    as their characteristic field instead.
    """
    h, F = curve.clean()
    if F[0] >= (1.0 - PLATEAU_RTOL) * F.max():
        # rounding ripples on a flat plateau must not pose as an interior peak
        pk = PeakResult(float(h[0]), float(F.max()), True, False, 0)
    else:
        pk = find_peak(h, F, evaluator)
    plateau = pk.at_boundary and pk.index == 0
    try:
        hx = crossover_field(h, F)
    except ValueError:
        hx = None
    return CurvePeak(pk, plateau, hx)


def peak_qfi(L: int, gamma: float, hs, family=Family.SINGLE_PARTICLE, refine: bool = True) -> CurvePeak:
    curve = qfi_curve(L, gamma, hs, family)
    ev = (lambda x: qfi_value(L, gamma, x, family)) if refine else None
    return curve_peak(curve, ev)


@dataclass(frozen=True)
class BetaScan:
    gamma: float
    Ls: tuple[int, ...]
    values: tuple[float, ...]
    fit: FitResult


def beta_exponent(
    gamma: float,
    Ls: Sequence[int],
    *,
    family=Family.SINGLE_PARTICLE,
    mode: str = "peak",
    hs=None,
    h_fixed: float = 1e-6,
    bootstrap: int = 0,
) -> BetaScan:
    """``F ~ L^beta`` from the peak QFI (``mode='peak'``) or at one field (``'fixed'``)."""
    vals = []
    for L in Ls:
        if mode == "peak":
            vals.append(peak_qfi(L, gamma, hs if hs is not None else log_grid(1e-14, 1e-1, 20), family).peak.value)
        elif mode == "fixed":
            vals.append(qfi_value(L, gamma, h_fixed, family))
        else:
            raise ValueError(f"unknown beta mode {mode!r}")
    fit = fit_power_law(x=np.asarray(Ls, float), y=np.asarray(vals), bootstrap=bootstrap)
    return BetaScan(float(gamma), tuple(int(L) for L in Ls), tuple(vals), fit)


def beta_gamma_law(gammas, Ls, *, bootstrap: int = 200, **kw) -> tuple[FitResult, list[BetaScan]]:
    scans = [beta_exponent(g, Ls, bootstrap=bootstrap, **kw) for g in gammas]
    return fit_beta_gamma([(s.gamma, s.fit.slope) for s in scans], bootstrap=bootstrap), scans


def decay_exponent(curve: QfiCurve, *, window=(3.0, 1e3)) -> FitResult:
    """Localized-tail exponent of one QFI curve; ``meta['alpha']`` holds alpha."""
    h, F = curve.clean()
    cp = curve_peak(curve)
    return fit_decay_exponent(h, F, cp.peak.h_max, window=window)


def collapse_curves(curves: Sequence[QfiCurve], init=(1e-12, 2.0, 0.25), *, restarts: int = 3, seed: int = 0) -> CollapseResult:
    fam = CurveFamily(tuple((c.L, *c.clean()) for c in curves))
    return collapse(fam, init, restarts=restarts, seed=seed)


# ---------------------------------------------------------------------------
# two-parameter (parabolic) scans


@dataclass(frozen=True, eq=False)
class LineScan:
    L: int
    offset: float
    points: tuple[FisherPoint, ...]

    def entries(self, kind: str = "quantum") -> tuple[np.ndarray, np.ndarray]:
        """Clean field values and the stacked ``(n, 2, 2)`` matrices."""
        sel = [p for p in self.points if p.ok and getattr(p, kind) is not None]
        return np.array([p.field for p in sel]), np.array([getattr(p, kind) for p in sel])


def line_scan(
    L: int,
    h2s: Sequence[float],
    *,
    offset: float = 1.0,
    family=Family.SINGLE_PARTICLE,
    povm: str | None = None,
) -> LineScan:
    """Fisher matrices along ``h1 = offset * h2 (L-1)``.

    The mirror-symmetric line is allowed to approach degeneracy; such points
    are kept but flagged and never used for peaks.
    """
    pts = tuple(
        fisher_point(line_spec(L, h, offset, family), povm=povm, allow_degenerate=True) for h in h2s
    )
    return LineScan(L, offset, pts)


ENTRY_INDEX = {"11": (0, 0), "22": (1, 1), "12": (0, 1)}


def line_peaks(scan: LineScan, kind: str = "quantum") -> dict[str, float]:
    """Largest ``|F_ij|`` over the clean points of a line scan, per entry."""
    _, M = scan.entries(kind)
    if not len(M):
        raise ValueError(f"L={scan.L}: no clean points on the line")
    return {k: float(np.max(np.abs(M[:, i, j]))) for k, (i, j) in ENTRY_INDEX.items()}


def entry_exponents(Ls: Sequence[int], peaks: Sequence[dict[str, float]], *, bootstrap: int = 0) -> dict[str, FitResult]:
    x = np.asarray(Ls, float)
    return {k: fit_power_law(x=x, y=[p[k] for p in peaks], bootstrap=bootstrap) for k in ENTRY_INDEX}


def trace_inverse(F: np.ndarray) -> float:
    try:
        return total_uncertainty(F)
    except IllConditionedBoundError:
        return math.nan


@dataclass(frozen=True)
class TraceMinimum:
    L: int
    h2: float
    trace_inv: float
    quantum: np.ndarray
    gap: float


def minimum_trace_inverse(scan: LineScan) -> TraceMinimum:
    best = None
    for p in scan.points:
        if not p.ok or p.quantum is None:
            continue
        t = trace_inverse(p.quantum)
        if math.isfinite(t) and (best is None or t < best.trace_inv):
            best = TraceMinimum(scan.L, p.field, t, p.quantum, p.gap)
    if best is None:
        raise ValueError(f"L={scan.L}: Tr F^-1 undefined on every scanned point")
    return best


def normalized_exponents(records: Sequence[tuple[int, np.ndarray, float]]) -> dict[str, FitResult]:
    """Exponents of ``|F_ij| * gap`` versus L from ``(L, F, gap)`` records."""
    Ls = [r[0] for r in records]
    peaks = []
    for _, F, g in records:
        Fn = time_normalized(FisherMatrix(F, "quantum", "finite-difference", ("h1", "h2")), g).entries
        peaks.append({k: abs(float(Fn[i, j])) for k, (i, j) in ENTRY_INDEX.items()})
    return entry_exponents(Ls, peaks)


# ---------------------------------------------------------------------------
# gaps


def gap_at(L: int, h1: float, h2: float, family=Family.SINGLE_PARTICLE) -> float:
    return energy_gap(ProbeSpec(L, Parabolic(float(h1), float(h2)), Family(family))).gap


def gap_exponent(Ls: Sequence[int], fields: Callable[[int], tuple[float, float]], family=Family.SINGLE_PARTICLE, **kw) -> FitResult:
    """Log-log slope of the gap versus L; ``z = -slope``."""
    gaps = [gap_at(L, *fields(L), family=family) for L in Ls]
    return fit_power_law(x=np.asarray(Ls, float), y=gaps, **kw)


def offset_line_transition(L: int, h2s: Sequence[float], offset: float = 1.1) -> tuple[float, float]:
    """Field ``h2`` of the smallest gap along the offset line, and that gap."""
    g = np.array([gap_at(L, offset * h * (L - 1), h) for h in h2s])
    j = int(np.argmin(g))
    return float(h2s[j]), float(g[j])

