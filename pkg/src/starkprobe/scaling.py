"""Exponent extraction: power-law and linear fits, tail decay, peaks and data collapse."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import optimize, stats


class CollapseError(ValueError):
    pass


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    stderr_slope: float
    stderr_intercept: float
    r_squared: float
    n_points: int
    meta: dict = field(default_factory=dict, compare=False)

    def as_dict(self, scenario: str) -> dict:
        return {
            "scenario": scenario,
            "slope": self.slope,
            "intercept": self.intercept,
            "stderr_slope": self.stderr_slope,
            "stderr_intercept": self.stderr_intercept,
            "r2": self.r_squared,
            "n": self.n_points,
        }


def fit_linear(x, y, *, bootstrap: int = 0, seed: int = 0, min_points: int = 3) -> FitResult:
    """Ordinary least squares ``y = slope*x + intercept``.

    With ``bootstrap > 0`` the reported standard errors are the spread of
    pair-resampled refits (fixed `seed`); otherwise the analytic OLS errors.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise ValueError("x and y differ in length")
    if len(x) < min_points:
        raise ValueError(f"need at least {min_points} points, got {len(x)}")
    if np.ptp(x) == 0:
        raise ValueError("degenerate abscissae: all x are equal")
    res = stats.linregress(x, y)
    se_s, se_i = float(res.stderr), float(res.intercept_stderr)
    if len(x) == 2:
        se_s = se_i = 0.0
    r2 = min(max(float(res.rvalue) ** 2, 0.0), 1.0)
    if bootstrap:
        rng = np.random.default_rng(seed)
        draws = []
        for _ in range(bootstrap):
            idx = rng.integers(0, len(x), len(x))
            if np.ptp(x[idx]) == 0:
                continue
            s, c = np.polyfit(x[idx], y[idx], 1)
            draws.append((s, c))
        draws = np.array(draws)
        se_s, se_i = (float(v) for v in draws.std(axis=0, ddof=1))
    return FitResult(float(res.slope), float(res.intercept), se_s, se_i, r2, len(x))


def fit_power_law(points: Iterable[tuple[float, float]] | None = None, *, x=None, y=None, **kw) -> FitResult:
    """Straight line through ``(ln x, ln y)``; the slope is the exponent."""
    if points is not None:
        x, y = np.asarray(list(points), dtype=float).T
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs strictly positive data")
    return fit_linear(np.log(x), np.log(y), **kw)


def fit_beta_gamma(betas: Iterable[tuple[float, float]], **kw) -> FitResult:
    """``beta = a*gamma + b`` from ``(gamma, beta)`` pairs."""
    g, b = np.asarray(list(betas), dtype=float).T
    return fit_linear(g, b, **kw)


def fit_inverse_nu(points: Iterable[tuple[float, float]], **kw) -> FitResult:
    """``1/nu = a*gamma + b`` from ``(gamma, 1/nu)`` pairs."""
    g, v = np.asarray(list(points), dtype=float).T
    return fit_linear(g, v, **kw)


# ---------------------------------------------------------------------------
# peaks and tails


@dataclass(frozen=True)
class PeakResult:
    h_max: float
    value: float
    at_boundary: bool
    refined: bool
    index: int


def find_peak(h, F, evaluator: Callable[[float], float] | None = None, *, xtol: float = 1e-4) -> PeakResult:
    """Grid argmax (ties toward smaller h), refined by golden section in ``log h``.

    A maximum on the first or last grid point is returned unrefined with
    ``at_boundary`` set; the caller decides whether to extend the grid.
    """
    h = np.asarray(h, dtype=float)
    F = np.asarray(F, dtype=float)
    finite = np.isfinite(F)
    if not finite.any():
        raise ValueError("no finite samples")
    j = int(np.argmax(np.where(finite, F, -np.inf)))
    if j == 0 or j == len(h) - 1:
        return PeakResult(float(h[j]), float(F[j]), True, False, j)
    if evaluator is None:
        return PeakResult(float(h[j]), float(F[j]), False, False, j)
    lh = np.log(h)
    res = optimize.minimize_scalar(
        lambda t: -evaluator(float(np.exp(t))),
        bracket=(lh[j - 1], lh[j], lh[j + 1]),
        method="golden",
        options={"xtol": xtol},
    )
    if -res.fun >= F[j]:
        return PeakResult(float(np.exp(res.x)), float(-res.fun), False, True, j)
    return PeakResult(float(h[j]), float(F[j]), False, False, j)


def crossover_field(h, F, fraction: float = 0.5) -> float:
    """First field beyond the maximum where ``F`` falls below ``fraction * max``."""
    h = np.asarray(h, dtype=float)
    F = np.asarray(F, dtype=float)
    j = int(np.nanargmax(F))
    below = np.nonzero(F[j:] < fraction * F[j])[0]
    if not len(below):
        raise ValueError("curve never drops below the requested fraction of its maximum")
    return float(h[j + below[0]])


def fit_decay_exponent(h, F, h_max: float, *, scale: float | None = None, window=(3.0, 1e3), min_points: int = 5) -> FitResult:
    """Tail exponent ``alpha`` of ``F ~ |h - h_max|^-alpha``.

    Samples with ``window[0]*scale <= h - h_max <= window[1]*scale`` are used;
    `scale` defaults to the larger of ``h_max`` and the half-maximum crossover,
    since on monotone curves the maximum sits at the grid edge. The returned
    slope is the log-log slope, ``meta['alpha'] = -slope``.
    """
    h = np.asarray(h, dtype=float)
    F = np.asarray(F, dtype=float)
    if scale is None:
        scale = max(abs(h_max), crossover_field(h, F))
    d = h - h_max
    sel = (d >= window[0] * scale) & (d <= window[1] * scale) & np.isfinite(F) & (F > 0)
    if sel.sum() < min_points:
        raise ValueError(f"only {int(sel.sum())} tail points inside the fit window; need {min_points}")
    fit = fit_power_law(x=d[sel], y=F[sel])
    return FitResult(
        fit.slope, fit.intercept, fit.stderr_slope, fit.stderr_intercept, fit.r_squared, fit.n_points,
        {"alpha": -fit.slope, "window": (window[0] * scale, window[1] * scale), "h_max": h_max},
    )


# ---------------------------------------------------------------------------
# finite-size-scaling collapse


@dataclass(frozen=True, eq=False)
class CurveFamily:
    """Curves ``y(h)`` for several sizes ``L``."""

    members: tuple[tuple[int, np.ndarray, np.ndarray], ...]

    def __post_init__(self):
        members = []
        for L, h, y in self.members:
            h = np.asarray(h, dtype=float)
            y = np.asarray(y, dtype=float)
            if h.shape != y.shape:
                raise ValueError(f"L={L}: h and y differ in length")
            if np.any(np.diff(h) <= 0):
                raise ValueError(f"L={L}: h must be strictly increasing")
            if np.any(~(y > 0)):
                raise ValueError(f"L={L}: y must be positive")
            members.append((int(L), h, y))
        if len(members) < 3:
            raise ValueError("collapse needs at least three sizes")
        object.__setattr__(self, "members", tuple(members))

    @classmethod
    def from_arrays(cls, Ls: Sequence[int], hs: Sequence, ys: Sequence) -> "CurveFamily":
        return cls(tuple(zip(Ls, hs, ys)))


@dataclass(frozen=True)
class CollapseResult:
    h_c: float
    alpha: float
    nu: float
    quality: float
    iterations: int
    stagnated: bool = False
    init_quality: float = float("nan")
    baseline: float = float("nan")
    bootstrap_stderr: dict | None = None


def _scaled(family: CurveFamily, h_c: float, alpha: float, nu: float, unscaled: bool = False):
    out = []
    for L, h, y in family.members:
        x = h - h_c
        keep = x > 0
        if unscaled:
            out.append((np.log(x[keep]), np.log(y[keep])))
        else:
            out.append((np.log(x[keep]) + np.log(L) / nu, np.log(y[keep]) - (alpha / nu) * np.log(L)))
    return out


def _deviation(curves) -> tuple[float, int]:
    total, count = 0.0, 0
    for j, (lx, ly) in enumerate(curves):
        if len(lx) == 0:
            continue
        others = [c for m, c in enumerate(curves) if m != j and len(c[0]) >= 2]
        if not others:
            continue
        # master curve from every other size, pooled and sorted in log-log
        px = np.concatenate([c[0] for c in others])
        py = np.concatenate([c[1] for c in others])
        order = np.argsort(px, kind="stable")
        px, py = px[order], py[order]
        # outside every other curve's range the point cannot be cross-checked
        inside = np.zeros(len(lx), bool)
        for c in others:
            inside |= (lx >= c[0][0]) & (lx <= c[0][-1])
        if not inside.any():
            continue
        ref = np.interp(lx[inside], px, py)
        total += float(np.sum((ly[inside] - ref) ** 2))
        count += int(inside.sum())
    return total, count


def collapse_quality(family: CurveFamily, h_c: float, alpha: float, nu: float) -> float:
    """Mean squared log-log deviation of each scaled curve from the others' master curve."""
    if not nu > 0:
        return np.inf
    total, count = _deviation(_scaled(family, h_c, alpha, nu))
    if count == 0:
        raise CollapseError("no abscissa overlap after scaling")
    return total / count


def baseline_quality(family: CurveFamily) -> float:
    total, count = _deviation(_scaled(family, 0.0, 0.0, 1.0, unscaled=True))
    if count == 0:
        raise CollapseError("curves do not overlap even unscaled")
    return total / count


def estimate_exponents(family: CurveFamily) -> tuple[float, float]:
    """Rough ``(alpha, nu)`` from how the maxima and half-maximum fields move with L.

    ``max y ~ L^(alpha/nu)`` and the crossover field ``~ L^(-1/nu)``; the
    result only seeds the collapse search.
    """
    Ls, tops, cross = [], [], []
    for L, h, y in family.members:
        try:
            hx = crossover_field(h, y)
        except ValueError:
            continue
        Ls.append(L)
        tops.append(float(y.max()))
        cross.append(hx)
    if len(Ls) < 2 or np.ptp(np.log(Ls)) == 0:
        raise CollapseError("too few curves with a half-maximum crossover")
    lL = np.log(Ls)
    inv_nu = -np.polyfit(lL, np.log(cross), 1)[0]
    ratio = np.polyfit(lL, np.log(tops), 1)[0]
    if not inv_nu > 0:
        raise CollapseError("crossover fields do not shrink with size")
    return float(ratio / inv_nu), float(1.0 / inv_nu)


POLISH_ROUNDS = 8


def collapse(
    family: CurveFamily,
    init: tuple[float, float, float],
    *,
    restarts: int = 3,
    seed: int = 0,
    maxiter: int = 4000,
    hc_scale: float | None = None,
    fix_hc: bool = False,
    auto_seed: bool = True,
) -> CollapseResult:
    """Fit ``(h_c, alpha, nu)`` of ``y = L^(alpha/nu) G(L^(1/nu) (h - h_c))``.

    Nelder-Mead on the collapse quality, started from `init`, from the
    data-driven estimate of :func:`estimate_exponents` (when `auto_seed`)
    and from `restarts` perturbed copies of each; the best optimum wins. ``h_c`` is
    optimised in units of `hc_scale` (default: ``|init h_c|`` or the smallest
    positive field in the data).
    """
    h0, a0, n0 = (float(v) for v in init)
    if hc_scale is None:
        hmin = min(float(h[h > 0].min()) for _, h, _ in family.members)
        hc_scale = abs(h0) if h0 != 0 else hmin

    # search in (h_c, alpha/nu, 1/nu): the y and x exponents decouple there
    def unpack(p):
        hc = h0 if fix_hc else p[0] * hc_scale
        ratio, inv = (p[0], p[1]) if fix_hc else (p[1], p[2])
        return hc, ratio / inv if inv != 0 else np.nan, 1.0 / inv if inv > 0 else np.nan

    def objective(p):
        hc, a, n = unpack(p)
        if not n > 0:
            return np.inf
        try:
            return collapse_quality(family, hc, a, n)
        except CollapseError:
            return np.inf

    exps = [a0 / n0, 1.0 / n0]
    start = np.array(exps) if fix_hc else np.array([h0 / hc_scale, *exps])
    init_q = objective(start)
    if not np.isfinite(init_q):
        raise CollapseError("no abscissa overlap at the initial guess")
    seeds = [start]
    if auto_seed:
        try:
            a1, n1 = estimate_exponents(family)
        except CollapseError:
            pass
        else:
            alt = start.copy()
            alt[-2:] = (a1 / n1, 1.0 / n1)
            if np.isfinite(objective(alt)):
                seeds.append(alt)
    rng = np.random.default_rng(seed)
    starts = seeds + [sd * (1.0 + 0.15 * rng.standard_normal(len(sd))) for sd in seeds for _ in range(restarts)]
    def run(s, width):
        simplex = [s]
        for k in range(len(s)):
            e = s.copy()
            e[k] = e[k] * (1.0 + width) if e[k] != 0 else 0.5
            simplex.append(e)
        return optimize.minimize(
            objective, s, method="Nelder-Mead",
            options={"initial_simplex": np.array(simplex), "maxiter": maxiter, "xatol": 1e-7, "fatol": 1e-14},
        )

    best, iters, stagnated = None, 0, False
    for s in starts:
        res = run(s, 0.1)
        iters += int(res.nit)
        if best is None or res.fun < best.fun:
            best = res
            stagnated = not res.success
    # rugged objective: relaunch from the incumbent until it stops improving
    for _ in range(POLISH_ROUNDS):
        res = run(best.x, 0.02)
        iters += int(res.nit)
        if not res.fun < best.fun * (1.0 - 1e-6):
            break
        best, stagnated = res, not res.success
    hc, a, n = (float(v) for v in unpack(best.x))
    return CollapseResult(hc, a, n, float(best.fun), iters, stagnated, float(init_q), baseline_quality(family))


def bootstrap_collapse(
    family: CurveFamily, result: CollapseResult, *, resamples: int = 200, seed: int = 0, **kw
) -> dict:
    """Standard errors of ``(h_c, alpha, nu)`` from point-resampled refits."""
    rng = np.random.default_rng(seed)
    draws = []
    for _ in range(resamples):
        members = []
        for L, h, y in family.members:
            idx = np.unique(rng.integers(0, len(h), len(h)))
            members.append((L, h[idx], y[idx]))
        try:
            r = collapse(CurveFamily(tuple(members)), (result.h_c, result.alpha, result.nu), restarts=0, seed=seed,
                         auto_seed=False, **kw)
        except (CollapseError, ValueError):
            continue
        draws.append((r.h_c, r.alpha, r.nu))
    if len(draws) < 2:
        return {"h_c": float("nan"), "alpha": float("nan"), "nu": float("nan")}
    sd = np.std(np.array(draws), axis=0, ddof=1)
    return {"h_c": float(sd[0]), "alpha": float(sd[1]), "nu": float(sd[2])}
