"""End-to-end acceptance checks.

Each test prints one ``[PASS]``/``[FAIL]`` line with the measured numbers
and the target band, then asserts. Expensive sweeps are shared through
module-scoped fixtures.
"""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from starkprobe.fisher import qfi_finite_difference, qfi_perturbative
from starkprobe.models import Family, Monomial, Parabolic, ProbeSpec, build_hamiltonian
from starkprobe.protocols import (
    beta_exponent,
    curve_peak,
    decay_exponent,
    entry_exponents,
    fisher_point,
    gap_exponent,
    line_peaks,
    line_scan,
    log_grid,
    minimum_trace_inverse,
    normalized_exponents,
    offset_line_transition,
    qfi_curve,
    qfi_value,
    trace_inverse,
)
from starkprobe.scaling import (
    CurveFamily,
    bootstrap_collapse,
    collapse,
    fit_beta_gamma,
    fit_inverse_nu,
    fit_power_law,
)
from starkprobe.spectral import analytic_bloch, full_spectrum

pytestmark = pytest.mark.acceptance

MB = Family.MANY_BODY
SP_SIZES = (101, 201, 301, 401, 501)
MB_SIZES = (6, 8, 10, 12, 14, 16)
GAMMAS = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)
FIELDS = log_grid(1e-14, 1e-1, 40)
LINE_FIELDS = log_grid(1e-14, 1e-1, 20)
TRACE_FIELDS = log_grid(1e-10, 1e-4, 40)


def within(value, target, tol):
    return abs(value - target) <= tol


def band(value, target, tol, fmt=".3f"):
    mark = "ok" if within(value, target, tol) else "OUT"
    return f"{value:{fmt}} (target {target:{fmt}} ± {tol:g}, {mark})"


def report(verdict, tag, ok, body):
    verdict(f"[{'PASS' if ok else 'FAIL'}] {tag}: {body}")
    return ok


# ---- shared sweeps


@pytest.fixture(scope="module")
def sp_curves():
    """Single-particle QFI curves for every gamma and size on one log grid."""
    return {g: [qfi_curve(L, g, FIELDS) for L in SP_SIZES] for g in GAMMAS}


@pytest.fixture(scope="module")
def sp_betas(sp_curves):
    out = {}
    for g, curves in sp_curves.items():
        peaks = [curve_peak(c, lambda x, L=c.L, g=g: qfi_value(L, g, x)) for c in curves]
        out[g] = fit_power_law(x=SP_SIZES, y=[p.peak.value for p in peaks], bootstrap=200)
    return out


@pytest.fixture(scope="module")
def sp_collapses(sp_curves):
    out = {}
    for g, curves in sp_curves.items():
        fam = CurveFamily(tuple((c.L, *c.clean()) for c in curves))
        res = collapse(fam, (1e-12, 2.0, 0.5), seed=0)
        out[g] = (res, bootstrap_collapse(fam, res, resamples=16, seed=0))
    return out


@pytest.fixture(scope="module")
def line_scans():
    return [line_scan(L, LINE_FIELDS, povm="position") for L in SP_SIZES]


# ---- criteria


def test_c01_bloch_spectrum(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for L in (2, 7, 101, 501):
        num = full_spectrum(build_hamiltonian(ProbeSpec(L, Monomial(0.0, 1.0))))
        ref = analytic_bloch(L)
        worst = max(worst, np.abs(num.energies - ref.energies).max(), np.abs(num.vectors - ref.vectors).max())
    dt = time.perf_counter() - t0
    ok = report(verdict, "C1 Bloch eigensystem", worst <= 1e-10 and dt < 5,
                f"max entry error {worst:.2e} (≤ 1e-10), {dt:.2f} s (< 5 s)")
    assert ok


def test_c02_oracle_equivalence(verdict):
    t0 = time.perf_counter()
    errs = {}
    for g in (0.5, 1.0, 2.0):
        for L in (51, 101, 201):
            spec = ProbeSpec(L, Monomial(1e-10, g))
            fd = qfi_finite_difference(spec).entries[0, 0]
            pt = qfi_perturbative(spec).value
            errs[(g, L)] = abs(fd - pt) / pt
    dt = time.perf_counter() - t0
    (gw, Lw), worst = max(errs.items(), key=lambda kv: kv[1])
    bad = sorted(k for k, e in errs.items() if e > 1e-3)
    ok = report(verdict, "C2 finite difference vs perturbative", not bad and dt < 60,
                f"worst relative error {worst:.2e} at gamma={gw}, L={Lw} (≤ 1e-3); "
                f"out of band: {bad or 'none'}; {dt:.1f} s (< 60 s)")
    assert ok


def test_c03_single_particle_beta_gamma(verdict, sp_betas):
    law = fit_beta_gamma([(g, f.slope) for g, f in sp_betas.items()], bootstrap=200)
    betas = ", ".join(f"{g:g}:{f.slope:.3f}" for g, f in sp_betas.items())
    ok = within(law.slope, 1.99, 0.15) and within(law.intercept, 3.97, 0.30)
    report(verdict, "C3 single-particle beta(gamma)", ok,
           f"a = {band(law.slope, 1.99, 0.15)}, b = {band(law.intercept, 3.97, 0.30)}; betas {betas}")
    assert ok


def test_c04_localized_decay(verdict, sp_curves):
    sp = [decay_exponent(c).meta["alpha"] for c in sp_curves[2.0]]
    mb_curves = [qfi_curve(L, 2.0, log_grid(1e-6, 1e2, 10), MB) for L in (6, 8, 10, 12, 14)]
    mb = [decay_exponent(c).meta["alpha"] for c in mb_curves]
    ok_sp = all(within(a, 2.0, 0.05) for a in sp)
    ok_mb = all(within(a, 4.0, 0.5) for a in mb)
    report(verdict, "C4 localized decay", ok_sp and ok_mb,
           f"single-particle alpha per L {[round(a, 3) for a in sp]} (2.00 ± 0.05); "
           f"many-body alpha per L {[round(a, 3) for a in mb]} (4 ± 0.5)")
    assert ok_sp and ok_mb


def test_c05_collapse(verdict, sp_collapses):
    res, boot = sp_collapses[2.0]
    ok_data = within(res.nu, 0.25, 0.05) and within(res.alpha, 2.0, 0.1)
    hc, a, nu = 1e-10, 2.0, 0.25
    h = np.logspace(-10, -3, 141)
    fam = CurveFamily.from_arrays(SP_SIZES, [h] * 5, [L ** (a / nu) / (1 + (L ** (1 / nu) * (h - hc)) ** 2) for L in SP_SIZES])
    syn = collapse(fam, (1.5e-10, 1.8, 0.3), seed=1)
    ok_syn = abs(syn.h_c - hc) <= 1e-11 and within(syn.alpha, a, 0.05) and within(syn.nu, nu, 0.02)
    report(verdict, "C5 data collapse", ok_data and ok_syn,
           f"gamma=2: nu = {band(res.nu, 0.25, 0.05, '.4f')}, alpha = {band(res.alpha, 2.0, 0.1, '.4f')}, "
           f"h_c = {res.h_c:.2e}, quality {res.quality:.2e}; synthetic recovery "
           f"(h_c, alpha, nu) = ({syn.h_c:.3e}, {syn.alpha:.4f}, {syn.nu:.4f}) "
           f"within (1e-11, 0.05, 0.02) of (1e-10, 2, 0.25): {'ok' if ok_syn else 'OUT'}")
    assert ok_data and ok_syn


def test_c06_inverse_nu_law(verdict, sp_collapses, sp_betas):
    law = fit_inverse_nu([(g, 1.0 / r.nu) for g, (r, _) in sp_collapses.items()])
    ok_law = within(law.slope, 1.01, 0.15) and within(law.intercept, 1.97, 0.20)
    parts, ok_ratio = [], True
    for g, (r, boot) in sp_collapses.items():
        ratio = r.alpha / r.nu
        # delta method for alpha/nu, added in quadrature with the beta stderr
        s_ratio = math.hypot(boot["alpha"] / r.nu, r.alpha * boot["nu"] / r.nu**2)
        s = math.hypot(s_ratio, sp_betas[g].stderr_slope)
        good = abs(ratio - sp_betas[g].slope) <= s
        ok_ratio &= good
        parts.append(f"{g:g}: {ratio:.3f} vs {sp_betas[g].slope:.3f} (± {s:.3f}{'' if good else ', OUT'})")
    report(verdict, "C6 1/nu law and alpha/nu = beta", ok_law and ok_ratio,
           f"a = {band(law.slope, 1.01, 0.15)}, b = {band(law.intercept, 1.97, 0.20)}; alpha/nu vs beta "
           + "; ".join(parts))
    assert ok_law and ok_ratio


def test_c07_many_body_beta_gamma(verdict):
    t0 = time.perf_counter()
    scans = [beta_exponent(g, MB_SIZES, family=MB, mode="fixed", h_fixed=1e-6) for g in GAMMAS]
    law = fit_beta_gamma([(s.gamma, s.fit.slope) for s in scans], bootstrap=200)
    dt = time.perf_counter() - t0
    ok = within(law.slope, 3.69, 0.5) and within(law.intercept, -0.45, 0.8) and dt < 7200
    betas = ", ".join(f"{s.gamma:g}:{s.fit.slope:.3f}" for s in scans)
    report(verdict, "C7 many-body beta(gamma)", ok,
           f"a = {band(law.slope, 3.69, 0.5)}, b = {band(law.intercept, -0.45, 0.8)}; betas {betas}; "
           f"{dt:.0f} s on one worker (< 2 h)")
    assert ok


def test_c08_parabolic_peak_scaling(verdict, line_scans):
    q = entry_exponents(SP_SIZES, [line_peaks(s, "quantum") for s in line_scans])
    c = entry_exponents(SP_SIZES, [line_peaks(s, "classical") for s in line_scans])
    tq = {"11": 6.47, "22": 8.47, "12": 7.47}
    tc = {"11": 6.37, "22": 8.38, "12": 7.36}
    ok_q = all(within(q[k].slope, tq[k], 0.2) for k in tq)
    ok_c = all(within(c[k].slope, tc[k], 0.25) for k in tc)
    report(verdict, "C8 parabolic peak scaling", ok_q and ok_c,
           "QFI " + ", ".join(f"beta{k} = {band(q[k].slope, tq[k], 0.2)}" for k in tq)
           + "; CFI " + ", ".join(f"beta{k} = {band(c[k].slope, tc[k], 0.25)}" for k in tc))
    assert ok_q and ok_c


def test_c09_saturation(verdict, line_scans):
    points = [p for s in line_scans for p in s.points if p.quantum is not None]
    # off the symmetric line: a coarse (h1, h2) grid at L = 101 and a many-body grid
    for h1 in log_grid(1e-12, 1e-2, 2):
        for h2 in log_grid(1e-14, 1e-4, 2):
            points.append(fisher_point(ProbeSpec(101, Parabolic(h1, h2)), povm="position", allow_degenerate=True))
    for h1 in (1e-4, 1e-2, 1.0):
        for h2 in (1e-4, 1e-2):
            points.append(fisher_point(ProbeSpec(10, Parabolic(h1, h2), MB), povm="spin-configuration"))
    points = [p for p in points if p.quantum is not None]
    weak = max(abs(p.weak_residual) / np.linalg.norm(p.quantum, 2) for p in points)
    # a degenerate ground state has no pure-state Fisher matrix, so dominance is judged on clean points
    clean = [p for p in points if p.ok]
    dominance = min(
        np.linalg.eigvalsh(p.quantum - p.classical).min() / (3e-4 * np.abs(p.quantum).max()) for p in clean
    )
    ratios = []
    for s in line_scans:
        _, Q = s.entries("quantum")
        _, C = s.entries("classical")
        j = int(np.argmax(Q[:, 0, 0]))
        ratios.append(C[j, 0, 0] / Q[j, 0, 0])
    ok = weak <= 1e-8 and dominance >= -1.0 and min(ratios) >= 0.90
    report(verdict, "C9 saturation", ok,
           f"max |Tr(rho[L1,L2])|/|F_Q| = {weak:.1e} (≤ 1e-8) over {len(points)} points; "
           f"min eig(F_Q - F_C) in units of 3x FD tolerance = {dominance:.2e} (≥ -1) over {len(clean)} "
           f"unflagged points; CFI/QFI at peaks {min(ratios):.5f}..{max(ratios):.5f} (≥ 0.90)")
    assert ok


def test_c10_gap_exponents(verdict):
    z_ext = -gap_exponent(SP_SIZES, lambda L: (5.5e-10, 1e-12)).slope
    trans = [offset_line_transition(L, log_grid(1e-14, 1e-2, 20)) for L in SP_SIZES]
    z_tr = -fit_power_law(x=SP_SIZES, y=[g for _, g in trans]).slope
    loc = gap_exponent(SP_SIZES, lambda L: (5.5, 0.01)).slope
    z_mb = -gap_exponent((8, 10, 12, 14, 16), lambda L: (1e-4, 1e-4), family=MB).slope
    checks = [within(z_ext, 1.99, 0.10), within(z_tr, 2.10, 0.20), within(loc, 0.77, 0.10), within(z_mb, 0.76, 0.20)]
    report(verdict, "C10 gap exponents", all(checks),
           f"extended z = {band(z_ext, 1.99, 0.10)}; transition z = {band(z_tr, 2.10, 0.20)}; "
           f"localized slope = {band(loc, 0.77, 0.10)}; many-body z = {band(z_mb, 0.76, 0.20)}")
    assert all(checks)


def test_c11_simultaneous_estimation(verdict):
    mins = [minimum_trace_inverse(line_scan(L, TRACE_FIELDS)) for L in SP_SIZES]
    sp_tr = fit_power_law(x=SP_SIZES, y=[m.trace_inv for m in mins]).slope
    sp_n = normalized_exponents([(m.L, m.quantum, m.gap) for m in mins])
    mb_L = (8, 10, 12, 14, 16)
    recs = []
    for L in mb_L:
        p = fisher_point(ProbeSpec(L, Parabolic(1e-4, 1e-4), MB))
        recs.append((L, p.quantum, p.gap))
    mb_tr = fit_power_law(x=mb_L, y=[trace_inverse(F) for _, F, _ in recs]).slope
    mb_n = normalized_exponents(recs)
    tsp = {"11": 4.37, "22": 6.37, "12": 5.37}
    tmb = {"11": 2.47, "22": 5.00, "12": 3.73}
    ok_sp = within(sp_tr, -6.30, 0.30) and all(within(sp_n[k].slope, tsp[k], 0.3) for k in tsp)
    ok_mb = within(mb_tr, -3.20, 0.50) and all(within(mb_n[k].slope, tmb[k], 0.6) for k in tmb)
    report(verdict, "C11 simultaneous estimation", ok_sp and ok_mb,
           f"single-particle min Tr F^-1 slope = {band(sp_tr, -6.30, 0.30)}, normalized "
           + ", ".join(f"{k}: {band(sp_n[k].slope, tsp[k], 0.3)}" for k in tsp)
           + f"; many-body slope = {band(mb_tr, -3.20, 0.50)}, normalized "
           + ", ".join(f"{k}: {band(mb_n[k].slope, tmb[k], 0.6)}" for k in tmb))
    assert ok_sp and ok_mb


def test_c12_property_suites_quick(verdict):
    root = Path(__file__).resolve().parent.parent
    t0 = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "--quick", "-m", "property", "-q", "-p", "no:cacheprovider", "tests"],
        cwd=root, capture_output=True, text=True, timeout=600,
    )
    dt = time.perf_counter() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    ok = proc.returncode == 0 and dt < 300
    report(verdict, "C12 property suites under --quick", ok, f"{tail}; {dt:.1f} s (< 300 s)")
    assert ok, proc.stdout[-3000:]
