"""Sweep execution: task fan-out, per-point journaling, resume and post-processing.

Every output table is written as

    # generated <UTC timestamp>
    <header>
    <rows sorted by key>

The timestamp line is the only field that changes between identical runs.
While a sweep is running, finished rows are appended (and flushed) to
``<table>.partial``; a rerun reads both files and skips every task whose key
is already present with a matching config hash.
"""

from __future__ import annotations

import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

import numpy as np

from . import __version__
from .config import Scenario, SweepConfig
from .fisher import IllConditionedBoundError, qfi_perturbative, total_uncertainty
from .models import Family, Monomial, Parabolic, ProbeSpec, build_hamiltonian
from .protocols import QfiCurve, curve_peak, fisher_point, qfi_value
from .scaling import (
    CollapseError,
    CurveFamily,
    FitResult,
    bootstrap_collapse,
    collapse,
    fit_beta_gamma,
    fit_decay_exponent,
    fit_inverse_nu,
    fit_power_law,
)
from .spectral import SolverError, full_spectrum, ground_pair, lowest_energies

FAILURE_FLAGS = ("solver", "step-search")
QUICK_L_CAP = {"single": 201, "many-body": 12}
MB_DEFAULT_MAX_L = 16


def is_failure(flag: str) -> bool:
    """Solver or step-search trouble not explained by an opted-in degeneracy."""
    parts = flag.split(";")
    return "degenerate" not in parts and any(p.startswith(FAILURE_FLAGS) for p in parts)


@dataclass(frozen=True)
class Table:
    filename: str
    columns: tuple[str, ...]
    key: tuple[str, ...]  # sort key of a row
    task_key: tuple[str, ...]  # identifies the task that produced the row
    extra: tuple[str, ...] = ()

    @property
    def header(self) -> tuple[str, ...]:
        return self.columns + self.extra + ("config_hash", "version")


TABLES = {
    "spectrum": Table(
        "spectrum.csv", ("family", "L", "gamma", "h", "level", "energy", "flag"),
        ("family", "L", "gamma", "h", "level"), ("family", "L", "gamma", "h"),
    ),
    "qfi": Table(
        "qfi_sweep.csv", ("family", "L", "gamma", "h", "qfi", "method", "step", "flag"),
        ("family", "L", "gamma", "h", "method"), ("family", "L", "gamma", "h", "method"),
    ),
    "qfi_matrix": Table(
        "qfi_matrix.csv", ("L", "h1", "h2", "f11", "f12", "f22", "trace_inv", "weak_comm_residual", "flag"),
        ("L", "h1", "h2"), ("L", "h1", "h2"), ("family", "gap"),
    ),
    "cfi": Table(
        "cfi_sweep.csv", ("family", "L", "h1", "h2", "povm", "c11", "c12", "c22", "flag"),
        ("family", "L", "h1", "h2", "povm"), ("family", "L", "h1", "h2", "povm"), ("q11", "q12", "q22"),
    ),
    "gap": Table(
        "gap.csv", ("family", "L", "h1", "h2", "gap"),
        ("family", "L", "h1", "h2"), ("family", "L", "h1", "h2"), ("flag",),
    ),
}


@dataclass
class RunSummary:
    out: Path
    files: list[Path] = field(default_factory=list)
    computed: int = 0
    skipped: int = 0
    failures: int = 0

    def merge(self, other: "RunSummary") -> None:
        self.files += other.files
        self.computed += other.computed
        self.skipped += other.skipped
        self.failures += other.failures

    @property
    def exit_code(self) -> int:
        return 3 if self.failures else 0


# ---------------------------------------------------------------------------
# formatting


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def _sort_value(s: str):
    try:
        return (0, float(s), "")
    except ValueError:
        return (1, 0.0, s)


def timestamp_line() -> str:
    return f"# generated {datetime.now(timezone.utc).strftime('%Y-%m-%dT%H:%M:%SZ')}\n"


def read_table(path: Path) -> list[dict[str, str]]:
    """Rows of a sweep CSV (or its journal) as string dicts; comment lines skipped."""
    if not path.exists():
        return []
    with path.open(newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    if not lines:
        return []
    return list(csv.DictReader(lines))


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")
    return path


def fit_record(scenario: str, fit: FitResult) -> dict:
    return fit.as_dict(scenario)


# ---------------------------------------------------------------------------
# point tasks (top level so worker processes can import them)


def _spec(family: str, L: int, *, gamma=None, h=None, h1=None, h2=None) -> ProbeSpec:
    pot = Monomial(h, gamma) if gamma is not None else Parabolic(h1, h2)
    return ProbeSpec(int(L), pot, Family(family))


def task_spectrum(p: dict) -> list[dict]:
    spec = _spec(p["family"], p["L"], gamma=p["gamma"], h=p["h"])
    base = {k: p[k] for k in ("family", "L", "gamma", "h")}
    try:
        if spec.family is Family.SINGLE_PARTICLE and not p["levels"]:
            E = full_spectrum(build_hamiltonian(spec)).energies
        else:
            E = lowest_energies(spec, k=p["levels"] or 6)
    except (SolverError, ValueError) as exc:
        return [{**base, "level": 1, "energy": math.nan, "flag": f"solver:{type(exc).__name__}"}]
    return [{**base, "level": i + 1, "energy": float(e), "flag": ""} for i, e in enumerate(E)]


def task_qfi(p: dict) -> list[dict]:
    base = {k: p[k] for k in ("family", "L", "gamma", "h", "method")}
    spec = _spec(p["family"], p["L"], gamma=p["gamma"], h=p["h"])
    if p["method"] == "perturbative":
        return [{**base, "qfi": qfi_perturbative(spec).value, "step": 0.0, "flag": ""}]
    pt = fisher_point(spec)
    if pt.quantum is None:
        return [{**base, "qfi": math.nan, "step": math.nan, "flag": pt.flag}]
    return [{**base, "qfi": float(pt.quantum[0, 0]), "step": pt.step[0], "flag": pt.flag}]


def _trace_inv(F) -> tuple[float, str]:
    try:
        return total_uncertainty(F), ""
    except IllConditionedBoundError:
        return math.nan, "ill-conditioned"


def _join(*flags: str) -> str:
    return ";".join(f for f in flags if f)


def task_qfi_matrix(p: dict) -> list[dict]:
    base = {"L": p["L"], "h1": p["h1"], "h2": p["h2"], "family": p["family"]}
    pt = fisher_point(_spec(p["family"], p["L"], h1=p["h1"], h2=p["h2"]), allow_degenerate=True)
    if pt.quantum is None:
        nan = math.nan
        return [{**base, "f11": nan, "f12": nan, "f22": nan, "trace_inv": nan,
                 "weak_comm_residual": nan, "gap": pt.gap, "flag": pt.flag}]
    F = pt.quantum
    tr, trflag = _trace_inv(F)
    return [{**base, "f11": F[0, 0], "f12": F[0, 1], "f22": F[1, 1], "trace_inv": tr,
             "weak_comm_residual": pt.weak_residual, "gap": pt.gap, "flag": _join(pt.flag, trflag)}]


def task_cfi(p: dict) -> list[dict]:
    base = {k: p[k] for k in ("family", "L", "h1", "h2", "povm")}
    pt = fisher_point(_spec(p["family"], p["L"], h1=p["h1"], h2=p["h2"]), povm=p["povm"], allow_degenerate=True)
    if pt.quantum is None:
        return [{**base, **{k: math.nan for k in ("c11", "c12", "c22", "q11", "q12", "q22")}, "flag": pt.flag}]
    C, Q = pt.classical, pt.quantum
    return [{**base, "c11": C[0, 0], "c12": C[0, 1], "c22": C[1, 1],
             "q11": Q[0, 0], "q12": Q[0, 1], "q22": Q[1, 1], "flag": pt.flag}]


def task_gap(p: dict) -> list[dict]:
    base = {k: p[k] for k in ("family", "L", "h1", "h2")}
    spec = _spec(p["family"], p["L"], h1=p["h1"], h2=p["h2"])
    try:
        E = lowest_energies(spec, k=2)
    except (SolverError, ValueError) as exc:
        return [{**base, "gap": math.nan, "flag": f"solver:{type(exc).__name__}"}]
    return [{**base, "gap": max(float(E[1] - E[0]), 0.0), "flag": ""}]


TASKS = {
    "spectrum": task_spectrum,
    "qfi": task_qfi,
    "qfi_matrix": task_qfi_matrix,
    "cfi": task_cfi,
    "gap": task_gap,
}


def _execute(item: tuple[str, dict]) -> list[dict]:
    table, params = item
    return TASKS[table](params)


# ---------------------------------------------------------------------------
# sweep engine


def _progress(done: int, total: int) -> None:
    if sys.stderr.isatty():
        sys.stderr.write(f"\r{done}/{total}")
        sys.stderr.flush()
        if done == total:
            sys.stderr.write("\n")


def run_table(
    table_name: str,
    params: list[dict],
    out: Path,
    config_hash: str,
    workers: int = 1,
) -> tuple[list[dict[str, str]], RunSummary]:
    """Compute every task in `params` not already on disk; return all rows (string dicts)."""
    t = TABLES[table_name]
    out.mkdir(parents=True, exist_ok=True)
    final, journal = out / t.filename, out / (t.filename + ".partial")
    summary = RunSummary(out)

    def task_id(row) -> tuple[str, ...]:
        return tuple(fmt(row[c]) if not isinstance(row[c], str) else row[c] for c in t.task_key)

    have: dict[tuple, dict[str, str]] = {}
    for row in read_table(final) + read_table(journal):
        if row.get("config_hash") != config_hash:
            continue  # produced by another configuration
        have[tuple(row[c] for c in t.key)] = row
    done = {tuple(row[c] for c in t.task_key) for row in have.values()}

    pending = []
    seen = set()
    for p in params:
        tid = task_id(p)
        if tid in seen:
            continue
        seen.add(tid)
        if tid in done:
            summary.skipped += 1
        else:
            pending.append(p)

    if pending:
        new_file = not journal.exists()
        with journal.open("a", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if new_file:
                w.writerow(t.header)
                fh.flush()

            def record(rows):
                for r in rows:
                    r = {**r, "config_hash": config_hash, "version": __version__}
                    line = [fmt(r.get(c)) for c in t.header]
                    w.writerow(line)
                    have[tuple(line[t.header.index(c)] for c in t.key)] = dict(zip(t.header, line))
                fh.flush()
                os.fsync(fh.fileno())

            items = [(table_name, p) for p in pending]
            if workers > 1 and len(items) > 1:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    futures = [pool.submit(_execute, it) for it in items]
                    for n, fut in enumerate(as_completed(futures), 1):
                        record(fut.result())
                        _progress(n, len(items))
            else:
                for n, it in enumerate(items, 1):
                    record(_execute(it))
                    _progress(n, len(items))
        summary.computed = len(pending)

    rows = sorted(have.values(), key=lambda r: tuple(_sort_value(r[c]) for c in t.key))
    if pending or not final.exists():
        tmp = final.with_suffix(final.suffix + ".tmp")
        with tmp.open("w", newline="") as fh:
            fh.write(timestamp_line())
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(t.header)
            for r in rows:
                w.writerow([r[c] for c in t.header])
        os.replace(tmp, final)
    if journal.exists():
        journal.unlink()
    summary.files.append(final)
    summary.failures = sum(1 for r in rows if is_failure(r.get("flag", "")))
    return rows, summary


# ---------------------------------------------------------------------------
# scenarios


def sizes(cfg: SweepConfig) -> list[int]:
    Ls = sorted(set(cfg.L))
    if cfg.quick:
        capped = [L for L in Ls if L <= QUICK_L_CAP[cfg.family]]
        Ls = capped or Ls[:1]
    return Ls


def _pairs(cfg: SweepConfig, L: int) -> list[tuple[float, float]]:
    h2s = cfg.field_points("h2")
    if cfg.line_offset is not None:
        return [(float(cfg.line_offset * h * (L - 1)), float(h)) for h in h2s]
    return [(float(a), float(b)) for a in cfg.field_points("h1") for b in h2s]


def _monomial_params(cfg: SweepConfig, hs=None) -> list[dict]:
    hs = cfg.field_points("h") if hs is None else hs
    return [
        {"family": cfg.family, "L": L, "gamma": float(g), "h": float(h), "method": cfg.method, "levels": cfg.levels}
        for L in sizes(cfg) for g in cfg.gamma for h in hs
    ]


def _parabolic_params(cfg: SweepConfig, povm=None) -> list[dict]:
    out = []
    for L in sizes(cfg):
        for h1, h2 in _pairs(cfg, L):
            p = {"family": cfg.family, "L": L, "h1": h1, "h2": h2}
            if povm:
                p["povm"] = povm
            out.append(p)
    return out


def _curves(rows, family: str, gamma: float) -> list[QfiCurve]:
    by_L: dict[int, list] = {}
    for r in rows:
        if r["family"] == family and float(r["gamma"]) == gamma and r["method"] == "finite-difference":
            by_L.setdefault(int(r["L"]), []).append(r)
    curves = []
    for L in sorted(by_L):
        rs = sorted(by_L[L], key=lambda r: float(r["h"]))
        curves.append(QfiCurve(
            L, np.array([float(r["h"]) for r in rs]), np.array([float(r["qfi"]) for r in rs]),
            tuple(r["flag"] for r in rs), np.array([float(r["step"]) for r in rs]),
        ))
    return curves


def _collapse_record(curves, cfg: SweepConfig, gamma: float) -> dict:
    fam = CurveFamily(tuple((c.L, *c.clean()) for c in curves))
    init = (cfg.init[0], cfg.init[1], cfg.init[2] if len(cfg.gamma) == 1 else 1.0 / (gamma + 2.0))
    res = collapse(fam, init, seed=cfg.seed)
    boot = bootstrap_collapse(fam, res, resamples=cfg.bootstrap, seed=cfg.seed) if cfg.bootstrap else None
    return {
        "gamma": gamma, "L": [c.L for c in curves],
        "h_c": res.h_c, "alpha": res.alpha, "nu": res.nu, "quality": res.quality,
        "iterations": res.iterations, "bootstrap_stderr": boot,
        "stagnated": res.stagnated, "baseline_quality": res.baseline,
    }


def decay_records(curves, family: str) -> list[dict]:
    out = []
    for c in curves:
        h, F = c.clean()
        cp = curve_peak(c)
        try:
            fit = fit_decay_exponent(h, F, cp.peak.h_max)
        except ValueError as exc:
            out.append({"family": family, "L": c.L, "alpha": None, "error": str(exc)})
            continue
        out.append({
            "family": family, "L": c.L, "alpha": fit.meta["alpha"], "stderr": fit.stderr_slope,
            "r2": fit.r_squared, "n": fit.n_points, "h_max": cp.peak.h_max,
            "plateau": cp.plateau, "crossover": cp.crossover, "window": list(fit.meta["window"]),
        })
    return out


def _run_qfi(cfg: SweepConfig, out: Path, hs=None):
    return run_table("qfi", _monomial_params(cfg, hs), out, cfg.hash(), cfg.workers)


def run_collapse(cfg: SweepConfig, out: Path) -> RunSummary:
    rows, summary = _run_qfi(cfg, out)
    recs = []
    for g in cfg.gamma:
        curves = _curves(rows, cfg.family, float(g))
        try:
            recs.append(_collapse_record(curves, cfg, float(g)))
        except (CollapseError, ValueError) as exc:
            recs.append({"gamma": float(g), "error": str(exc)})
    summary.files.append(write_json(out / "collapse.json", recs[0] if len(recs) == 1 else recs))
    ok = [r for r in recs if "nu" in r]
    if len(ok) >= 3:
        fits = [fit_record(f"inverse-nu:{cfg.family}", fit_inverse_nu([(r["gamma"], 1.0 / r["nu"]) for r in ok]))]
        summary.files.append(write_json(out / "fits.json", fits))
    return summary


def run_beta_gamma(cfg: SweepConfig, out: Path) -> RunSummary:
    hs = np.array([cfg.h_fixed]) if cfg.mode == "fixed" else None
    rows, summary = _run_qfi(cfg, out, hs)
    peaks, fits = [], []
    betas = []
    for g in cfg.gamma:
        g = float(g)
        curves = _curves(rows, cfg.family, g)
        Ls, vals = [], []
        for c in curves:
            if cfg.mode == "fixed":
                h, F = c.clean()
                if not len(F):
                    continue
                hm, fm, edge = float(h[0]), float(F[0]), False
            else:
                ev = lambda x, L=c.L: qfi_value(L, g, x, Family(cfg.family))
                cp = curve_peak(c, ev)
                hm, fm, edge = cp.peak.h_max, cp.peak.value, cp.peak.at_boundary
            peaks.append({"family": cfg.family, "L": c.L, "gamma": g, "h_max": hm, "qfi_max": fm,
                          "at_boundary": edge, "mode": cfg.mode})
            Ls.append(c.L)
            vals.append(fm)
        if len(Ls) >= 3:
            fit = fit_power_law(x=Ls, y=vals, bootstrap=cfg.bootstrap, seed=cfg.seed)
            fits.append(fit_record(f"peak-qfi:{cfg.family}:gamma={g!r}", fit))
            betas.append((g, fit.slope))
    if len(betas) >= 3:
        law = fit_beta_gamma(betas, bootstrap=cfg.bootstrap, seed=cfg.seed)
        fits.append(fit_record(f"beta-gamma:{cfg.family}", law))
    summary.files.append(_write_rows(out / "peaks.csv", peaks,
                                     ("family", "L", "gamma", "h_max", "qfi_max", "at_boundary", "mode")))
    summary.files.append(write_json(out / "fits.json", sorted(fits, key=lambda f: f["scenario"])))
    return summary


def _write_rows(path: Path, rows: list[dict], columns: Iterable[str]) -> Path:
    columns = tuple(columns)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r.get(c)) for c in columns])
    return path


def _matrix_by_L(rows) -> dict[int, list[dict]]:
    out: dict[int, list] = {}
    for r in rows:
        out.setdefault(int(r["L"]), []).append(r)
    return out


def line_peak_fits(rows, prefix: str, label: str, cols=("f11", "f22", "f12"), bootstrap=0, seed=0) -> list[dict]:
    """Power-law fits of the largest clean ``|entry|`` per size."""
    by_L = _matrix_by_L(rows)
    Ls, peaks = [], {k: [] for k in cols}
    for L in sorted(by_L):
        clean = [r for r in by_L[L] if not r["flag"] and all(math.isfinite(float(r[c])) for c in cols)]
        if not clean:
            continue
        Ls.append(L)
        for c in cols:
            peaks[c].append(max(abs(float(r[c])) for r in clean))
    if len(Ls) < 3:
        return []
    return [
        fit_record(f"{prefix}:{label}:{c[1:]}", fit_power_law(x=Ls, y=peaks[c], bootstrap=bootstrap, seed=seed))
        for c in cols
    ]


def trace_minima(rows) -> list[dict]:
    out = []
    for L, rs in sorted(_matrix_by_L(rows).items()):
        clean = [r for r in rs if not r["flag"] and math.isfinite(float(r["trace_inv"]))]
        if not clean:
            continue
        best = min(clean, key=lambda r: float(r["trace_inv"]))
        g = float(best["gap"])
        out.append({
            "family": best["family"], "L": L, "h1": float(best["h1"]), "h2": float(best["h2"]),
            "trace_inv": float(best["trace_inv"]), "gap": g,
            "n11": abs(float(best["f11"])) * g, "n12": abs(float(best["f12"])) * g, "n22": abs(float(best["f22"])) * g,
        })
    return out


def run_multiparam(cfg: SweepConfig, out: Path) -> RunSummary:
    rows, summary = run_table("qfi_matrix", _parabolic_params(cfg), out, cfg.hash(), cfg.workers)
    mins = trace_minima(rows)
    summary.files.append(_write_rows(out / "trace_min.csv", mins,
                                     ("family", "L", "h1", "h2", "trace_inv", "gap", "n11", "n12", "n22")))
    fits = []
    if len(mins) >= 3:
        Ls = [m["L"] for m in mins]
        fits.append(fit_record(f"trace-min:{cfg.family}", fit_power_law(x=Ls, y=[m["trace_inv"] for m in mins])))
        for k in ("11", "22", "12"):
            fits.append(fit_record(f"normalized:{cfg.family}:{k}", fit_power_law(x=Ls, y=[m["n" + k] for m in mins])))
    summary.files.append(write_json(out / "fits.json", sorted(fits, key=lambda f: f["scenario"])))
    return summary


def run_scenario(cfg: SweepConfig, out: Path | str | None = None) -> RunSummary:
    """Run one configured scenario into `out` (defaults to ``cfg.out``)."""
    out = Path(out if out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    sc = cfg.scenario
    h = cfg.hash()
    if sc is Scenario.SPECTRUM:
        return run_table("spectrum", _monomial_params(cfg), out, h, cfg.workers)[1]
    if sc is Scenario.QFI_SWEEP:
        return _run_qfi(cfg, out)[1]
    if sc is Scenario.QFI_MATRIX:
        rows, summary = run_table("qfi_matrix", _parabolic_params(cfg), out, h, cfg.workers)
        if cfg.line_offset is not None:
            fits = line_peak_fits(rows, "line-peak", "quantum", bootstrap=cfg.bootstrap, seed=cfg.seed)
            summary.files.append(write_json(out / "fits.json", fits))
        return summary
    if sc is Scenario.CFI_SWEEP:
        rows, summary = run_table("cfi", _parabolic_params(cfg, cfg.povm), out, h, cfg.workers)
        if cfg.line_offset is not None:
            fits = line_peak_fits(rows, "line-peak", "classical", ("c11", "c22", "c12"), cfg.bootstrap, cfg.seed)
            fits += line_peak_fits(rows, "line-peak", "quantum", ("q11", "q22", "q12"), cfg.bootstrap, cfg.seed)
            summary.files.append(write_json(out / "fits.json", sorted(fits, key=lambda f: f["scenario"])))
        return summary
    if sc is Scenario.GAP_SWEEP:
        return run_table("gap", _parabolic_params(cfg), out, h, cfg.workers)[1]
    if sc is Scenario.COLLAPSE:
        return run_collapse(cfg, out)
    if sc is Scenario.BETA_GAMMA:
        return run_beta_gamma(cfg, out)
    if sc is Scenario.MULTIPARAM_TRACE:
        return run_multiparam(cfg, out)
    if sc is Scenario.REPRODUCE:
        from .recipes import reproduce

        return reproduce(cfg, out)
    raise ValueError(f"unhandled scenario {sc}")


def wavefunction_rows(L: int, h1: float, h2: float) -> list[dict]:
    spec = ProbeSpec(L, Parabolic(h1, h2))
    v = ground_pair(build_hamiltonian(spec), k=1, warn=False)[0].vector
    return [{"L": L, "h1": h1, "h2": h2, "site": i + 1, "prob": float(v[i] ** 2)} for i in range(L)]


