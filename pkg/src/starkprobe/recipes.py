"""Figure recipes: fixed scenario bundles behind ``reproduce <figure-id>``."""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

from .config import Grid, Scenario, SweepConfig
from .protocols import log_grid
from .runner import (
    RunSummary,
    _curves,
    _write_rows,
    decay_records,
    fit_record,
    read_table,
    run_scenario,
    wavefunction_rows,
    write_json,
)
from .scaling import fit_power_law

SP_SIZES = (101, 201, 301, 401, 501)
SP_SIZES_QUICK = (51, 101, 151, 201)
MB_SIZES = (6, 8, 10, 12, 14, 16)
MB_SIZES_QUICK = (6, 8, 10, 12)
MB_SIZES_FULL = MB_SIZES + (18,)
GAMMAS = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)

# three gap regimes: (h1, h2) at fixed fields, or a line offset
EXTENDED = (5.5e-10, 1e-12)
LOCALIZED = (5.5, 0.01)
TRANSITION_OFFSET = 1.1
MB_POINT = (1e-4, 1e-4)


def _grid(start: float, stop: float, per_decade: int) -> Grid:
    return Grid("log", start, stop, len(log_grid(start, stop, per_decade)))


def _sub(base: SweepConfig, **kw) -> SweepConfig:
    """Derived configuration; `quick` is applied here, so sub-runs see full grids."""
    return replace(base, figure=None, quick=False, full=False, **kw)


def _sp_sizes(cfg) -> tuple[int, ...]:
    return SP_SIZES_QUICK if cfg.quick else SP_SIZES


def _mb_sizes(cfg, full: bool) -> tuple[int, ...]:
    if cfg.quick:
        return MB_SIZES_QUICK
    return MB_SIZES_FULL if full else MB_SIZES


def _density(cfg, per_decade: int) -> int:
    return max(2, per_decade // 2) if cfg.quick else per_decade


def fig1(cfg: SweepConfig, out: Path, full: bool) -> RunSummary:
    c = _sub(cfg, scenario=Scenario.COLLAPSE, family="single", potential="monomial",
             L=_sp_sizes(cfg), gamma=(2.0,), h=_grid(1e-14, 1e-1, _density(cfg, 40)),
             init=(1e-12, 2.0, 0.25))
    s = run_scenario(c, out)
    rows = read_table(out / "qfi_sweep.csv")
    s.files.append(write_json(out / "decay_fit.json", decay_records(_curves(rows, "single", 2.0), "single")))
    return s


def fig2(cfg: SweepConfig, out: Path, full: bool) -> RunSummary:
    Ls = _mb_sizes(cfg, full)
    c = _sub(cfg, scenario=Scenario.QFI_SWEEP, family="many-body", potential="monomial",
             L=tuple(L for L in Ls if L <= 14), gamma=(2.0,), h=_grid(1e-6, 1e2, _density(cfg, 10)))
    s = run_scenario(c, out)
    rows = read_table(out / "qfi_sweep.csv")
    s.files.append(write_json(out / "decay_fit.json", decay_records(_curves(rows, "many-body", 2.0), "many-body")))
    b = _sub(cfg, scenario=Scenario.BETA_GAMMA, family="many-body", potential="monomial",
             L=Ls, gamma=GAMMAS, mode="fixed", h=None)
    s.merge(run_scenario(b, out / "beta"))
    return s


def fig3(cfg: SweepConfig, out: Path, full: bool) -> RunSummary:
    n = _density(cfg, 4)
    heat = _sub(cfg, scenario=Scenario.QFI_MATRIX, family="single", potential="parabolic",
                L=(101,), h1=_grid(1e-12, 1e-2, n), h2=_grid(1e-14, 1e-4, n), line_offset=None)
    s = run_scenario(heat, out)
    line = _sub(cfg, scenario=Scenario.QFI_MATRIX, family="single", potential="parabolic",
                L=_sp_sizes(cfg), h1=None, h2=_grid(1e-14, 1e-1, _density(cfg, 20)), line_offset=1.0)
    s.merge(run_scenario(line, out / "line"))
    wf = []
    for h2 in (1e-12, 1e-8, 1e-4):
        wf += wavefunction_rows(101, h2 * 100, h2)
    s.files.append(_write_rows(out / "wavefunction.csv", wf, ("L", "h1", "h2", "site", "prob")))
    return s


def fig5(cfg: SweepConfig, out: Path, full: bool) -> RunSummary:
    c = _sub(cfg, scenario=Scenario.CFI_SWEEP, family="single", potential="parabolic", povm="position",
             L=_sp_sizes(cfg), h1=None, h2=_grid(1e-14, 1e-1, _density(cfg, 20)), line_offset=1.0)
    return run_scenario(c, out)


def _gap_fit(out: Path, name: str, select=None) -> dict | None:
    rows = [r for r in read_table(out / "gap.csv") if not r["flag"]]
    by_L: dict[int, float] = {}
    for r in rows:
        L, g = int(r["L"]), float(r["gap"])
        by_L[L] = min(g, by_L.get(L, g)) if select == "min" else g
    if len(by_L) < 3:
        return None
    Ls = sorted(by_L)
    return fit_record(name, fit_power_law(x=Ls, y=[by_L[L] for L in Ls]))


def fig6(cfg: SweepConfig, out: Path, full: bool) -> RunSummary:
    Ls = _sp_sizes(cfg)
    s = RunSummary(out)
    fits = []
    for name, (h1, h2) in (("extended", EXTENDED), ("localized", LOCALIZED)):
        c = _sub(cfg, scenario=Scenario.GAP_SWEEP, family="single", potential="parabolic", L=Ls,
                 h1=Grid("list", values=(h1,)), h2=Grid("list", values=(h2,)), line_offset=None)
        s.merge(run_scenario(c, out / name))
        fits.append(_gap_fit(out / name, f"gap:{name}"))
    c = _sub(cfg, scenario=Scenario.GAP_SWEEP, family="single", potential="parabolic", L=Ls, h1=None,
             h2=_grid(1e-14, 1e-2, _density(cfg, 20)), line_offset=TRANSITION_OFFSET)
    s.merge(run_scenario(c, out / "transition"))
    fits.append(_gap_fit(out / "transition", "gap:transition", select="min"))
    mb = tuple(L for L in _mb_sizes(cfg, full) if L >= 8)
    c = _sub(cfg, scenario=Scenario.GAP_SWEEP, family="many-body", potential="parabolic", L=mb,
             h1=Grid("list", values=(MB_POINT[0],)), h2=Grid("list", values=(MB_POINT[1],)), line_offset=None)
    s.merge(run_scenario(c, out / "many-body"))
    fits.append(_gap_fit(out / "many-body", "gap:many-body"))
    s.files.append(write_json(out / "fits.json", sorted((f for f in fits if f), key=lambda f: f["scenario"])))
    return s


def fig7(cfg: SweepConfig, out: Path, full: bool) -> RunSummary:
    sp = _sub(cfg, scenario=Scenario.MULTIPARAM_TRACE, family="single", potential="parabolic",
              L=_sp_sizes(cfg), h1=None, h2=_grid(1e-10, 1e-4, _density(cfg, 40)), line_offset=1.0)
    s = run_scenario(sp, out / "single")
    mb = tuple(L for L in _mb_sizes(cfg, full) if L >= 8)
    c = _sub(cfg, scenario=Scenario.MULTIPARAM_TRACE, family="many-body", potential="parabolic", L=mb,
             h1=Grid("list", values=(MB_POINT[0],)), h2=Grid("list", values=(MB_POINT[1],)), line_offset=None)
    s.merge(run_scenario(c, out / "many-body"))
    return s


RECIPES = {"fig1": fig1, "fig2": fig2, "fig3": fig3, "fig5": fig5, "fig6": fig6, "fig7": fig7}


def reproduce(cfg: SweepConfig, out: Path) -> RunSummary:
    return RECIPES[cfg.figure](cfg, Path(out), cfg.full)
