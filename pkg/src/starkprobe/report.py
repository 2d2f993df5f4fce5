"""Summaries of finished runs: fitted exponents against reference values, plus plot-ready tables."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .runner import read_table

# scenario -> ((slope, tol), (intercept, tol) or None)
REFERENCE_FITS: dict[str, tuple[tuple[float, float], tuple[float, float] | None]] = {
    "beta-gamma:single": ((1.99, 0.15), (3.97, 0.30)),
    "beta-gamma:many-body": ((3.69, 0.5), (-0.45, 0.8)),
    "inverse-nu:single": ((1.01, 0.15), (1.97, 0.20)),
    "peak-qfi:single:gamma=2.0": ((7.95, 0.15), None),
    "line-peak:quantum:11": ((6.47, 0.2), None),
    "line-peak:quantum:22": ((8.47, 0.2), None),
    "line-peak:quantum:12": ((7.47, 0.2), None),
    "line-peak:classical:11": ((6.37, 0.25), None),
    "line-peak:classical:22": ((8.38, 0.25), None),
    "line-peak:classical:12": ((7.36, 0.25), None),
    "gap:extended": ((-1.99, 0.10), None),
    "gap:transition": ((-2.10, 0.20), None),
    "gap:localized": ((0.77, 0.10), None),
    "gap:many-body": ((-0.76, 0.20), None),
    "trace-min:single": ((-6.30, 0.3), None),
    "trace-min:many-body": ((-3.20, 0.5), None),
    "normalized:single:11": ((4.37, 0.3), None),
    "normalized:single:22": ((6.37, 0.3), None),
    "normalized:single:12": ((5.37, 0.3), None),
    "normalized:many-body:11": ((2.47, 0.6), None),
    "normalized:many-body:22": ((5.00, 0.6), None),
    "normalized:many-body:12": ((3.73, 0.6), None),
}
REFERENCE_DECAY = {"single": (2.00, 0.05), "many-body": (4.0, 0.5)}
REFERENCE_COLLAPSE = {"alpha": (2.0, 0.1), "nu": (0.25, 0.05)}


class NothingToReport(Exception):
    pass


def _verdict(value: float, target: tuple[float, float]) -> str:
    return "PASS" if math.isfinite(value) and abs(value - target[0]) <= target[1] else "FAIL"


def _fit_lines(rel: str, fits: list[dict]) -> list[str]:
    out = []
    for f in fits:
        name = f["scenario"]
        line = f"{rel}  {name}: slope = {f['slope']:.4f} ± {f['stderr_slope']:.2g}, intercept = {f['intercept']:.4f} ± {f['stderr_intercept']:.2g} (n={f['n']}, r2={f['r2']:.5f})"
        ref = REFERENCE_FITS.get(name)
        if ref:
            (s, st), icpt = ref
            ok = _verdict(f["slope"], (s, st))
            tgt = f"{s}"
            if icpt:
                ok = "PASS" if ok == "PASS" and _verdict(f["intercept"], icpt) == "PASS" else "FAIL"
                tgt = f"({s}, {icpt[0]})"
            line += f", target {tgt}: {ok}"
        out.append(line)
    return out


def _decay_lines(rel: str, recs: list[dict]) -> list[str]:
    out = []
    for r in recs:
        if r.get("alpha") is None:
            out.append(f"{rel}  decay {r['family']} L={r['L']}: {r.get('error', 'no fit')}")
            continue
        tgt = REFERENCE_DECAY.get(r["family"])
        v = f", target {tgt[0]}: {_verdict(r['alpha'], tgt)}" if tgt else ""
        out.append(f"{rel}  decay {r['family']} L={r['L']}: alpha = {r['alpha']:.4f} ± {r['stderr']:.2g}{v}")
    return out


def _collapse_lines(rel: str, recs) -> list[str]:
    recs = recs if isinstance(recs, list) else [recs]
    out = []
    for r in recs:
        if "nu" not in r:
            out.append(f"{rel}  collapse gamma={r.get('gamma')}: {r.get('error', 'failed')}")
            continue
        line = (f"{rel}  collapse gamma={r['gamma']}: h_c = {r['h_c']:.3e}, alpha = {r['alpha']:.4f}, "
                f"nu = {r['nu']:.4f}, alpha/nu = {r['alpha'] / r['nu']:.4f}, quality = {r['quality']:.3e}")
        if r["gamma"] == 2.0:
            ok = all(_verdict(r[k], REFERENCE_COLLAPSE[k]) == "PASS" for k in REFERENCE_COLLAPSE)
            line += f", target (alpha, nu) = (2.0, 0.25): {'PASS' if ok else 'FAIL'}"
        out.append(line)
    return out


def _plot_tables(path: Path, dest: Path) -> list[Path]:
    """Reduce a sweep CSV to the columns a plot needs, with clean rows only."""
    rows = [r for r in read_table(path) if not r.get("flag")]
    if not rows:
        return []
    name = path.stem
    if name == "qfi_sweep":
        cols = ("family", "L", "gamma", "h", "qfi")
    elif name == "qfi_matrix":
        cols = ("L", "h1", "h2", "f11", "f12", "f22", "trace_inv")
    elif name == "cfi_sweep":
        cols = ("L", "h1", "h2", "c11", "c12", "c22", "q11", "q12", "q22")
    elif name == "gap":
        cols = ("family", "L", "h1", "h2", "gap")
    else:
        return []
    target = dest / f"plot_{name}.csv"
    with target.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([r[c] for c in cols])
    return [target]


def emit_report(out: Path | str) -> tuple[str, list[Path]]:
    """Summary text for every result under `out` and the plot-data files written next to them.

    Raises :class:`NothingToReport` when no result files exist; the message
    lists the expected names.
    """
    out = Path(out)
    if not out.is_dir():
        raise NothingToReport(f"nothing to report: {out} does not exist")
    lines: list[str] = []
    written: list[Path] = []
    found = False
    for d in sorted([out, *[p for p in out.rglob("*") if p.is_dir()]]):
        rel = str(d.relative_to(out)) if d != out else "."
        for fname, fmt in (("fits.json", _fit_lines), ("decay_fit.json", _decay_lines), ("collapse.json", _collapse_lines)):
            p = d / fname
            if p.exists():
                found = True
                lines += fmt(rel, json.loads(p.read_text()))
        for csvf in sorted(d.glob("*.csv")):
            if csvf.name.startswith("plot_"):
                continue
            found = True
            written += _plot_tables(csvf, d)
    if not found:
        raise NothingToReport(
            f"nothing to report in {out}: expected fits.json, decay_fit.json, collapse.json or sweep CSVs"
        )
    text = "\n".join(lines) + ("\n" if lines else "")
    report = out / "report.txt"
    report.write_text(text)
    return text, [report, *written]
