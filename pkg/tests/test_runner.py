import json
import math

import pytest

from starkprobe import runner
from starkprobe.cli import main
from starkprobe.config import parse_config
from starkprobe.runner import TABLES, is_failure, read_table, run_scenario

QFI = """scenario = qfi-sweep
L = 11, 21, 31
gamma = 1.0
h = log:1e-6:1e-1:6
"""

MATRIX = """scenario = qfi-matrix
potential = parabolic
L = 21, 31
h1 = 1e-4, 1e-3
h2 = log:1e-7:1e-4:3
"""

CFI_MB = """scenario = cfi-sweep
potential = parabolic
family = many-body
povm = spin-configuration
L = 6, 8
h1 = 1e-3
h2 = 1e-4, 1e-3
"""

GAP = """scenario = gap-sweep
potential = parabolic
L = 11
h1 = 0.1
h2 = 0.001, 0.01
"""

SPECTRUM = """scenario = spectrum
L = 5
gamma = 1.0
h = 0.0, 0.5
"""


def _lines(path):
    return path.read_text().splitlines()


@pytest.mark.parametrize("text,table,header", [
    (QFI, "qfi", "family,L,gamma,h,qfi,method,step,flag,config_hash,version"),
    (MATRIX, "qfi_matrix", "L,h1,h2,f11,f12,f22,trace_inv,weak_comm_residual,flag,family,gap,config_hash,version"),
    (CFI_MB, "cfi", "family,L,h1,h2,povm,c11,c12,c22,flag,q11,q12,q22,config_hash,version"),
    (GAP, "gap", "family,L,h1,h2,gap,flag,config_hash,version"),
    (SPECTRUM, "spectrum", "family,L,gamma,h,level,energy,flag,config_hash,version"),
])
def test_table_layout(tmp_path, text, table, header):
    cfg = parse_config(text)
    summary = run_scenario(cfg, tmp_path)
    lines = _lines(tmp_path / TABLES[table].filename)
    assert lines[0].startswith("# generated ") and lines[1] == header
    rows = read_table(tmp_path / TABLES[table].filename)
    if table == "spectrum":
        assert len(rows) == 2 * 5
    else:
        assert len(rows) == summary.computed
    for r in rows:
        assert r["config_hash"] == cfg.hash()
        values = [r[c] for c in TABLES[table].columns if c not in ("family", "method", "flag", "povm")]
        assert all(math.isfinite(float(v)) for v in values) or r["flag"]
    assert not (tmp_path / (TABLES[table].filename + ".partial")).exists()


def test_row_count_is_grid_times_sizes(tmp_path):
    run_scenario(parse_config(QFI), tmp_path)
    assert len(read_table(tmp_path / "qfi_sweep.csv")) == 6 * 3


def test_rows_are_sorted_by_key(tmp_path):
    run_scenario(parse_config(QFI, workers=3), tmp_path)
    rows = read_table(tmp_path / "qfi_sweep.csv")
    keys = [(int(r["L"]), float(r["h"])) for r in rows]
    assert keys == sorted(keys)


def test_worker_count_does_not_change_results(tmp_path):
    run_scenario(parse_config(MATRIX, workers=1), tmp_path / "a")
    run_scenario(parse_config(MATRIX, workers=3), tmp_path / "b")
    a = _lines(tmp_path / "a" / "qfi_matrix.csv")[1:]
    b = _lines(tmp_path / "b" / "qfi_matrix.csv")[1:]
    assert a == b


def test_rerun_solves_nothing(tmp_path, monkeypatch):
    cfg = parse_config(QFI)
    run_scenario(cfg, tmp_path)
    before = (tmp_path / "qfi_sweep.csv").read_text()

    def boom(p):
        raise AssertionError("resume must not recompute")

    monkeypatch.setitem(runner.TASKS, "qfi", boom)
    s = run_scenario(cfg, tmp_path)
    assert s.computed == 0 and s.skipped == 18
    assert (tmp_path / "qfi_sweep.csv").read_text() == before


def test_interrupted_run_resumes_from_journal(tmp_path, monkeypatch):
    cfg = parse_config(QFI)
    real = runner.TASKS["qfi"]
    calls = {"n": 0}

    def flaky(p):
        calls["n"] += 1
        if calls["n"] > 7:
            raise KeyboardInterrupt
        return real(p)

    monkeypatch.setitem(runner.TASKS, "qfi", flaky)
    with pytest.raises(KeyboardInterrupt):
        run_scenario(cfg, tmp_path)
    assert len(read_table(tmp_path / "qfi_sweep.csv.partial")) == 7
    monkeypatch.setitem(runner.TASKS, "qfi", real)
    s = run_scenario(cfg, tmp_path)
    assert s.computed == 11 and s.skipped == 7
    assert not (tmp_path / "qfi_sweep.csv.partial").exists()
    fresh = tmp_path / "fresh"
    run_scenario(cfg, fresh)
    assert _lines(tmp_path / "qfi_sweep.csv")[1:] == _lines(fresh / "qfi_sweep.csv")[1:]


def test_changed_config_invalidates_cached_rows(tmp_path):
    run_scenario(parse_config(QFI), tmp_path)
    s = run_scenario(parse_config(QFI, seed=5), tmp_path)
    assert s.computed == 18 and s.skipped == 0


def test_tampered_hash_forces_recompute(tmp_path):
    cfg = parse_config(QFI)
    run_scenario(cfg, tmp_path)
    path = tmp_path / "qfi_sweep.csv"
    lines = path.read_text().splitlines()
    lines[2] = lines[2].replace(cfg.hash(), "0" * 16)
    path.write_text("\n".join(lines) + "\n")
    s = run_scenario(cfg, tmp_path)
    assert s.computed == 1 and s.skipped == 17


def test_perturbative_rows(tmp_path):
    run_scenario(parse_config(QFI + "method = perturbative\n"), tmp_path)
    rows = read_table(tmp_path / "qfi_sweep.csv")
    assert {r["method"] for r in rows} == {"perturbative"} and {r["step"] for r in rows} == {"0.0"}


def test_failure_flags():
    assert is_failure("solver:SolverError") and is_failure("step-search")
    assert not is_failure("") and not is_failure("degenerate;step-search") and not is_failure("noisy-derivative")


def test_collapse_scenario_writes_parameters(tmp_path):
    text = QFI.replace("qfi-sweep", "collapse").replace("6", "11") + "init = 1e-6, 2.0, 0.33\nbootstrap = 0\n"
    run_scenario(parse_config(text), tmp_path)
    rec = json.loads((tmp_path / "collapse.json").read_text())
    assert {"h_c", "alpha", "nu", "quality", "gamma"} <= set(rec)


def test_beta_gamma_scenario_writes_fits(tmp_path):
    text = """scenario = fit-beta-gamma
L = 21, 41, 61
gamma = 1.0, 2.0, 3.0
mode = fixed
h_fixed = 1e-9
bootstrap = 5
"""
    run_scenario(parse_config(text), tmp_path)
    fits = {f["scenario"]: f for f in json.loads((tmp_path / "fits.json").read_text())}
    assert "beta-gamma:single" in fits
    assert set(fits["beta-gamma:single"]) == {"scenario", "slope", "intercept", "stderr_slope", "stderr_intercept", "r2", "n"}
    assert (tmp_path / "peaks.csv").exists()


def test_multiparam_scenario(tmp_path):
    text = MATRIX.replace("qfi-matrix", "multiparam-trace").replace("21, 31", "21, 31, 41")
    run_scenario(parse_config(text), tmp_path)
    fits = json.loads((tmp_path / "fits.json").read_text())
    assert [f["scenario"] for f in fits] == ["normalized:single:11", "normalized:single:12",
                                            "normalized:single:22", "trace-min:single"]


# ---- command line


def _cfg(tmp_path, text, name="c.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_cli_success_and_report(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["qfi-sweep", "--config", _cfg(tmp_path, QFI), "--out", str(out)]) == 0
    assert main(["report", "--out", str(out)]) == 0
    first = (out / "report.txt").read_text()
    assert main(["report", "--out", str(out)]) == 0
    assert (out / "report.txt").read_text() == first


def test_cli_config_error(tmp_path, capsys):
    assert main(["qfi-sweep", "--config", _cfg(tmp_path, "scenario = qfi-sweep\nL = 1\n")]) == 1
    assert "config error" in capsys.readouterr().err


def test_cli_scenario_mismatch(tmp_path):
    assert main(["gap-sweep", "--config", _cfg(tmp_path, QFI), "--out", str(tmp_path / "o")]) == 1


def test_cli_missing_config():
    assert main(["qfi-sweep"]) == 1


def test_cli_report_on_empty_directory(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) == 2


def test_cli_solver_failure_exit_code(tmp_path, monkeypatch):
    monkeypatch.setitem(runner.TASKS, "gap", lambda p: [{**p, "gap": math.nan, "flag": "solver:SolverError"}])
    assert main(["gap-sweep", "--config", _cfg(tmp_path, GAP), "--out", str(tmp_path / "o")]) == 3


def test_cli_unknown_figure(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["reproduce", "fig9"])
    assert err.value.code == 2
