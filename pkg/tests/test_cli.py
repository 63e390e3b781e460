import csv
import math
import subprocess
import sys

import pytest

from spectral_parareal.cli import main

from oracles import discrete_dirichlet_sigma


def _write(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_missing_preset_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path, 'coarse = "zero"\n')
    assert main(["run", "--config", cfg]) == 2
    assert "preset" in capsys.readouterr().err


def test_missing_file_exits_2(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.toml")]) == 2
    assert "config" in capsys.readouterr().err


def test_numerical_failure_exits_1(tmp_path, capsys):
    cfg = _write(tmp_path, 'preset = "exp2"\ncoarse = "svd-exact"\noracle_cap = 10\n')
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "OracleTooLarge" in capsys.readouterr().err


def test_run_writes_outputs_and_overrides(tmp_path):
    cfg = _write(tmp_path, 'preset = "exp1_dirichlet"\ncoarse = "svd-randomized"\nrank = 2\nmax_iterations = 3\n')
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--out", str(out), "--seed", "11", "--workers", "2"]) == 0
    assert len(_rows(out / "errors.csv")) == 4 * 10
    echo = (out / "config.toml").read_text()
    assert "seed = 11" in echo and "workers = 2" in echo
    again = tmp_path / "again"
    assert main(["run", "--config", cfg, "--out", str(again), "--seed", "11", "--workers", "2"]) == 0
    for name in ("errors.csv", "updates.csv", "bounds.csv"):
        assert (out / name).read_bytes() == (again / name).read_bytes()


def test_svd_exp2_decays_alike_on_every_interval(tmp_path):
    cfg = _write(tmp_path, 'preset = "exp2"\nrank = 5\noversampling = 1\n')
    assert main(["svd", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "svals.csv")
    assert {r["method"] for r in rows} == {"randomized", "exact"}
    for method in ("randomized", "exact"):
        sig = {(int(r["n"]), int(r["r"])): float(r["sigma"]) for r in rows if r["method"] == method}
        for r in range(1, 6):
            spread = max(abs(sig[n, r] - sig[1, r]) / sig[1, r] for n in range(1, 11))
            assert spread <= 0.5


def test_svd_exp1_ratio_matches_discrete_decay(tmp_path):
    cfg = _write(tmp_path, 'preset = "exp1_dirichlet"\nT = 8.0\nrank = 2\noversampling = 1\n')
    assert main(["svd", "--config", cfg, "--out", str(tmp_path)]) == 0
    sig = {(int(r["n"]), int(r["r"]), r["method"]): float(r["sigma"]) for r in _rows(tmp_path / "svals.csv")}
    expected = discrete_dirichlet_sigma(2, 0.01, 0.01, 80) / discrete_dirichlet_sigma(1, 0.01, 0.01, 80)
    for method in ("randomized", "exact"):
        ratio = sig[1, 2, method] / sig[1, 1, method]
        assert expected / 3 <= ratio <= 3 * expected


def test_svd_rank_zero_is_header_only(tmp_path):
    cfg = _write(tmp_path, 'preset = "exp2"\nrank = 0\n')
    assert main(["svd", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "svals.csv").read_text() == "n,r,sigma,method\n"


def test_svd_skips_exact_above_cap(tmp_path):
    cfg = _write(tmp_path, 'preset = "exp2"\nrank = 2\noracle_cap = 50\n')
    assert main(["svd", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert {r["method"] for r in _rows(tmp_path / "svals.csv")} == {"randomized"}


def test_single_cell_sweep_equals_run(tmp_path):
    cfg = _write(tmp_path, 'preset = "exp2"\nrank = 2\noversampling = 1\nmax_iterations = 2\n')
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "sw"), "--ranks", "2", "--oversampling", "1"]) == 0
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "run")]) == 0
    for name in ("errors.csv", "updates.csv", "bounds.csv"):
        assert (tmp_path / "sw" / "R2_p1" / name).read_bytes() == (tmp_path / "run" / name).read_bytes()


def test_exact_sweep_monotone_in_rank(tmp_path):
    K = 3
    cfg = _write(tmp_path, f'preset = "exp2"\ncoarse = "svd-exact"\nmax_iterations = {K}\n')
    out = tmp_path / "sw"
    assert main(["sweep", "--config", cfg, "--out", str(out), "--ranks", "1,2,3,4,5", "--oversampling", "0,1"]) == 0
    rows = _rows(out / "summary.csv")
    assert len(rows) == 5 * 2 * (K + 1)
    assert sorted(p.name for p in out.iterdir() if p.is_dir()) == sorted(
        f"R{R}_p{p}" for R in range(1, 6) for p in (0, 1)
    )
    err = {(int(r["R"]), int(r["p"]), int(r["k"])): float(r["max_error"]) for r in rows}
    for p in (0, 1):
        for k in range(K + 1):
            series = [err[R, p, k] for R in range(1, 6)]
            for a, b in zip(series, series[1:]):
                # monotone until both values sit on the rounding floor
                assert b <= a * (1 + 1e-9) or max(a, b) < 1e-12


def test_bad_list_argument(tmp_path):
    cfg = _write(tmp_path, 'preset = "exp2"\n')
    with pytest.raises(SystemExit) as info:
        main(["sweep", "--config", cfg, "--ranks", "a,b"])
    assert info.value.code == 2


def test_console_entry_point(tmp_path):
    cfg = _write(tmp_path, 'preset = "exp2"\nrank = 1\n')
    done = subprocess.run(
        [sys.executable, "-m", "spectral_parareal", "svd", "--config", cfg, "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert done.returncode == 0, done.stderr
    assert math.isfinite(float(_rows(tmp_path / "svals.csv")[0]["sigma"]))
