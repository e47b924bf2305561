import json
import math
import subprocess
import sys

import pytest

from cordesvem.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main
from cordesvem.mesh import read_mesh


def test_mesh_gen_writes_json(tmp_path):
    out = tmp_path / "m.json"
    assert main(["mesh-gen", "--kind", "voronoi", "--seeds", "20", "--seed", "3", "--out", str(out)]) == EXIT_OK
    assert read_mesh(out).n_cells == 20


def test_usage_errors(tmp_path, capsys):
    assert main(["solve", "--mesh-file", str(tmp_path / "missing.json")]) == EXIT_USAGE
    assert main(["solve", "--problem", "nope"]) == EXIT_USAGE
    assert main(["solve", "--n", "0"]) == EXIT_USAGE
    assert main(["solve", "--problem", "example2", "--poly", "x^2"]) == EXIT_USAGE
    assert main(["convergence", "--mesh", "uniform-odd", "--n", "4"]) == EXIT_USAGE
    assert main(["solve", "--box", "1", "0", "0", "1"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE


def test_malformed_mesh_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"vertices": [[0, 0], [1, 0], [1, 1]], "cells": [[0, 2, 1]]}')
    assert main(["solve", "--mesh-file", str(bad)]) == EXIT_USAGE


def test_solve_patch_json(tmp_path):
    out = tmp_path / "r.json"
    rc = main(["solve", "--problem", "patch", "--poly", "x^2+3xy", "--mesh", "voronoi",
               "--seeds", "30", "--out", str(out), "--dump-local", "3", "--threads", "1"])
    assert rc == EXIT_OK
    d = json.loads(out.read_text())
    assert d["err_h2"] < 1e-10 and d["residual"] <= 1e-9
    local = json.loads((tmp_path / "local_cell_3.json").read_text())
    assert len(local["consistency"]) == len(local["global_dofs"])


def test_solve_dump_system(tmp_path):
    mtx = tmp_path / "K.mtx"
    assert main(["solve", "--n", "2", "--dump-system", str(mtx), "--out", str(tmp_path / "r.json")]) == EXIT_OK
    assert mtx.read_text().startswith("%%MatrixMarket")


def test_dump_local_out_of_range(tmp_path):
    assert main(["solve", "--n", "2", "--dump-local", "99", "--out", str(tmp_path / "r.json")]) == EXIT_USAGE


def test_check_cordes_values(capsys):
    assert main(["check-cordes", "--problem", "example1", "--n", "3"]) == EXIT_OK
    d = json.loads(capsys.readouterr().out)
    assert d["mu_estimate"] == pytest.approx(math.sqrt(0.4))
    assert d["within_mu"] and not d["failed"]
    assert d["samples"] == 9 * 8
    assert main(["check-cordes", "--problem", "example3", "--mesh", "graded", "--tau", "0.1"]) == EXIT_OK
    d = json.loads(capsys.readouterr().out)
    assert d["mu_estimate"] == pytest.approx(1 / math.sqrt(5))


def test_convergence_outputs(tmp_path):
    base = tmp_path / "study"
    args = ["convergence", "--problem", "example2", "--n", "2", "--levels", "3", "--out", str(base)]
    assert main(args + ["--threads", "1"]) == EXIT_OK
    csv = (tmp_path / "study.csv").read_text().splitlines()
    assert csv[0] == "level,h,ndof,err_h2,err_h1,err_l2,rate_h2_h,rate_h2_ndof"
    assert len(csv) == 4
    assert json.loads((tmp_path / "study.json").read_text())["m"] == 2
    assert (tmp_path / "study.dat").exists()
    first = (tmp_path / "study.csv").read_bytes()
    assert main(args + ["--threads", "3"]) == EXIT_OK
    assert (tmp_path / "study.csv").read_bytes() == first


def test_convergence_stdout_and_numerical_failure(capsys):
    assert main(["convergence", "--problem", "example1", "--n", "2", "--levels", "2"]) == EXIT_OK
    assert capsys.readouterr().out.count("\n") == 3
    assert main(["convergence", "--problem", "example3", "--mesh", "graded", "--tau", "1e-40",
                 "--levels", "1"]) == EXIT_NUMERICAL


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "cordesvem.cli", "solve", "--n", "2"],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert json.loads(r.stdout)["ndof"] == 27
