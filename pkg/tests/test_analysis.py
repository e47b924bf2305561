import json
import math

import numpy as np
import pytest
from scipy import integrate

from cordesvem.analysis import (
    CSV_COLUMNS,
    ConvergenceReport,
    ErrorTriple,
    LevelResult,
    StudyError,
    eoc,
    eoc_ndof,
    error_norms,
    fitted_order,
    interpolation_errors,
    run_study,
    solve_level,
)
from cordesvem.element import ScaledMonomials
from cordesvem.mesh import MeshFamily, build_uniform_square_mesh
from cordesvem.problems import example2, get_problem, patch_problem


def test_eoc_examples():
    assert eoc([0.5, 0.25], [1.0, 0.5]) == [pytest.approx(1.0)]
    assert eoc([0.5, 0.25, 0.125], [1.0, 0.25, 0.0625]) == [pytest.approx(2.0), pytest.approx(2.0)]
    assert eoc_ndof([100, 400], [1.0, 0.5]) == [pytest.approx(1.0)]


def test_eoc_rejects_bad_input():
    with pytest.raises(ValueError):
        eoc([0.25, 0.5], [1.0, 0.5])
    with pytest.raises(ValueError):
        eoc([0.5, 0.5], [1.0, 0.5])
    with pytest.raises(ValueError):
        eoc([0.5], [1.0])
    with pytest.raises(ValueError):
        eoc_ndof([400, 100], [1.0, 0.5])


def test_fitted_order():
    h = np.array([0.4, 0.2, 0.1, 0.05])
    assert fitted_order(h, 3 * h**1.5) == pytest.approx(1.5)


def test_error_norms_zero_for_polynomial(square4):
    p = patch_problem("x^2-xy+2y^2")
    polys = []
    for k in range(square4.n_cells):
        g = square4.cell_geometry(k)
        b = ScaledMonomials(g.barycenter, g.diameter, 2)
        polys.append((b, b.coefficients_of({(2, 0): 1.0, (1, 1): -1.0, (0, 2): 2.0})))
    e = error_norms(square4, polys, p.u, p.grad_u, p.hess_u)
    assert max(e.as_tuple()) <= 1e-13


def test_error_norms_against_dblquad():
    mesh = build_uniform_square_mesh(1, (0.0, 1.0, 0.0, 1.0))
    g = mesh.cell_geometry(0)
    b = ScaledMonomials(g.barycenter, g.diameter, 2)
    c = b.coefficients_of({(1, 0): 0.5, (0, 2): -0.25})

    def u(x):
        return np.sin(x[:, 0]) * np.cos(x[:, 1])

    def grad_u(x):
        return np.column_stack([np.cos(x[:, 0]) * np.cos(x[:, 1]), -np.sin(x[:, 0]) * np.sin(x[:, 1])])

    def hess_u(x):
        s, cc = np.sin(x[:, 0]) * np.cos(x[:, 1]), np.cos(x[:, 0]) * np.sin(x[:, 1])
        return np.stack([np.stack([-s, -cc], -1), np.stack([-cc, -s], -1)], -2)

    e = error_norms(mesh, [(b, c)], u, grad_u, hess_u, degree=12)

    def quad(f):
        return integrate.dblquad(lambda y, x: f(x, y), 0, 1, 0, 1, epsabs=1e-13, epsrel=1e-13)[0]

    l2 = quad(lambda x, y: (math.sin(x) * math.cos(y) - 0.5 * x + 0.25 * y * y) ** 2)
    h1 = quad(lambda x, y: (math.cos(x) * math.cos(y) - 0.5) ** 2
              + (-math.sin(x) * math.sin(y) + 0.5 * y) ** 2)
    h2 = quad(lambda x, y: (math.sin(x) * math.cos(y)) ** 2 + 2 * (math.cos(x) * math.sin(y)) ** 2
              + (-math.sin(x) * math.cos(y) + 0.5) ** 2)
    assert e.l2 == pytest.approx(math.sqrt(l2), rel=1e-9)
    assert e.h1 == pytest.approx(math.sqrt(h1), rel=1e-9)
    assert e.h2 == pytest.approx(math.sqrt(h2), rel=1e-9)


def _report():
    rep = ConvergenceReport("p", 2, 1.0)
    for i, (h, nd, e) in enumerate([(0.5, 100, 1.0), (0.25, 400, 0.5), (0.125, 1600, 0.25)]):
        rep.levels.append(LevelResult(i, h, nd, 4**i, ErrorTriple(e, e / 4, e / 16), seconds=1.0 + i))
    return rep


def test_report_csv():
    lines = _report().to_csv().splitlines()
    assert lines[0].split(",") == CSV_COLUMNS
    assert len(lines) == 4
    first, last = lines[1].split(","), lines[3].split(",")
    assert first[-2:] == ["", ""]
    assert float(last[-2]) == pytest.approx(1.0) and float(last[-1]) == pytest.approx(1.0)


def test_report_json_and_plot():
    rep = _report()
    d = json.loads(rep.to_json())
    assert d["rates"]["l2"]["h"] == pytest.approx([1.0, 1.0])
    assert "seconds" not in d["levels"][0]
    assert len(rep.to_plot_data().splitlines()) == 4


def test_rates_h_nan_when_h_constant():
    rep = _report()
    rep.levels[2].h = 0.25
    r = rep.rates_h()
    assert r[0] == pytest.approx(1.0) and math.isnan(r[1])
    assert json.loads(rep.to_json())["rates"]["h2"]["h"][1] is None


def test_study_on_patch_is_exact():
    rep = run_study(patch_problem("x^2+y^2"), MeshFamily("voronoi", seeds=8, seed=1), 2)
    assert max(rep.column("h2")) <= 1e-10
    assert list(rep.column("n_cells")) == [8, 32]


def test_study_requires_exact_solution():
    p = get_problem("example2")
    from dataclasses import replace
    with pytest.raises(StudyError):
        run_study(replace(p, u=None), MeshFamily("uniform", n=2), 2)


def test_study_wraps_level_failure():
    with pytest.raises(StudyError, match="level 0"):
        run_study(patch_problem("x^2", A=[[1.0, 0.0], [0.0, -0.5]]), MeshFamily("uniform", n=2), 1)


def test_example2_rate_small():
    rep = run_study(example2(), MeshFamily("uniform", n=4), 3)
    assert rep.rates_h()[-1] > 0.9
    assert rep.column("l2")[-1] < rep.column("h1")[-1] < rep.column("h2")[-1]


def test_solve_level_records_mu(square4):
    sol, err = solve_level(example2(), square4)
    assert sol.provenance["mu_estimate"] == pytest.approx(math.sqrt(0.4))
    assert err.h2 > 0


@pytest.mark.parametrize("m", [2, 3])
def test_interpolation_order(m):
    p = example2()
    e = [interpolation_errors(p.u, p.grad_u, p.hess_u, build_uniform_square_mesh(n), m).h2
         for n in (8, 16)]
    assert math.log2(e[0] / e[1]) == pytest.approx(m - 1, abs=0.1)
