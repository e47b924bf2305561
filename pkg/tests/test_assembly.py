import math

import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp

from cordesvem.assembly import (
    AssemblyError,
    CordesViolation,
    SolverError,
    _solve_sparse,
    assemble,
    build_dof_map,
    classify_dirichlet,
    constraint_basis,
    global_edge_normal,
    interpolate,
    local_dofs,
    solve_direct,
    write_matrix_market,
)
from cordesvem.element import LocalElement
from cordesvem.mesh import PolygonalMesh, build_uniform_square_mesh, build_voronoi_mesh
from cordesvem.problems import example1, example2, example3, parse_polynomial, patch_problem


def rotated(mesh, angle):
    c, s = math.cos(angle), math.sin(angle)
    R = np.array([[c, -s], [s, c]])
    return PolygonalMesh(mesh.vertices @ R.T, [list(cell) for cell in mesh.cells])


def test_dof_counts():
    assert build_dof_map(build_uniform_square_mesh(4), 2).n_dofs == 75
    assert build_dof_map(build_uniform_square_mesh(1), 3).n_dofs == 16
    dm = build_dof_map(build_uniform_square_mesh(2), 3)
    assert dm.n_dofs == 27 + 12
    with pytest.raises(ValueError):
        build_dof_map(build_uniform_square_mesh(2), 4)


def test_edge_signs_match_global_normals(voronoi64):
    dm = build_dof_map(voronoi64, 3)
    for k in range(voronoi64.n_cells):
        g = voronoi64.cell_geometry(k)
        for i, e in enumerate(voronoi64.cell_edges[k]):
            assert np.allclose(dm.cell_signs[k][3 * g.n_vertices + i] * global_edge_normal(voronoi64, e),
                               g.edge_normals[i], atol=1e-12)


def test_dirichlet_axis_aligned():
    mesh = build_uniform_square_mesh(2, (0.0, 1.0, 0.0, 1.0))
    p = example3()
    ds = classify_dirichlet(mesh, 2, p.g, p.grad_g)
    v = int(np.flatnonzero(np.all(np.isclose(mesh.vertices, [0.5, 0.0]), axis=1))[0])
    assert ds.fixed[3 * v] == pytest.approx(0.5**1.6)
    assert ds.fixed[3 * v + 1] == pytest.approx(1.6 * 0.5**0.6)
    assert 3 * v + 2 not in ds.fixed
    assert len(ds.corners) == 4 and not ds.tangential
    c = int(np.flatnonzero(np.all(np.isclose(mesh.vertices, [1.0, 1.0]), axis=1))[0])
    assert {3 * c, 3 * c + 1, 3 * c + 2} <= set(ds.fixed)
    # 8 boundary vertices: 4 corners x 3 + 4 side midpoints x 2
    assert len(ds.fixed) == 20


def test_dirichlet_tilted_side():
    mesh = rotated(build_uniform_square_mesh(2), math.pi / 6)
    p = patch_problem("x^2+xy")
    ds = classify_dirichlet(mesh, 2, p.g, p.grad_g)
    assert len(ds.tangential) == 4
    T, x0 = constraint_basis(3 * mesh.n_vertices, ds)
    x = interpolate(mesh, 2, p.u, p.grad_u)
    # the interpolant is admissible: x - x0 lies in the range of T
    z = sp.linalg.lsqr(T, x - x0, atol=1e-14, btol=1e-14)[0]
    assert np.allclose(T @ z + x0, x, atol=1e-12)
    for v, t, val in ds.tangential:
        assert val == pytest.approx(t @ p.grad_u(mesh.vertices[v:v + 1])[0])


def test_zero_data_zero_solution(square4):
    p = patch_problem({(0, 0): 0.0}, A=[[2.0, 0.3], [0.3, 1.0]])
    sol = solve_direct(assemble(square4, 2, p))
    assert np.abs(sol.dofs).max() == 0.0


@pytest.mark.parametrize("m,poly", [(2, "x^2+3xy-2y^2+x-1"), (3, "x^3-2xy^2+y^3+x^2-y")])
@pytest.mark.parametrize("meshname", ["square4", "voronoi64", "tilted"])
def test_patch_reproduction(m, poly, meshname, request):
    mesh = rotated(build_uniform_square_mesh(3), 0.4) if meshname == "tilted" else request.getfixturevalue(meshname)
    p = patch_problem(poly, A=[[2.0, 0.5], [0.5, 1.0]])
    sol = solve_direct(assemble(mesh, m, p))
    ref = interpolate(mesh, m, p.u, p.grad_u)
    assert np.abs(sol.dofs - ref).max() <= 1e-10 * (1 + np.abs(ref).max())
    for k in range(0, mesh.n_cells, 5):
        basis, c = sol.cell_polynomial(k)
        assert np.allclose(c, basis.coefficients_of(parse_polynomial(poly)), atol=1e-9)


def test_single_cell_all_fixed():
    mesh = build_uniform_square_mesh(1)
    p = patch_problem("x^2")
    system = assemble(mesh, 2, p)
    assert system.n_free == 0
    sol = solve_direct(system)
    assert np.allclose(sol.dofs, interpolate(mesh, 2, p.u, p.grad_u))


def test_one_by_one_system():
    z, res = _solve_sparse(sp.csr_matrix([[2.0]]), np.array([5.0]))
    assert z[0] == 2.5 and res == 0.0


def test_sparse_solver_against_dense(rng):
    n = 60
    A = sp.random(n, n, density=0.1, random_state=3, format="csr") + 5 * sp.eye(n)
    b = rng.normal(size=n)
    z, res = _solve_sparse(A, b)
    ref = np.linalg.solve(A.toarray(), b)
    assert np.abs(z - ref).max() <= 1e-10 * np.abs(ref).max()
    assert res <= 1e-9


def test_singular_matrix_raises():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(SolverError):
        _solve_sparse(A, np.array([1.0, 0.0]))


def test_example1_solve(square4):
    system = assemble(square4, 2, example1())
    sol = solve_direct(system)
    assert sol.residual <= 1e-9
    assert sol.provenance["n_dofs"] == 75
    assert system.n_free == 75 - 16 * 2 - 4
    # Galerkin: the reduced residual vanishes
    r = system.full_matrix @ sol.dofs - system.full_rhs
    assert np.abs(system.T.T @ r).max() <= 1e-9 * np.abs(system.full_rhs).max()


def test_local_dofs_orientation(voronoi64):
    p = patch_problem("x^3+y^2")
    system = assemble(voronoi64, 3, p)
    x = interpolate(voronoi64, 3, p.u, p.grad_u)
    for k in (0, 17, 40):
        el = LocalElement(voronoi64.cell_geometry(k), 3)
        assert np.allclose(local_dofs(system, x, k), el.local_dofs(p.u, p.grad_u), atol=1e-12)


def test_thread_determinism():
    mesh = build_voronoi_mesh(200, seed=5)
    a = assemble(mesh, 3, example2(), threads=1)
    b = assemble(mesh, 3, example2(), threads=4)
    assert (a.matrix != b.matrix).nnz == 0
    assert np.array_equal(a.rhs, b.rhs)


@pytest.mark.parametrize("m", [2, 3])
@pytest.mark.parametrize("factory,box", [(example1, None), (example2, None), (example3, (0.0, 1.0, 0.0, 1.0))])
def test_coercive_reduced_matrix(m, factory, box):
    meshes = [build_uniform_square_mesh(4, *([box] if box else [])),
              build_voronoi_mesh(30, seed=2, box=box) if box else build_voronoi_mesh(30, seed=2)]
    for mesh in meshes:
        A = assemble(mesh, m, factory()).matrix.toarray()
        assert np.linalg.eigvalsh(0.5 * (A + A.T)).min() > 0


def test_cordes_violation_refused(square4):
    p = patch_problem("x^2", A=[[1.0, 0.0], [0.0, -0.5]])
    with pytest.raises(CordesViolation):
        assemble(square4, 2, p)


def test_failing_cell_reported(square4):
    def bad_rule(geom, m):
        if geom.barycenter[0] > 0.5:
            raise ValueError("rule failure")
        from cordesvem.quadrature import scheme_rule
        return scheme_rule(geom, m)

    with pytest.raises(AssemblyError) as info:
        assemble(square4, 2, example2(), rule_factory=bad_rule)
    assert len(info.value.cells) == 4


def test_matrix_market_round_trip(tmp_path, square4):
    system = assemble(square4, 2, example2())
    path = tmp_path / "K.mtx"
    write_matrix_market(system, path)
    back = scipy.io.mmread(str(path)).tocsr()
    assert back.shape == system.matrix.shape
    assert np.allclose(back.toarray(), system.matrix.toarray(), rtol=1e-15, atol=0)
