import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cordesvem.mesh import PolygonalMesh, build_voronoi_mesh
from cordesvem.quadrature import (
    barycenter_rule,
    cell_triangles,
    edge_gauss,
    fan_rule,
    polygon_monomial_integral,
    scheme_rule,
    triangle_rule,
)

HEX_X4 = 21 * math.sqrt(3) / 160  # exact, frozen


def geom(pts):
    pts = np.asarray(pts, dtype=float)
    return PolygonalMesh(pts, [list(range(len(pts)))], validate=False).cell_geometry(0)


UNIT_SQUARE = geom([[0, 0], [1, 0], [1, 1], [0, 1]])
HEXAGON = geom(np.column_stack([np.cos(np.arange(6) * np.pi / 3), np.sin(np.arange(6) * np.pi / 3)]))
# non-convex cell whose barycenter does not see every edge
ARROW = geom([[0, 0], [4, 0], [4, 4], [3.9, 0.1], [0.1, 0.1], [0, 4]])


def test_square_x2y2():
    assert fan_rule(UNIT_SQUARE, 4)(lambda x: x[:, 0] ** 2 * x[:, 1] ** 2) == pytest.approx(1 / 9, abs=1e-14)


def test_hexagon_x4():
    assert polygon_monomial_integral(HEXAGON.vertices, 4, 0) == pytest.approx(HEX_X4, rel=1e-14)


def test_monomial_oracle_matches_rational_value():
    # arrow cell, y^8: 597.47920227962444444 computed symbolically
    assert polygon_monomial_integral(ARROW.vertices, 0, 8) == pytest.approx(597.47920227962444444, rel=1e-15)
    assert fan_rule(HEXAGON, 4)(lambda x: x[:, 0] ** 4) == pytest.approx(HEX_X4, rel=1e-13)


def test_barycenter_rule():
    r = barycenter_rule(UNIT_SQUARE)
    assert r(lambda x: x[:, 0] ** 2) == pytest.approx(0.25)
    assert r(lambda x: 3 * x[:, 0] - x[:, 1] + 2) == pytest.approx(3.0)


@pytest.mark.parametrize("cell", [UNIT_SQUARE, HEXAGON, ARROW], ids=["square", "hexagon", "arrow"])
@pytest.mark.parametrize("degree", range(0, 9))
def test_fan_exactness(cell, degree):
    rule = fan_rule(cell, degree)
    assert np.all(rule.weights > 0)
    assert abs(rule.weights.sum() - cell.area) <= 1e-13 * cell.area
    for a in range(degree + 1):
        b = degree - a
        ref = polygon_monomial_integral(cell.vertices, a, b)
        got = rule(lambda x: x[:, 0] ** a * x[:, 1] ** b)
        assert abs(got - ref) <= 1e-12 * max(1.0, abs(ref))


def test_nonconvex_triangulation_covers_cell():
    tris = cell_triangles(ARROW)
    areas = [0.5 * ((t[1, 0] - t[0, 0]) * (t[2, 1] - t[0, 1]) - (t[1, 1] - t[0, 1]) * (t[2, 0] - t[0, 0]))
             for t in tris]
    assert sum(areas) == pytest.approx(ARROW.area, rel=1e-13)
    assert min(areas) > 0


def test_voronoi_cells_exact(voronoi64):
    for k in range(0, voronoi64.n_cells, 7):
        g = voronoi64.cell_geometry(k)
        rule = fan_rule(g, 6)
        ref = polygon_monomial_integral(g.vertices, 3, 3)
        assert rule(lambda x: x[:, 0] ** 3 * x[:, 1] ** 3) == pytest.approx(ref, abs=1e-14)


@given(st.integers(0, 8), st.integers(0, 8))
def test_triangle_rule_exact(a, b):
    tri = np.array([[0.1, -0.2], [1.3, 0.4], [-0.3, 0.9]])
    pts, w = triangle_rule(tri, a + b)
    assert np.all(w > 0)
    ref = polygon_monomial_integral(tri, a, b)
    assert np.dot(w, pts[:, 0] ** a * pts[:, 1] ** b) == pytest.approx(ref, rel=1e-11, abs=1e-14)


def test_edge_gauss_examples():
    r = edge_gauss([0, 0], [1, 0], 3)
    assert len(r.nodes) == 2
    assert r.integrate(r.points[:, 0] ** 3) == pytest.approx(0.25, abs=1e-15)
    r = edge_gauss([0, 0], [3, 4], 5)
    assert r.weights.sum() == pytest.approx(5.0)
    # int over the segment of t^5 with t the arc parameter in [0, 1]
    assert r.integrate(r.nodes**5) == pytest.approx(5 / 6, rel=1e-14)


@given(st.integers(0, 11))
def test_edge_gauss_degree(d):
    r = edge_gauss([-1.0, 2.0], [0.5, -1.0], d)
    assert np.all((r.nodes > 0) & (r.nodes < 1))
    L = math.hypot(1.5, 3.0)
    assert r.integrate(r.nodes**d) == pytest.approx(L / (d + 1), rel=1e-13)


def test_edge_gauss_rejects():
    with pytest.raises(ValueError):
        edge_gauss([0, 0], [0, 0], 2)
    with pytest.raises(ValueError):
        edge_gauss([0, 0], [1, 0], 12)


def test_fan_rule_degree_range():
    with pytest.raises(ValueError):
        fan_rule(UNIT_SQUARE, 13)


def test_scheme_rule_degrees():
    assert scheme_rule(HEXAGON, 2).degree == 1 and len(scheme_rule(HEXAGON, 2).weights) == 1
    r3 = scheme_rule(HEXAGON, 3)
    assert r3.degree == 2
    assert r3(lambda x: x[:, 0] * x[:, 1] + x[:, 1] ** 2) == pytest.approx(
        polygon_monomial_integral(HEXAGON.vertices, 0, 2), rel=1e-13)
    with pytest.raises(ValueError):
        scheme_rule(HEXAGON, 4)


def test_voronoi_generic_cells_positive_weights():
    mesh = build_voronoi_mesh(30, seed=11)
    for k in range(mesh.n_cells):
        assert np.all(fan_rule(mesh.cell_geometry(k), 4).weights > 0)
