"""Quadrature on polygons and edges.

Polygon rules are unions of collapsed Gauss rules on the triangles of a fan
from the cell barycenter; every node is interior to the cell and every weight
is positive.  :func:`polygon_monomial_integral` evaluates exact monomial
integrals by reduction to the boundary and serves as the reference oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import ceil, comb

import numpy as np
from numpy.polynomial import legendre

from .mesh.core import CellGeometry, is_simple_polygon, shoelace_area


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, 2)
    weights: np.ndarray  # (nq,)
    degree: int

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))

    def __call__(self, fn) -> float:
        return self.integrate(fn(self.points))


@dataclass(frozen=True)
class EdgeRule:
    nodes: np.ndarray  # parameters in (0, 1)
    weights: np.ndarray  # sum to the edge length
    points: np.ndarray  # (nq, 2)
    degree: int

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


@lru_cache(maxsize=None)
def gauss_legendre01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def edge_gauss(a, b, degree: int) -> EdgeRule:
    """Gauss-Legendre rule on the segment ``[a, b]`` exact up to ``degree``."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if degree < 0 or degree > 11:
        raise ValueError("edge degree must be in [0, 11]")
    length = float(np.hypot(*(b - a)))
    if length == 0.0:
        raise ValueError("edge endpoints coincide")
    t, w = gauss_legendre01(max(1, ceil((degree + 1) / 2)))
    return EdgeRule(nodes=t, weights=w * length, points=a + t[:, None] * (b - a), degree=degree)


@lru_cache(maxsize=None)
def _reference_triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed (Duffy) Gauss rule on the unit triangle, barycentric form."""
    nu = max(1, ceil((degree + 2) / 2))
    nv = max(1, ceil((degree + 1) / 2))
    u, wu = gauss_legendre01(nu)
    v, wv = gauss_legendre01(nv)
    U, V = np.meshgrid(u, v, indexing="ij")
    s, t = U * (1.0 - V), U * V
    w = (wu[:, None] * wv[None, :] * U).ravel()  # sums to 1/2
    lam = np.column_stack([1.0 - s.ravel() - t.ravel(), s.ravel(), t.ravel()])
    return lam, 2.0 * w  # weights normalised to the triangle area


def triangle_rule(tri: np.ndarray, degree: int) -> tuple[np.ndarray, np.ndarray]:
    lam, w = _reference_triangle_rule(degree)
    area = 0.5 * ((tri[1, 0] - tri[0, 0]) * (tri[2, 1] - tri[0, 1])
                  - (tri[1, 1] - tri[0, 1]) * (tri[2, 0] - tri[0, 0]))
    return lam @ tri, w * area


def _ear_clip(pts: np.ndarray) -> list[tuple[int, int, int]]:
    idx = list(range(len(pts)))
    tris = []

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def inside(p, a, b, c):
        return cross(a, b, p) >= 0 and cross(b, c, p) >= 0 and cross(c, a, p) >= 0

    guard = 0
    while len(idx) > 3:
        n = len(idx)
        for k in range(n):
            i, j, l = idx[k - 1], idx[k], idx[(k + 1) % n]
            if cross(pts[i], pts[j], pts[l]) <= 0:
                continue
            if any(inside(pts[q], pts[i], pts[j], pts[l]) for q in idx if q not in (i, j, l)):
                continue
            tris.append((i, j, l))
            idx.pop(k)
            break
        else:
            raise ValueError("ear clipping failed; polygon is not simple")
        guard += 1
        if guard > 10 * len(pts):
            raise ValueError("ear clipping did not terminate")
    tris.append(tuple(idx))
    return tris


def cell_triangles(geom: CellGeometry) -> list[np.ndarray]:
    """Fan from the barycenter, or an ear-clipping triangulation when the
    barycenter does not see every edge.  Each entry is a (3, 2) ccw triangle."""
    pts = geom.vertices
    c = geom.barycenter
    nxt = np.roll(pts, -1, axis=0)
    signed = (pts[:, 0] - c[0]) * (nxt[:, 1] - c[1]) - (pts[:, 1] - c[1]) * (nxt[:, 0] - c[0])
    if np.all(signed > 1e-14 * geom.diameter**2):
        return [np.array([c, p, q]) for p, q in zip(pts, nxt)]
    if not is_simple_polygon(pts):
        raise ValueError("cell is not a simple polygon")
    return [pts[list(t)] for t in _ear_clip(pts)]


def fan_rule(geom: CellGeometry, degree: int) -> QuadratureRule:
    """Polygon rule exact for polynomials of total degree ``degree``.

    The cell is split into triangles joining the barycenter to each edge; if
    the barycenter does not see every edge, an ear-clipping triangulation is
    used instead so that all weights stay positive.
    """
    if not 0 <= degree <= 12:
        raise ValueError("fan_rule degree must be in [0, 12]")
    xs, ws = zip(*(triangle_rule(t, degree) for t in cell_triangles(geom)))
    return QuadratureRule(points=np.vstack(xs), weights=np.concatenate(ws), degree=degree)


def barycenter_rule(geom: CellGeometry) -> QuadratureRule:
    """One-point rule ``|K| phi(barycenter)``, exact for affine functions."""
    return QuadratureRule(points=geom.barycenter[None, :].copy(),
                          weights=np.array([geom.area]), degree=1)


def scheme_rule(geom: CellGeometry, m: int) -> QuadratureRule:
    """Cheapest rule exact on P_{2m-4}: barycenter for m=2, degree-2 fan for m=3."""
    if m == 2:
        return barycenter_rule(geom)
    if m == 3:
        return fan_rule(geom, 2)
    raise ValueError(f"unsupported order m={m}; expected 2 or 3")


def polygon_monomial_integral(pts: np.ndarray, a: int, b: int) -> float:
    """Exact ``int_K x**a y**b`` over a ccw polygon via the divergence theorem.

    ``int_K x^a y^b = 1/(a+1) * sum_e int_0^1 x(t)^(a+1) y(t)^b dy``, with the
    edge integral expanded in binomials.  Rational arithmetic on the float
    coordinates avoids cancellation, so the result is correctly rounded.
    """
    pts = [(Fraction(float(x)), Fraction(float(y))) for x, y in np.asarray(pts, dtype=float)]
    total = Fraction(0)
    p = a + 1
    for (x0, y0), (x1, y1) in zip(pts, pts[1:] + pts[:1]):
        dx, dy = x1 - x0, y1 - y0
        if dy == 0:
            continue
        s = Fraction(0)
        # (x0 + t dx)^p (y0 + t dy)^b = sum_ij C(p,i) C(b,j) x0^(p-i) dx^i y0^(b-j) dy^j t^(i+j)
        for i in range(p + 1):
            ci = comb(p, i) * x0 ** (p - i) * dx**i
            for j in range(b + 1):
                s += ci * comb(b, j) * y0 ** (b - j) * dy**j / (i + j + 1)
        total += s * dy
    return float(total / p)


def polygon_area(pts) -> float:
    return shoelace_area(np.asarray(pts, dtype=float))
