"""Polygonal mesh container, per-cell geometry and shape-regularity measures."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import linprog


class MeshError(ValueError):
    """Raised when a mesh violates one of its structural invariants."""


@dataclass(frozen=True)
class CellGeometry:
    """Geometric data of one polygonal cell.

    Edge ``i`` joins local vertex ``i`` to local vertex ``i + 1`` (cyclically),
    following the counterclockwise traversal of the cell.
    """

    vertices: np.ndarray  # (nv, 2)
    area: float
    diameter: float
    barycenter: np.ndarray  # (2,)
    edge_lengths: np.ndarray  # (nv,)
    edge_tangents: np.ndarray  # (nv, 2), unit, along the traversal
    edge_normals: np.ndarray  # (nv, 2), unit, outward
    vertex_sizes: np.ndarray  # (nv,), h_v

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)


@dataclass(frozen=True)
class ShapeRegularityReport:
    rho: np.ndarray  # kernel inradius / h_K, per cell
    eta: np.ndarray  # min edge length / h_K, per cell
    flagged: np.ndarray  # cells with an empty (or degenerate) kernel

    @property
    def rho_min(self) -> float:
        return float(self.rho.min())

    @property
    def eta_min(self) -> float:
        return float(self.eta.min())


def shoelace_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(pts: np.ndarray) -> np.ndarray:
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return np.array([cx, cy])


def polygon_diameter(pts: np.ndarray) -> float:
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _in_box(a, b, c) -> bool:
    return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))


def _segments_intersect(p1, p2, q1, q2) -> bool:
    d1, d2 = _orient(q1, q2, p1), _orient(q1, q2, p2)
    d3, d4 = _orient(p1, p2, q1), _orient(p1, p2, q2)
    if d1 * d2 < 0 and d3 * d4 < 0:
        return True
    return ((d1 == 0 and _in_box(q1, q2, p1)) or (d2 == 0 and _in_box(q1, q2, p2))
            or (d3 == 0 and _in_box(p1, p2, q1)) or (d4 == 0 and _in_box(p1, p2, q2)))


def is_simple_polygon(pts: np.ndarray) -> bool:
    n = len(pts)
    for i in range(n):
        a, b = pts[i], pts[(i + 1) % n]
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_intersect(a, b, pts[j], pts[(j + 1) % n]):
                return False
    return True


def convex_hull_corners(points: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Counterclockwise corners of the convex hull, collinear points dropped."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    scale = max(np.ptp(pts[:, 0]), np.ptp(pts[:, 1]), 1e-300)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    tol = rtol * scale * scale
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= tol:
            lower.pop()
        lower.append(p)
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= tol:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


class PolygonalMesh:
    """A conforming-by-vertices partition of a convex polygon into polygons.

    Parameters
    ----------
    vertices : array_like, shape (nv, 2)
    cells : sequence of integer sequences
        Counterclockwise vertex cycles. Hanging nodes are ordinary entries of
        the cycles of the cells they sit on.
    validate : bool
        Check all invariants on construction (raises :class:`MeshError`).
    """

    def __init__(self, vertices, cells, validate: bool = True):
        self.vertices = np.ascontiguousarray(vertices, dtype=float).reshape(-1, 2)
        self.cells = [np.asarray(c, dtype=np.int64) for c in cells]
        if validate:
            self._check_cells()
        self._build_edges()
        if validate:
            self._check_topology()

    # -- construction -----------------------------------------------------

    def _check_cells(self):
        nv = len(self.vertices)
        used = np.zeros(nv, dtype=bool)
        for k, cyc in enumerate(self.cells):
            if len(cyc) < 3:
                raise MeshError(f"cell {k} has fewer than 3 vertices")
            if cyc.min() < 0 or cyc.max() >= nv:
                raise MeshError(f"cell {k} references a vertex index outside [0, {nv})")
            if len(np.unique(cyc)) != len(cyc):
                raise MeshError(f"cell {k} repeats a vertex")
            pts = self.vertices[cyc]
            if shoelace_area(pts) <= 0.0:
                raise MeshError(f"cell {k} is not counterclockwise (orientation error)")
            if not is_simple_polygon(pts):
                raise MeshError(f"cell {k} is not a simple polygon")
            used[cyc] = True
        if not used.all():
            raise MeshError(f"vertex {int(np.flatnonzero(~used)[0])} belongs to no cell")

    def _build_edges(self):
        index: dict[tuple[int, int], int] = {}
        edges, edge_cells = [], []
        self.cell_edges, self.cell_edge_signs = [], []
        for k, cyc in enumerate(self.cells):
            ids = np.empty(len(cyc), dtype=np.int64)
            signs = np.empty(len(cyc), dtype=np.int64)
            for i, a in enumerate(cyc):
                b = cyc[(i + 1) % len(cyc)]
                key = (int(min(a, b)), int(max(a, b)))
                e = index.get(key)
                if e is None:
                    e = index[key] = len(edges)
                    edges.append(key)
                    edge_cells.append([k, -1])
                elif edge_cells[e][1] == -1:
                    edge_cells[e][1] = k
                else:
                    raise MeshError(f"edge {key} is shared by more than two cells")
                ids[i] = e
                signs[i] = 1 if a < b else -1
            self.cell_edges.append(ids)
            self.cell_edge_signs.append(signs)
        self.edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        self.edge_cells = np.array(edge_cells, dtype=np.int64).reshape(-1, 2)
        self.edge_index = index
        self.boundary_edge_mask = self.edge_cells[:, 1] < 0
        self.boundary_vertex_mask = np.zeros(len(self.vertices), dtype=bool)
        self.boundary_vertex_mask[self.edges[self.boundary_edge_mask].ravel()] = True

    def _check_topology(self):
        # Interior edges must be traversed in opposite directions by their two cells.
        seen: dict[int, int] = {}
        for signs, ids in zip(self.cell_edge_signs, self.cell_edges):
            for s, e in zip(signs, ids):
                if e in seen and seen[e] == s:
                    raise MeshError(f"edge {tuple(self.edges[e])} has inconsistent orientation")
                seen[e] = int(s)
        domain_area = shoelace_area(self.domain_corners)
        total = float(sum(self.areas))
        if abs(total - domain_area) > 1e-10 * domain_area:
            raise MeshError(
                f"cell areas sum to {total!r} but the convex hull has area {domain_area!r}"
            )

    # -- counts -------------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def boundary_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_vertex_mask)

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_cells

    # -- geometry -------------------------------------------------------------

    @cached_property
    def domain_corners(self) -> np.ndarray:
        return convex_hull_corners(self.vertices)

    @cached_property
    def areas(self) -> np.ndarray:
        return np.array([shoelace_area(self.vertices[c]) for c in self.cells])

    @cached_property
    def diameters(self) -> np.ndarray:
        return np.array([polygon_diameter(self.vertices[c]) for c in self.cells])

    @cached_property
    def barycenters(self) -> np.ndarray:
        return np.array([polygon_centroid(self.vertices[c]) for c in self.cells])

    @cached_property
    def vertex_sizes(self) -> np.ndarray:
        """Mean diameter of the cells sharing each vertex."""
        total = np.zeros(self.n_vertices)
        count = np.zeros(self.n_vertices)
        for cyc, h in zip(self.cells, self.diameters):
            total[cyc] += h
            count[cyc] += 1
        return total / count

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    def cell_geometry(self, k: int) -> CellGeometry:
        if not 0 <= k < self.n_cells:
            raise IndexError(f"cell id {k} out of range [0, {self.n_cells})")
        cyc = self.cells[k]
        pts = self.vertices[cyc]
        vec = np.roll(pts, -1, axis=0) - pts
        lengths = np.hypot(vec[:, 0], vec[:, 1])
        tangents = vec / lengths[:, None]
        normals = np.column_stack([tangents[:, 1], -tangents[:, 0]])
        return CellGeometry(
            vertices=pts,
            area=float(self.areas[k]),
            diameter=float(self.diameters[k]),
            barycenter=self.barycenters[k],
            edge_lengths=lengths,
            edge_tangents=tangents,
            edge_normals=normals,
            vertex_sizes=self.vertex_sizes[cyc],
        )

    def __eq__(self, other):
        if not isinstance(other, PolygonalMesh):
            return NotImplemented
        return (np.array_equal(self.vertices, other.vertices)
                and len(self.cells) == len(other.cells)
                and all(np.array_equal(a, b) for a, b in zip(self.cells, other.cells)))

    def __repr__(self):
        return f"PolygonalMesh(n_vertices={self.n_vertices}, n_cells={self.n_cells}, h={self.h:.4g})"


def kernel_inradius(pts: np.ndarray) -> float:
    """Radius of the largest disc inside the kernel of a ccw polygon (0 if empty)."""
    vec = np.roll(pts, -1, axis=0) - pts
    lengths = np.hypot(vec[:, 0], vec[:, 1])
    normals = np.column_stack([vec[:, 1], -vec[:, 0]]) / lengths[:, None]
    # n.x + r <= n.a for every edge; maximise r.
    a_ub = np.column_stack([normals, np.ones(len(pts))])
    b_ub = np.einsum("ij,ij->i", normals, pts)
    res = linprog(c=[0.0, 0.0, -1.0], A_ub=a_ub, b_ub=b_ub,
                  bounds=[(None, None), (None, None), (0.0, None)], method="highs")
    if res.status != 0:
        return 0.0
    return max(float(res.x[2]), 0.0)


def shape_regularity_report(mesh: PolygonalMesh) -> ShapeRegularityReport:
    rho = np.empty(mesh.n_cells)
    eta = np.empty(mesh.n_cells)
    for k in range(mesh.n_cells):
        geom = mesh.cell_geometry(k)
        rho[k] = kernel_inradius(geom.vertices) / geom.diameter
        eta[k] = geom.edge_lengths.min() / geom.diameter
    return ShapeRegularityReport(rho=rho, eta=eta, flagged=np.flatnonzero(rho <= 0.0))
