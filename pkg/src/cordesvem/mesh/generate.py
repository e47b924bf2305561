"""Mesh generators: uniform squares, Lloyd-relaxed clipped Voronoi, graded quadtrees."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Voronoi, cKDTree

from .core import MeshError, PolygonalMesh, polygon_centroid, shoelace_area

Box = tuple[float, float, float, float]  # (xmin, xmax, ymin, ymax)


def _check_box(box: Box) -> Box:
    x0, x1, y0, y1 = map(float, box)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate box {box!r}")
    return x0, x1, y0, y1


def build_uniform_square_mesh(n: int, box: Box = (-1.0, 1.0, -1.0, 1.0)) -> PolygonalMesh:
    """``n x n`` congruent rectangles on ``box``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x0, x1, y0, y1 = _check_box(box)
    i = np.arange(n + 1)
    xs = x0 + (x1 - x0) * i / n
    ys = y0 + (y1 - y0) * i / n
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    cells = []
    for j in range(n):
        for k in range(n):
            a = j * (n + 1) + k
            cells.append([a, a + 1, a + n + 2, a + n + 1])
    return PolygonalMesh(vertices, cells)


# -- Voronoi ------------------------------------------------------------------


def _clipped_voronoi_cells(seeds: np.ndarray, box: Box):
    """Voronoi cells of ``seeds`` clipped to ``box`` (mirror construction)."""
    x0, x1, y0, y1 = box
    sx, sy = seeds[:, 0], seeds[:, 1]
    mirrored = np.vstack([
        seeds,
        np.column_stack([2 * x0 - sx, sy]),
        np.column_stack([2 * x1 - sx, sy]),
        np.column_stack([sx, 2 * y0 - sy]),
        np.column_stack([sx, 2 * y1 - sy]),
    ])
    vor = Voronoi(mirrored)
    verts = vor.vertices.copy()
    scale = max(x1 - x0, y1 - y0)
    snap = 1e-12 * scale
    for col, lo, hi in ((0, x0, x1), (1, y0, y1)):
        c = verts[:, col]
        c[np.abs(c - lo) < snap] = lo
        c[np.abs(c - hi) < snap] = hi
    cells = []
    for i in range(len(seeds)):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or len(region) < 3:
            raise MeshError(f"Voronoi region of seed {i} is unbounded")
        cells.append(list(region))
    return verts, cells


def _merge_vertices(verts: np.ndarray, cells, tol: float):
    """Collapse vertices closer than ``tol``; renumber by first use."""
    rep = np.arange(len(verts))
    for a, b in sorted(cKDTree(verts).query_pairs(tol)):
        ra, rb = rep[a], rep[b]
        while rep[ra] != ra:
            ra = rep[ra]
        while rep[rb] != rb:
            rb = rep[rb]
        rep[max(ra, rb)] = min(ra, rb)
    for i in range(len(rep)):
        r = i
        while rep[r] != r:
            r = rep[r]
        rep[i] = r

    new_index: dict[int, int] = {}
    out_cells = []
    for cyc in cells:
        merged = []
        for v in cyc:
            r = int(rep[v])
            if not merged or merged[-1] != r:
                merged.append(r)
        if len(merged) > 1 and merged[0] == merged[-1]:
            merged.pop()
        out_cells.append([new_index.setdefault(r, len(new_index)) for r in merged])
    order = np.empty(len(new_index), dtype=np.int64)
    for old, new in new_index.items():
        order[new] = old
    return verts[order], out_cells


def _orient_ccw(verts: np.ndarray, cells):
    out = []
    for cyc in cells:
        if shoelace_area(verts[cyc]) < 0:
            cyc = cyc[::-1]
        out.append(cyc)
    return out


def build_voronoi_mesh(n_seeds: int, seed: int = 0, lloyd_iters: int = 3,
                       box: Box = (-1.0, 1.0, -1.0, 1.0)) -> PolygonalMesh:
    """Clipped Voronoi mesh of random seeds after ``lloyd_iters`` centroid steps.

    Identical arguments give bit-identical meshes.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    x0, x1, y0, y1 = box = _check_box(box)
    if n_seeds == 1:
        return PolygonalMesh([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], [[0, 1, 2, 3]])

    rng = np.random.default_rng(seed)
    seeds = np.column_stack([rng.uniform(x0, x1, n_seeds), rng.uniform(y0, y1, n_seeds)])
    tol = 1e-10 * max(x1 - x0, y1 - y0)
    failures = 0
    it = 0
    while True:
        if len(np.unique(seeds, axis=0)) < n_seeds:
            failures += 1
            if failures >= 10:
                raise MeshError("duplicate Voronoi seeds persisted after 10 perturbations")
            seeds = seeds + rng.normal(scale=1e-6 * (x1 - x0), size=seeds.shape)
            seeds[:, 0] = np.clip(seeds[:, 0], x0 + tol, x1 - tol)
            seeds[:, 1] = np.clip(seeds[:, 1], y0 + tol, y1 - tol)
            continue
        verts, cells = _clipped_voronoi_cells(seeds, box)
        if it == lloyd_iters:
            break
        seeds = np.array([polygon_centroid(_ccw_points(verts[c])) for c in cells])
        it += 1

    verts, cells = _merge_vertices(verts, cells, tol)
    return PolygonalMesh(verts, _orient_ccw(verts, cells))


def _ccw_points(pts):
    return pts if shoelace_area(pts) > 0 else pts[::-1]


# -- graded quadtree ------------------------------------------------------------


def build_graded_mesh(tau: float, power: float = 4.0, exponent: float = 2.8, n0: int = 2,
                      box: Box = (0.0, 1.0, 0.0, 1.0), max_depth: int = 30) -> PolygonalMesh:
    """Quadtree mesh refined towards the origin.

    Starting from ``n0 x n0`` squares, a square with diameter ``h`` and
    barycenter ``c`` is split into four while ``h**power * |c|**(-exponent) > tau``.
    Hanging nodes become extra vertices of the coarser neighbours.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if n0 < 1:
        raise ValueError("n0 must be >= 1")
    x0, x1, y0, y1 = _check_box(box)
    if not np.isclose(x1 - x0, y1 - y0, rtol=1e-14):
        raise ValueError("graded meshes need a square box")
    side0 = (x1 - x0) / n0

    def violates(i, j, level):
        s = side0 / 2**level
        cx, cy = x0 + (i + 0.5) * s, y0 + (j + 0.5) * s
        return (np.sqrt(2.0) * s) ** power * np.hypot(cx, cy) ** (-exponent) > tau

    leaves = []

    def refine(i, j, level):
        if not violates(i, j, level):
            leaves.append((i, j, level))
            return
        if level >= max_depth:
            raise MeshError(
                f"graded refinement exceeded depth {max_depth} at cell (i={i}, j={j}, level={level})"
            )
        for di, dj in ((0, 0), (1, 0), (0, 1), (1, 1)):
            refine(2 * i + di, 2 * j + dj, level + 1)

    for j in range(n0):
        for i in range(n0):
            refine(i, j, 0)
    return _quadtree_to_mesh(leaves, n0, (x0, x1, y0, y1))


def _quadtree_to_mesh(leaves, n0, box) -> PolygonalMesh:
    depth = max(level for _, _, level in leaves)
    squares = []
    points = set()
    for i, j, level in leaves:
        s = 1 << (depth - level)
        a, b = i * s, j * s
        squares.append((a, b, s))
        points.update({(a, b), (a + s, b), (a + s, b + s), (a, b + s)})
    on_x: dict[int, list[int]] = {}
    on_y: dict[int, list[int]] = {}
    for px, py in points:
        on_x.setdefault(px, []).append(py)
        on_y.setdefault(py, []).append(px)
    for v in on_x.values():
        v.sort()
    for v in on_y.values():
        v.sort()

    def between(sorted_vals, lo, hi):
        return sorted_vals[bisect.bisect_left(sorted_vals, lo):bisect.bisect_right(sorted_vals, hi)]

    index: dict[tuple[int, int], int] = {}
    cells = []
    for a, b, s in squares:
        ring = [(x, b) for x in between(on_y[b], a, a + s)[:-1]]
        ring += [(a + s, y) for y in between(on_x[a + s], b, b + s)[:-1]]
        ring += [(x, b + s) for x in between(on_y[b + s], a, a + s)[::-1][:-1]]
        ring += [(a, y) for y in between(on_x[a], b, b + s)[::-1][:-1]]
        cells.append([index.setdefault(p, len(index)) for p in ring])

    x0, x1, y0, y1 = box
    n = n0 << depth
    coords = np.array(list(index.keys()), dtype=float)
    vertices = np.column_stack([x0 + (x1 - x0) * coords[:, 0] / n,
                                y0 + (y1 - y0) * coords[:, 1] / n])
    return PolygonalMesh(vertices, cells)


# -- families -------------------------------------------------------------------


@dataclass
class MeshFamily:
    """A deterministic sequence of meshes indexed by refinement level.

    kinds
        ``uniform-even``: N = n * 2**level.
        ``uniform-odd``: N = (n - 1) * 2**level + 1 (5, 9, 17, ... for n = 5).
        ``voronoi``: seeds * 4**level cells.
        ``graded``: threshold tau / 2**level.
    """

    kind: str
    n: int = 4
    seeds: int = 16
    seed: int = 0
    lloyd: int = 3
    tau: float = 1e-2
    n0: int = 2
    box: Box = field(default=(-1.0, 1.0, -1.0, 1.0))

    KINDS = ("uniform-even", "uniform-odd", "voronoi", "graded")

    def __post_init__(self):
        if self.kind == "uniform":
            self.kind = "uniform-even"
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown mesh family {self.kind!r}; expected one of {self.KINDS}")

    def mesh(self, level: int) -> PolygonalMesh:
        if self.kind == "uniform-even":
            return build_uniform_square_mesh(self.n * 2**level, self.box)
        if self.kind == "uniform-odd":
            return build_uniform_square_mesh((self.n - 1) * 2**level + 1, self.box)
        if self.kind == "voronoi":
            return build_voronoi_mesh(self.seeds * 4**level, self.seed + level, self.lloyd, self.box)
        return build_graded_mesh(self.tau / 2**level, n0=self.n0, box=self.box)

    def describe(self, level: int) -> dict:
        d = {"kind": self.kind, "level": level}
        if self.kind == "uniform-even":
            d["N"] = self.n * 2**level
        elif self.kind == "uniform-odd":
            d["N"] = (self.n - 1) * 2**level + 1
        elif self.kind == "voronoi":
            d.update(seeds=self.seeds * 4**level, seed=self.seed + level, lloyd=self.lloyd)
        else:
            d.update(tau=self.tau / 2**level, n0=self.n0)
        return d
