"""Global numbering, Dirichlet elimination, sparse assembly and direct solve.

Global unknowns: ``3 * v + c`` for vertex ``v`` (c = 0 value, 1 d/dx, 2 d/dy),
then for m = 3 one normal moment per edge, taken along the edge's global
normal (rotated min-to-max tangent).  Boundary data are imposed strongly by
writing the full vector as ``x = T z + x0`` with ``z`` the free unknowns.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.io
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .cordes import verify_field
from .element import ElementError, LocalElement
from .mesh import MeshError, PolygonalMesh
from .problems import ProblemDefinition
from .quadrature import gauss_legendre01, scheme_rule

RESIDUAL_TOL = 1e-9


class AssemblyError(RuntimeError):
    """One or more cells failed; ``cells`` lists (cell id, message) pairs."""

    def __init__(self, failures):
        self.cells = failures
        head = ", ".join(f"cell {k}: {msg}" for k, msg in failures[:5])
        more = f" (+{len(failures) - 5} more)" if len(failures) > 5 else ""
        super().__init__(f"element construction failed on {len(failures)} cell(s): {head}{more}")


class SolverError(RuntimeError):
    """Singular or inaccurate factorisation."""


class CordesViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class DofMap:
    """Local-to-global map with orientation signs for edge moments."""

    m: int
    n_vertices: int
    n_edges: int
    cell_dofs: tuple[np.ndarray, ...]
    cell_signs: tuple[np.ndarray, ...]

    @property
    def n_dofs(self) -> int:
        return 3 * self.n_vertices + (self.n_edges if self.m == 3 else 0)

    def vertex_dofs(self, v: int) -> np.ndarray:
        return np.arange(3 * v, 3 * v + 3)

    def edge_dof(self, e: int) -> int:
        if self.m != 3:
            raise IndexError("edge moments exist only for m = 3")
        return 3 * self.n_vertices + e


def build_dof_map(mesh: PolygonalMesh, m: int) -> DofMap:
    if m not in (2, 3):
        raise ValueError(f"unsupported order m={m}; expected 2 or 3")
    dofs, signs = [], []
    for k, cell in enumerate(mesh.cells):
        cell = np.asarray(cell)
        idx = (3 * cell[:, None] + np.arange(3)).ravel()
        sg = np.ones(len(idx))
        if m == 3:
            idx = np.concatenate([idx, 3 * mesh.n_vertices + np.asarray(mesh.cell_edges[k])])
            sg = np.concatenate([sg, np.asarray(mesh.cell_edge_signs[k], dtype=float)])
        dofs.append(idx)
        signs.append(sg)
    return DofMap(m, mesh.n_vertices, mesh.n_edges, tuple(dofs), tuple(signs))


def global_edge_normal(mesh: PolygonalMesh, e: int) -> np.ndarray:
    a, b = mesh.edges[e]
    t = mesh.vertices[b] - mesh.vertices[a]
    t = t / np.hypot(*t)
    return np.array([t[1], -t[0]])


@dataclass
class DirichletSet:
    """Strong boundary constraints.

    ``fixed`` maps global indices to values.  ``tangential`` holds
    ``(vertex, t, value)`` for sides that are not axis-aligned, meaning
    ``t . grad u(vertex) = value`` with the normal component left free.
    """

    fixed: dict[int, float] = field(default_factory=dict)
    tangential: list[tuple[int, np.ndarray, float]] = field(default_factory=list)
    corners: list[int] = field(default_factory=list)

    @property
    def indices(self) -> np.ndarray:
        return np.array(sorted(self.fixed), dtype=np.int64)

    @property
    def values(self) -> np.ndarray:
        return np.array([self.fixed[i] for i in sorted(self.fixed)])


def _side_membership(mesh: PolygonalMesh, tol: float = 1e-12):
    """For each boundary vertex: ('corner', None) or ('side', unit tangent)."""
    corners = mesh.domain_corners
    nc = len(corners)
    scale = max(np.ptp(mesh.vertices[:, 0]), np.ptp(mesh.vertices[:, 1]))
    atol = tol * scale
    out = {}
    for v in mesh.boundary_vertices:
        p = mesh.vertices[v]
        if np.min(np.hypot(*(corners - p).T)) <= atol:
            out[int(v)] = ("corner", None)
            continue
        sides = []
        for i in range(nc):
            a, b = corners[i], corners[(i + 1) % nc]
            d = b - a
            L = np.hypot(*d)
            dist = abs(d[0] * (p[1] - a[1]) - d[1] * (p[0] - a[0])) / L
            s = np.dot(p - a, d) / L**2
            if dist <= atol and -tol <= s <= 1 + tol:
                sides.append(d / L)
        if len(sides) != 1:
            what = "no" if not sides else "several"
            raise MeshError(f"boundary vertex {v} at {tuple(p)} lies on {what} side(s) of the domain")
        out[int(v)] = ("side", sides[0])
    return out


def classify_dirichlet(mesh: PolygonalMesh, m: int, g: Callable, grad_g: Callable) -> DirichletSet:
    """Values at every boundary vertex, tangential derivative on sides, full gradient at corners."""
    bv = mesh.boundary_vertices
    gv = np.asarray(g(mesh.vertices[bv]), dtype=float).reshape(-1)
    gg = np.asarray(grad_g(mesh.vertices[bv]), dtype=float).reshape(-1, 2)
    members = _side_membership(mesh)
    ds = DirichletSet()
    for v, val, grad in zip(bv, gv, gg):
        v = int(v)
        ds.fixed[3 * v] = float(val)
        kind, t = members[v]
        if kind == "corner":
            ds.fixed[3 * v + 1] = float(grad[0])
            ds.fixed[3 * v + 2] = float(grad[1])
            ds.corners.append(v)
        elif abs(t[1]) <= 1e-14:
            ds.fixed[3 * v + 1] = float(grad[0])
        elif abs(t[0]) <= 1e-14:
            ds.fixed[3 * v + 2] = float(grad[1])
        else:
            ds.tangential.append((v, t, float(t @ grad)))
    return ds


def constraint_basis(n: int, ds: DirichletSet):
    """``T`` (n x n_free, sparse) and ``x0`` with every ``x = T z + x0`` admissible."""
    x0 = np.zeros(n)
    tied = {}
    for v, t, val in ds.tangential:
        x0[3 * v + 1:3 * v + 3] = val * t
        tied[3 * v + 1] = (3 * v + 2, np.array([-t[1], t[0]]))
    for i, val in ds.fixed.items():
        x0[i] = val
    rows, cols, vals = [], [], []
    col = 0
    skip = set(ds.fixed) | {j for j, _ in tied.values()}
    for i in range(n):
        if i in tied:
            j, nrm = tied[i]
            rows += [i, j]
            cols += [col, col]
            vals += [nrm[0], nrm[1]]
            col += 1
        elif i not in skip:
            rows.append(i)
            cols.append(col)
            vals.append(1.0)
            col += 1
    T = sp.csr_matrix((vals, (rows, cols)), shape=(n, col))
    return T, x0


def interpolate(mesh: PolygonalMesh, m: int, u: Callable, grad_u: Callable) -> np.ndarray:
    """Global DOFs of the Lagrange interpolant of a smooth function."""
    dm = build_dof_map(mesh, m)
    x = np.zeros(dm.n_dofs)
    x[0:3 * mesh.n_vertices:3] = u(mesh.vertices)
    gv = np.asarray(grad_u(mesh.vertices), dtype=float).reshape(-1, 2)
    x[1:3 * mesh.n_vertices:3] = gv[:, 0]
    x[2:3 * mesh.n_vertices:3] = gv[:, 1]
    if m == 3:
        t, w = gauss_legendre01(LocalElement.EDGE_POINTS)
        for e, (a, b) in enumerate(mesh.edges):
            pa, pb = mesh.vertices[a], mesh.vertices[b]
            pts = pa + t[:, None] * (pb - pa)
            dn = np.asarray(grad_u(pts), dtype=float).reshape(-1, 2) @ global_edge_normal(mesh, e)
            x[dm.edge_dof(e)] = np.hypot(*(pb - pa)) * (w @ dn)
    return x


@dataclass
class GlobalSystem:
    """Reduced system ``matrix @ z = rhs`` over the free unknowns."""

    mesh: PolygonalMesh
    m: int
    beta: float
    problem: ProblemDefinition
    dofmap: DofMap
    dirichlet: DirichletSet
    full_matrix: sp.csr_matrix
    full_rhs: np.ndarray
    T: sp.csr_matrix
    x0: np.ndarray
    matrix: sp.csr_matrix
    rhs: np.ndarray
    elements: list

    @property
    def n_free(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_dofs(self) -> int:
        return self.dofmap.n_dofs

    def expand(self, z) -> np.ndarray:
        return self.T @ np.asarray(z, dtype=float) + self.x0


@dataclass
class Solution:
    dofs: np.ndarray
    projections: list[np.ndarray]
    elements: list
    residual: float
    provenance: dict

    def cell_polynomial(self, k: int):
        """(basis, coefficients) of the projected solution on cell ``k``."""
        return self.elements[k].basis, self.projections[k]


def _cell_chunk(mesh, m, beta, problem, rule_factory, cells):
    out = []
    for k in cells:
        try:
            geom = mesh.cell_geometry(k)
            el = LocalElement(geom, m, beta)
            rule = rule_factory(geom, m)
            Kc, F = el.local_system(problem.A, problem.scaling, problem.f, rule)
            out.append((k, el, Kc + el.stabilization, F, None))
        except (ElementError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            out.append((k, None, None, None, str(exc)))
    return out


def assemble(mesh: PolygonalMesh, m: int, problem: ProblemDefinition, beta: float = 1.0,
             rule_factory: Callable = scheme_rule, threads: int | None = 1,
             check_cordes: bool = True) -> GlobalSystem:
    """Assemble the scheme with quadrature and eliminate the boundary data.

    Parameters
    ----------
    check_cordes : bool
        Sample the coefficient on every cell first and refuse to assemble if
        the samples violate the Cordes condition.
    threads : int, optional
        Worker threads for the per-cell loop; ``None`` uses all cores.
        Results are merged in cell order, so output does not depend on it.
    """
    if check_cordes:
        rep = verify_field(problem.A, mesh, samples_per_cell=1)
        if rep.failed:
            raise CordesViolation(
                f"coefficient fails the Cordes condition (mu estimate {rep.mu_estimate:.4g} "
                f"at {rep.worst_point})")

    dm = build_dof_map(mesh, m)
    cells = range(mesh.n_cells)
    nthreads = threads or 0
    if threads is None:
        import os
        nthreads = os.cpu_count() or 1
    if nthreads <= 1 or mesh.n_cells < 64:
        results = _cell_chunk(mesh, m, beta, problem, rule_factory, cells)
    else:
        size = math.ceil(mesh.n_cells / nthreads)
        chunks = [range(i, min(i + size, mesh.n_cells)) for i in range(0, mesh.n_cells, size)]
        with ThreadPoolExecutor(nthreads) as pool:
            parts = pool.map(lambda c: _cell_chunk(mesh, m, beta, problem, rule_factory, c), chunks)
            results = [r for part in parts for r in part]

    failures = [(k, msg) for k, _, _, _, msg in results if msg is not None]
    if failures:
        raise AssemblyError(failures)

    rows, cols, vals = [], [], []
    rhs = np.zeros(dm.n_dofs)
    elements = []
    for k, el, Kl, F, _ in results:
        idx, s = dm.cell_dofs[k], dm.cell_signs[k]
        rows.append(np.repeat(idx, len(idx)))
        cols.append(np.tile(idx, len(idx)))
        vals.append((s[:, None] * Kl * s[None, :]).ravel())
        np.add.at(rhs, idx, s * F)
        elements.append(el)
    n = dm.n_dofs
    K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    K.sum_duplicates()

    ds = classify_dirichlet(mesh, m, problem.g, problem.grad_g)
    T, x0 = constraint_basis(n, ds)
    Tt = T.T.tocsr()
    A = (Tt @ K @ T).tocsr()
    b = Tt @ (rhs - K @ x0)
    return GlobalSystem(mesh, m, float(beta), problem, dm, ds, K, rhs, T, x0, A, b, elements)


def _solve_sparse(A: sp.spmatrix, b: np.ndarray):
    if A.shape[0] == 0:
        return np.zeros(0), 0.0
    try:
        lu = splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise SolverError(f"factorisation failed: {exc}") from exc
    z = lu.solve(b)
    if not np.all(np.isfinite(z)):
        raise SolverError("factorisation produced non-finite values (singular matrix)")
    scale = np.linalg.norm(b)
    res = np.linalg.norm(A @ z - b) / (scale if scale > 0 else 1.0)
    if res > RESIDUAL_TOL:  # one step of iterative refinement
        z = z + lu.solve(b - A @ z)
        res = np.linalg.norm(A @ z - b) / (scale if scale > 0 else 1.0)
    if res > RESIDUAL_TOL:
        raise SolverError(f"relative residual {res:.3e} exceeds {RESIDUAL_TOL:g}")
    return z, float(res)


def solve_direct(system: GlobalSystem) -> Solution:
    """Sparse LU solve; returns full DOFs and per-cell projected polynomials."""
    z, res = _solve_sparse(system.matrix, system.rhs)
    x = system.expand(z)
    for i, val in system.dirichlet.fixed.items():
        x[i] = val
    dm = system.dofmap
    proj = [el.projection @ (dm.cell_signs[k] * x[dm.cell_dofs[k]])
            for k, el in enumerate(system.elements)]
    prov = {
        "mesh_cells": system.mesh.n_cells,
        "mesh_vertices": system.mesh.n_vertices,
        "m": system.m,
        "beta": system.beta,
        "problem": system.problem.name,
        "n_dofs": system.n_dofs,
        "n_free": system.n_free,
    }
    return Solution(x, proj, system.elements, res, prov)


def local_dofs(system: GlobalSystem, x, k: int) -> np.ndarray:
    """Local (outward-oriented) DOF vector of cell ``k`` from a global vector."""
    dm = system.dofmap
    return dm.cell_signs[k] * np.asarray(x)[dm.cell_dofs[k]]


def write_matrix_market(system: GlobalSystem, path) -> None:
    scipy.io.mmwrite(str(path), system.matrix, comment="reduced system matrix (free unknowns)")
