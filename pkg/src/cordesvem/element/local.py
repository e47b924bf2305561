"""Local H2-conforming virtual element on one polygon (orders m = 2, 3).

Local DOF vector, in this order:

* per vertex ``v``: ``v(x_v), d_x v(x_v), d_y v(x_v)`` (unscaled),
* per edge (m = 3 only): ``int_e d_n v`` with ``n`` the outward unit normal.

Edge ``i`` runs from local vertex ``i`` to ``i + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mesh.core import CellGeometry
from ..quadrature import QuadratureRule, fan_rule, gauss_legendre01
from .basis import ScaledMonomials, dim_p

SUPPORTED_ORDERS = (2, 3)


class ElementError(RuntimeError):
    """Local element could not be built (unsupported order or degenerate geometry)."""


@dataclass(frozen=True)
class DofLayout:
    n_vertices: int
    m: int

    @property
    def per_edge_value(self) -> int:
        return max(self.m - 3, 0)  # dim P_{m-4}(e)

    @property
    def per_edge_normal(self) -> int:
        return max(self.m - 2, 0)  # dim P_{m-3}(e)

    @property
    def n_interior(self) -> int:
        return dim_p(self.m - 4)

    @property
    def n_vertex_dofs(self) -> int:
        return 3 * self.n_vertices

    @property
    def n_edge_dofs(self) -> int:
        return self.n_vertices * (self.per_edge_value + self.per_edge_normal)

    @property
    def size(self) -> int:
        return self.n_vertex_dofs + self.n_edge_dofs + self.n_interior

    def vertex(self, i: int) -> slice:
        return slice(3 * i, 3 * i + 3)

    def edge_normal(self, i: int) -> int:
        if self.m != 3:
            raise IndexError("edge normal moments exist only for m = 3")
        return 3 * self.n_vertices + i


# Cubic Hermite basis on [0, 1] and first derivatives.
def _hermite(t):
    t2, t3 = t * t, t * t * t
    return np.stack([1 - 3 * t2 + 2 * t3, t - 2 * t2 + t3, 3 * t2 - 2 * t3, t3 - t2], axis=-1)


def _hermite_dt(t):
    t2 = t * t
    return np.stack([-6 * t + 6 * t2, 1 - 4 * t + 3 * t2, 6 * t - 6 * t2, 3 * t2 - 2 * t], axis=-1)


class LocalElement:
    """Projections, stabilisation and local forms on one cell.

    Parameters
    ----------
    geom : CellGeometry
    m : int
        Polynomial consistency order, 2 or 3.
    beta : float
        Stabilisation scaling.
    """

    EDGE_POINTS = 4  # Gauss points per edge, exact to degree 7

    def __init__(self, geom: CellGeometry, m: int = 2, beta: float = 1.0):
        if m not in SUPPORTED_ORDERS:
            raise ElementError(f"order m={m} is not supported (use 2 or 3)")
        if beta <= 0:
            raise ValueError("beta must be positive")
        self.geom = geom
        self.m = m
        self.beta = float(beta)
        self.layout = DofLayout(geom.n_vertices, m)
        self.basis = ScaledMonomials(geom.barycenter, geom.diameter, m)
        self.low_basis = ScaledMonomials(geom.barycenter, geom.diameter, m - 2)

        self._t, self._w = gauss_legendre01(self.EDGE_POINTS)
        self._cell_rule = fan_rule(geom, 2 * (m - 2))
        # batched edge data, leading axes (edge, Gauss point)
        ne, nq = geom.n_vertices, len(self._t)
        self._edge_x = self._edge_points_all(self._t)
        self._edge_w = geom.edge_lengths[:, None] * self._w[None, :]
        self._val, self._dtau, self._dn = self._edge_operators_all(self._t)
        self._grad = (geom.edge_tangents[:, None, :, None] * self._dtau[:, :, None, :]
                      + geom.edge_normals[:, None, :, None] * self._dn[:, :, None, :])
        self._flat_x = self._edge_x.reshape(ne * nq, 2)

        self.dof_matrix = self._polynomial_dofs()
        self.projection = self._hessian_projection()
        self.hessian_l2 = self._hessian_l2_projection()
        self.laplacian_l2 = self.hessian_l2[0] + self.hessian_l2[2]
        self.stabilization = self._stabilization()

    # -- edge traces ----------------------------------------------------------

    def _edge_points_all(self, t):
        a = self.geom.vertices
        b = np.roll(a, -1, axis=0)
        return a[:, None, :] + np.asarray(t)[None, :, None] * (b - a)[:, None, :]

    def _edge_operators_all(self, t):
        """Maps DOF vector -> value, tangential and normal derivative traces,
        each of shape (n_edges, len(t), ndof)."""
        t = np.asarray(t, dtype=float)
        g = self.geom
        ne, nq, nd = g.n_vertices, len(t), self.layout.size
        e = np.arange(ne)
        ia, ib = 3 * e, 3 * ((e + 1) % ne)
        L = g.edge_lengths
        tau, nrm = g.edge_tangents, g.edge_normals
        H, dH = _hermite(t), _hermite_dt(t)

        val = np.zeros((ne, nq, nd))
        dtau = np.zeros((ne, nq, nd))
        dn = np.zeros((ne, nq, nd))
        # value trace: Hermite on (v_a, L tau.g_a, v_b, L tau.g_b)
        for base, hv, hg in ((ia, 0, 1), (ib, 2, 3)):
            val[e, :, base] = H[None, :, hv]
            dtau[e, :, base] = dH[None, :, hv] / L[:, None]
            for c in range(2):
                val[e, :, base + 1 + c] = H[None, :, hg] * (L * tau[:, c])[:, None]
                dtau[e, :, base + 1 + c] = dH[None, :, hg] * tau[:, c][:, None]
        # normal trace: linear for m = 2, plus a bubble fixed by the edge moment for m = 3
        la, lb = 1.0 - t, t
        if self.m == 3:
            bub = 6.0 * t * (1.0 - t)
            la = la - 0.5 * bub
            lb = lb - 0.5 * bub
            dn[e, :, 3 * ne + e] = bub[None, :] / L[:, None]
        for c in range(2):
            dn[e, :, ia + 1 + c] = la[None, :] * nrm[:, c][:, None]
            dn[e, :, ib + 1 + c] = lb[None, :] * nrm[:, c][:, None]
        return val, dtau, dn

    def _edge_operators(self, i: int, t):
        val, dtau, dn = self._edge_operators_all(t)
        return val[i], dtau[i], dn[i]

    def edge_value_trace(self, dofs, i: int) -> np.ndarray:
        """Power-basis coefficients (in t in [0, 1], constant first) of the value trace on edge ``i``."""
        t = np.linspace(0.0, 1.0, 4)
        vals = self._edge_operators(i, t)[0] @ np.asarray(dofs, dtype=float)
        return np.polynomial.polynomial.polyfit(t, vals, 3)

    def edge_normal_trace(self, dofs, i: int) -> np.ndarray:
        """Power-basis coefficients (in t) of the outward normal derivative on edge ``i``."""
        deg = self.m - 1
        t = np.linspace(0.0, 1.0, deg + 1)
        vals = self._edge_operators(i, t)[2] @ np.asarray(dofs, dtype=float)
        return np.polynomial.polynomial.polyfit(t, vals, deg)

    # -- polynomial data ----------------------------------------------------------

    def _polynomial_dofs(self) -> np.ndarray:
        """D: (ndof, dim P_m), DOFs of each scaled monomial."""
        g = self.geom
        D = np.zeros((self.layout.size, len(self.basis)))
        D[0:3 * g.n_vertices:3] = self.basis.values(g.vertices)
        grads = self.basis.gradients(g.vertices)
        D[1:3 * g.n_vertices:3] = grads[..., 0]
        D[2:3 * g.n_vertices:3] = grads[..., 1]
        if self.m == 3:
            ne, nq = self._edge_w.shape
            gr = self.basis.gradients(self._flat_x).reshape(ne, nq, -1, 2)
            dn = np.einsum("eqbk,ek->eqb", gr, g.edge_normals)
            D[3 * g.n_vertices:] = np.einsum("eq,eqb->eb", self._edge_w, dn)
        return D

    def _hessian_projection(self) -> np.ndarray:
        g = self.geom
        nb, nd = len(self.basis), self.layout.size
        rule = self._cell_rule
        hq = self.basis.hessians(rule.points)  # (nq, nb, 2, 2)
        gram = np.einsum("q,qaij,qbij->ab", rule.weights, hq, hq)

        # int_K D2v : D2q = -sum_e int_e v (grad Lap q).n + sum_e int_e grad v . (D2q n)
        ne, nq = self._edge_w.shape
        nrm = g.edge_normals
        W = self._edge_w.reshape(-1, 1)
        hess_n = np.einsum("eqbkl,el->eqkb", self.basis.hessians(self._flat_x).reshape(ne, nq, nb, 2, 2), nrm)
        grad = self._grad.reshape(ne * nq, 2, nd)
        rhs = sum((W * hess_n.reshape(ne * nq, 2, nb)[:, k]).T @ grad[:, k] for k in range(2))
        if self.m >= 3:
            glap_n = np.einsum("eqbk,ek->eqb", self.basis.grad_laplacian(self._flat_x).reshape(ne, nq, nb, 2), nrm)
            rhs = rhs - (W * glap_n.reshape(ne * nq, nb)).T @ self._val.reshape(ne * nq, nd)

        # vertex averages of value and gradient fix the affine part
        nv = g.n_vertices
        con = np.vstack([
            self.basis.values(g.vertices).mean(0),
            self.basis.gradients(g.vertices)[..., 0].mean(0),
            self.basis.gradients(g.vertices)[..., 1].mean(0),
        ])
        con_rhs = np.zeros((3, nd))
        for c in range(3):
            con_rhs[c, c:3 * nv:3] = 1.0 / nv

        saddle = np.zeros((nb + 3, nb + 3))
        saddle[:nb, :nb] = gram
        saddle[:nb, nb:] = con.T
        saddle[nb:, :nb] = con
        try:
            sol = np.linalg.solve(saddle, np.vstack([rhs, con_rhs]))
        except np.linalg.LinAlgError as exc:
            raise ElementError("singular Hessian projection system (degenerate cell)") from exc
        return sol[:nb]

    def _hessian_l2_projection(self) -> np.ndarray:
        """(3, dim P_{m-2}, ndof): L2 projections of H11, H12, H22.

        int_K d_ij v q = sum_e int_e (d_j v) q n_i - sum_e int_e v (d_i q) n_j
        for q in P_1; both orders (i, j), (j, i) are averaged.
        """
        g = self.geom
        lb = self.low_basis
        nl, nd = len(lb), self.layout.size
        mass_rule = self._cell_rule
        phi = lb.values(mass_rule.points)
        mass = (phi * mass_rule.weights[:, None]).T @ phi

        ne, nq = self._edge_w.shape
        E = ne * nq
        W = self._edge_w.reshape(E, 1)
        q = lb.values(self._flat_x)
        dq = lb.gradients(self._flat_x)
        nrm = np.repeat(self.geom.edge_normals, nq, axis=0)  # (E, 2)
        grad = self._grad.reshape(E, 2, nd)
        val = self._val.reshape(E, nd)
        R = np.zeros((2, 2, nl, nd))
        for i in range(2):
            for j in range(2):
                R[i, j] = (W * nrm[:, i:i + 1] * q).T @ grad[:, j]
                if self.m >= 3:
                    R[i, j] -= (W * nrm[:, j:j + 1] * dq[..., i]).T @ val
        R12 = 0.5 * (R[0, 1] + R[1, 0])
        return np.linalg.solve(mass, np.stack([R[0, 0], R12, R[1, 1]]))

    def _stabilization(self) -> np.ndarray:
        g = self.geom
        h = g.diameter
        weights = np.empty(self.layout.size)
        weights[:3 * g.n_vertices] = np.tile([h**-2, 1.0, 1.0], g.n_vertices)
        if self.m == 3:
            # h^{2j-1} int_e (Pi_0 d_n u)(Pi_0 d_n v), j = 1, scaled by h^{-2}
            weights[3 * g.n_vertices:] = 1.0 / (h * g.edge_lengths)
        weights *= self.beta
        defl = np.eye(self.layout.size) - self.dof_matrix @ self.projection
        return defl.T @ (weights[:, None] * defl)

    # -- public operators ---------------------------------------------------------------

    def hessian_projection(self, dofs) -> np.ndarray:
        """Scaled-monomial coefficients of the Hessian projection onto P_m."""
        return self.projection @ np.asarray(dofs, dtype=float)

    def l2_hessian_projection(self, dofs) -> np.ndarray:
        """(3, dim P_{m-2}) coefficients of the projected H11, H12, H22."""
        return self.hessian_l2 @ np.asarray(dofs, dtype=float)

    def l2_laplacian_projection(self, dofs) -> np.ndarray:
        return self.laplacian_l2 @ np.asarray(dofs, dtype=float)

    def l2_function_projection(self, dofs) -> np.ndarray:
        # On the enhanced space the L2 projection onto P_m coincides with the
        # Hessian projection whenever P_{m-4} = {0}.
        return self.hessian_projection(dofs)

    def polynomial_dofs(self, coeffs) -> np.ndarray:
        return self.dof_matrix @ np.asarray(coeffs, dtype=float)

    def local_dofs(self, v, grad_v) -> np.ndarray:
        """DOFs of a smooth function given callables ``v(x)`` and ``grad_v(x) -> (n, 2)``."""
        g = self.geom
        dofs = np.zeros(self.layout.size)
        dofs[0:3 * g.n_vertices:3] = v(g.vertices)
        gv = np.asarray(grad_v(g.vertices), dtype=float).reshape(-1, 2)
        dofs[1:3 * g.n_vertices:3] = gv[:, 0]
        dofs[2:3 * g.n_vertices:3] = gv[:, 1]
        if self.m == 3:
            ne, nq = self._edge_w.shape
            gx = np.asarray(grad_v(self._flat_x), dtype=float).reshape(ne, nq, 2)
            dofs[3 * g.n_vertices:] = np.sum(self._edge_w * np.einsum("eqk,ek->eq", gx, g.edge_normals), axis=1)
        return dofs

    def local_system(self, A, gamma, f, rule: QuadratureRule):
        """Consistency matrix and load vector with quadrature ``rule``.

        ``A(x) -> (nq, 2, 2)``, ``gamma(x) -> (nq,)``, ``f(x) -> (nq,)``.
        Rows index test functions, columns trial functions.
        """
        x, w = rule.points, rule.weights
        phi = self.low_basis.values(x)  # (nq, nl)
        H = np.einsum("qr,krd->kqd", phi, self.hessian_l2)  # (3, nq, nd)
        lap = H[0] + H[2]
        Ax = np.asarray(A(x), dtype=float).reshape(-1, 2, 2)
        gx = np.broadcast_to(np.asarray(gamma(x), dtype=float), (len(w),))
        ga = gx[:, None, None] * Ax
        AH = (ga[:, 0, 0, None] * H[0] + (ga[:, 0, 1] + ga[:, 1, 0])[:, None] * H[1]
              + ga[:, 1, 1, None] * H[2])
        K = lap.T @ (w[:, None] * AH)
        fx = np.broadcast_to(np.asarray(f(x), dtype=float), (len(w),))
        F = lap.T @ (w * gx * fx)
        return K, F
