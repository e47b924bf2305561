"""Cordes condition for 2x2 symmetric coefficient matrices.

A symmetric positive definite ``A`` satisfies the Cordes condition with
parameter ``mu`` in [0, 1) if ``|A|^2 / (tr A)^2 <= 1 / (d - mu^2)``, with the
Frobenius norm ``|.|``.  Equivalently ``|gamma A - I| <= mu`` for the scaling
``gamma = tr A / |A|^2``, which minimises ``|s A - I|`` over ``s > 0``.

Matrices are plain ``(2, 2)`` arrays, or stacks ``(..., 2, 2)`` for the
vectorised functions; :class:`SymMat2` is accepted wherever a matrix is.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.stats import qmc

DIM = 2
SQRT_DIM = math.sqrt(DIM)
_TOL = 1e-12


class InvalidCoefficientError(ValueError):
    """Matrix with nonpositive trace or zero norm."""


class CoefficientEvaluationError(RuntimeError):
    """Coefficient evaluation failed at a specific point."""

    def __init__(self, point, cause):
        self.point = tuple(float(c) for c in point)
        super().__init__(f"coefficient evaluation failed at point {self.point}: {cause}")


class SymMat2(NamedTuple):
    a11: float
    a12: float
    a22: float

    @classmethod
    def from_array(cls, M) -> "SymMat2":
        M = np.asarray(M, dtype=float)
        return cls(M[0, 0], 0.5 * (M[0, 1] + M[1, 0]), M[1, 1])

    def to_array(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a12, self.a22]])

    def frobenius_sq(self) -> float:
        return self.a11**2 + 2.0 * self.a12**2 + self.a22**2


def _as_stack(M) -> np.ndarray:
    if isinstance(M, SymMat2):
        return M.to_array()
    M = np.asarray(M, dtype=float)
    if M.shape[-2:] != (2, 2):
        raise ValueError(f"expected (..., 2, 2) matrices, got shape {M.shape}")
    return M


def _trace_norm(M):
    M = _as_stack(M)
    tr = M[..., 0, 0] + M[..., 1, 1]
    nrm2 = np.sum(M * M, axis=(-2, -1))
    if np.any(~np.isfinite(tr)) or np.any(~np.isfinite(nrm2)):
        raise InvalidCoefficientError("non-finite coefficient matrix")
    if np.any(nrm2 <= 0.0):
        raise InvalidCoefficientError("zero coefficient matrix")
    if np.any(tr <= 0.0):
        raise InvalidCoefficientError("coefficient matrix with nonpositive trace")
    return tr, nrm2


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def cordes_residual(M):
    """Minimal residual ``|gamma M - I|`` with ``gamma = tr M / |M|^2``.

    Closed form ``sqrt(d - (tr M)^2 / |M|^2)``, evaluated through
    ``2 |M|^2 - (tr M)^2 = (a11 - a22)^2 + 4 a12^2`` to avoid cancellation
    near multiples of the identity.  Accepts one matrix or a stack.
    """
    tr, nrm2 = _trace_norm(M)
    M = _as_stack(M)
    off = 0.5 * (M[..., 0, 1] + M[..., 1, 0])
    num = (M[..., 0, 0] - M[..., 1, 1]) ** 2 + 4.0 * off * off
    return _scalar_or_array(np.sqrt(num / nrm2))


def admissible_scaling(M):
    """Canonical scaling ``gamma = tr M / |M|^2``."""
    tr, nrm2 = _trace_norm(M)
    return _scalar_or_array(tr / nrm2)


def scaled_residual(M, gamma):
    """``|gamma M - I|`` for a given (possibly non-optimal) scaling."""
    M = _as_stack(M)
    g = np.asarray(gamma, dtype=float)[..., None, None]
    return _scalar_or_array(np.linalg.norm(g * M - np.eye(2), axis=(-2, -1)))


def satisfies_cordes(M, mu: float) -> bool:
    """True iff ``|M|^2 / (tr M)^2 <= 1 / (d - mu^2)``.

    The inequality is equivalent to ``cordes_residual(M) <= mu``, which is
    what is compared, with a tolerance of 1e-12 on ``mu``.
    """
    if not 0.0 <= mu < 1.0:
        raise ValueError(f"mu must lie in [0, 1), got {mu}")
    return bool(np.all(np.asarray(cordes_residual(M)) <= mu + _TOL))


def is_spd(M) -> np.ndarray:
    """2x2 criterion: positive trace and determinant."""
    M = _as_stack(M)
    tr = M[..., 0, 0] + M[..., 1, 1]
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    return (tr > 0) & (det > 0)


class CoefficientField:
    """Matrix-valued coefficient ``x -> A(x)``.

    Parameters
    ----------
    func : callable
        Maps points ``(n, 2)`` to matrices ``(n, 2, 2)``.
    continuous : bool or callable
        Whether the field is continuous inside each cell; a callable receives
        the cell id.  Only informational.
    name : str
    """

    def __init__(self, func: Callable, continuous=True, name: str = "A"):
        self.func = func
        self._continuous = continuous
        self.name = name

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self.func(x), dtype=float).reshape(len(x), 2, 2)

    def at(self, cell: int, x) -> np.ndarray:
        # the built-in fields are global formulas; the cell id only selects
        # which representative is meant when a point lies on an interface
        return self(x)

    def is_continuous(self, cell: int) -> bool:
        c = self._continuous
        return bool(c(cell)) if callable(c) else bool(c)

    @classmethod
    def constant(cls, M, name: str = "constant") -> "CoefficientField":
        M = _as_stack(M).copy()
        return cls(lambda x: np.broadcast_to(M, (len(x), 2, 2)), True, name)


@dataclass
class CordesReport:
    """Outcome of sampling a coefficient field for the Cordes condition.

    ``mu_estimate`` is the sup of the optimal residual over the samples;
    ``sup_residual`` the sup of ``|gamma A - I|`` for the scaling in use.
    The check is by sampling only.
    """

    mu_estimate: float
    sup_residual: float
    sup_scaled_norm: float
    samples: int
    worst_point: tuple[float, float]
    mu: float | None = None
    bound_ok: bool = True
    non_spd: list[tuple[float, float]] = field(default_factory=list)
    cell_mu: list[float] = field(default_factory=list)
    sampled: bool = True

    @property
    def failed(self) -> bool:
        return self.mu_estimate >= 1.0 or bool(self.non_spd)

    @property
    def within_mu(self) -> bool:
        return self.mu is None or self.sup_residual <= self.mu + _TOL

    def to_dict(self) -> dict:
        d = asdict(self)
        d["worst_point"] = list(self.worst_point)
        d["non_spd"] = [list(p) for p in self.non_spd]
        d["failed"] = self.failed
        d["within_mu"] = self.within_mu
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _halton(n: int) -> np.ndarray:
    if n <= 0:
        return np.zeros((0, 2))
    pts = qmc.Halton(d=2, scramble=False).random(n + 1)
    return pts[1:]  # index 0 is the origin


def sample_points(geom, n: int) -> np.ndarray:
    """Barycenter plus ``n - 1`` low-discrepancy points inside the cell."""
    from .quadrature import cell_triangles

    tris = cell_triangles(geom)
    pts = [geom.barycenter]
    uv = _halton(n - 1)
    for k, (u, v) in enumerate(uv):
        if u + v > 1.0:
            u, v = 1.0 - u, 1.0 - v
        a, b, c = tris[k % len(tris)]
        pts.append(a + u * (b - a) + v * (c - a))
    return np.array(pts)


def _evaluate(fn, x):
    try:
        vals = np.asarray(fn(x), dtype=float)
        if np.all(np.isfinite(vals)):
            return vals
    except Exception:  # locate the offending point below
        pass
    for p in x:
        try:
            v = np.asarray(fn(p[None, :]), dtype=float)
        except Exception as exc:
            raise CoefficientEvaluationError(p, exc) from exc
        if not np.all(np.isfinite(v)):
            raise CoefficientEvaluationError(p, "non-finite value")
    raise RuntimeError("coefficient evaluation failed on a batch but not pointwise")


def verify_field(A, mesh, samples_per_cell: int = 8, mu: float | None = None,
                 gamma: Callable | None = None) -> CordesReport:
    """Sample ``A`` on every cell and report Cordes residuals.

    Parameters
    ----------
    A : callable
        ``(n, 2) -> (n, 2, 2)``, e.g. a :class:`CoefficientField`.
    mesh : PolygonalMesh
    samples_per_cell : int
        Barycenter plus ``samples_per_cell - 1`` Halton points per cell.
    mu : float, optional
        Declared Cordes parameter; the report records whether the samples
        stay within it.
    gamma : callable, optional
        Scaling override ``(n, 2) -> (n,)``; defaults to ``tr A / |A|^2``.
    """
    if samples_per_cell < 1:
        raise ValueError("samples_per_cell must be at least 1")
    if mu is not None and not 0.0 <= mu < 1.0:
        raise ValueError(f"mu must lie in [0, 1), got {mu}")

    worst = (-1.0, None)
    sup_res = 0.0
    sup_norm = 0.0
    bound_ok = True
    non_spd: list[tuple[float, float]] = []
    cell_mu = []
    total = 0
    for k in range(mesh.n_cells):
        x = sample_points(mesh.cell_geometry(k), samples_per_cell)
        M = _evaluate(A, x).reshape(len(x), 2, 2)
        total += len(x)
        spd = is_spd(M)
        for p in x[~spd]:
            non_spd.append((float(p[0]), float(p[1])))
        if not np.all(spd):
            M, x = M[spd], x[spd]
            if len(x) == 0:
                cell_mu.append(float("inf"))
                continue
        res = np.atleast_1d(cordes_residual(M))
        g = np.atleast_1d(admissible_scaling(M)) if gamma is None else np.asarray(_evaluate(gamma, x), dtype=float)
        used = np.atleast_1d(scaled_residual(M, g))
        nrm = np.linalg.norm(g[:, None, None] * M, axis=(-2, -1))
        # |gamma A| <= |gamma A - I| + |I| < 1 + sqrt(d) whenever the residual is below 1
        ok = (used >= 1.0) | (nrm <= used + SQRT_DIM + _TOL)
        bound_ok &= bool(np.all(ok))
        i = int(np.argmax(res))
        cell_mu.append(float(res[i]))
        if res[i] > worst[0]:
            worst = (float(res[i]), x[i])
        sup_res = max(sup_res, float(used.max()))
        sup_norm = max(sup_norm, float(nrm.max()))

    mu_est = worst[0] if worst[1] is not None else float("inf")
    wp = tuple(float(c) for c in worst[1]) if worst[1] is not None else (float("nan"), float("nan"))
    return CordesReport(mu_estimate=mu_est, sup_residual=sup_res, sup_scaled_norm=sup_norm,
                        samples=total, worst_point=wp, mu=mu, bound_ok=bound_ok,
                        non_spd=non_spd, cell_mu=cell_mu)
