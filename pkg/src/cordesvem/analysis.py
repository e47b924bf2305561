"""Error norms, empirical orders of convergence and refinement studies."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .assembly import assemble, interpolate, solve_direct
from .cordes import verify_field
from .element import LocalElement
from .mesh import MeshFamily, PolygonalMesh
from .problems import ProblemDefinition
from .quadrature import fan_rule

CSV_COLUMNS = ["level", "h", "ndof", "err_h2", "err_h1", "err_l2", "rate_h2_h", "rate_h2_ndof"]


@dataclass(frozen=True)
class ErrorTriple:
    """Broken H2 and H1 seminorms and the L2 norm of ``u - p``."""

    h2: float
    h1: float
    l2: float

    def as_tuple(self):
        return self.h2, self.h1, self.l2


def error_norms(mesh: PolygonalMesh, polys, u: Callable, grad_u: Callable, hess_u: Callable,
                degree: int = 4) -> ErrorTriple:
    """Cellwise errors of piecewise polynomials against an exact solution.

    Parameters
    ----------
    polys : sequence of (ScaledMonomials, coefficients)
        One per cell, e.g. ``solution.cell_polynomial(k)``; a
        :class:`~cordesvem.assembly.Solution` is accepted directly.
    degree : int
        Exactness degree of the fan rule used on each cell.
    """
    if hasattr(polys, "cell_polynomial"):
        sol = polys
        polys = [sol.cell_polynomial(k) for k in range(mesh.n_cells)]
    e2 = e1 = e0 = 0.0
    for k, (basis, c) in enumerate(polys):
        rule = fan_rule(mesh.cell_geometry(k), degree)
        x, w = rule.points, rule.weights
        d0 = u(x) - basis.evaluate(c, x)
        d1 = grad_u(x) - np.column_stack([basis.evaluate(c, x, 1, 0), basis.evaluate(c, x, 0, 1)])
        H = hess_u(x)
        pxx, pxy, pyy = (basis.evaluate(c, x, 2, 0), basis.evaluate(c, x, 1, 1),
                         basis.evaluate(c, x, 0, 2))
        d2 = (H[:, 0, 0] - pxx) ** 2 + (H[:, 0, 1] - pxy) ** 2 + (H[:, 1, 0] - pxy) ** 2 + (H[:, 1, 1] - pyy) ** 2
        e0 += w @ d0**2
        e1 += w @ np.sum(d1**2, axis=1)
        e2 += w @ d2
    return ErrorTriple(math.sqrt(e2), math.sqrt(e1), math.sqrt(e0))


def _rates(err, scale) -> list[float]:
    err, scale = np.asarray(err, dtype=float), np.asarray(scale, dtype=float)
    out = []
    for i in range(len(err) - 1):
        num = math.log(err[i] / err[i + 1]) if err[i] > 0 and err[i + 1] > 0 else float("nan")
        den = math.log(scale[i] / scale[i + 1])
        out.append(num / den if den != 0 else float("nan"))
    return out


def eoc(h: Sequence[float], errors: Sequence[float]) -> list[float]:
    """``log(e_i / e_{i+1}) / log(h_i / h_{i+1})`` for consecutive levels."""
    h = np.asarray(h, dtype=float)
    if len(h) < 2 or len(h) != len(errors):
        raise ValueError("need at least two levels with matching errors")
    if np.any(np.diff(h) >= 0):
        raise ValueError(f"mesh sizes must strictly decrease, got {h.tolist()}")
    return _rates(errors, h)


def eoc_ndof(ndof: Sequence[int], errors: Sequence[float]) -> list[float]:
    """Orders against ``ndof^(-1/2)``."""
    n = np.asarray(ndof, dtype=float)
    if len(n) < 2 or len(n) != len(errors):
        raise ValueError("need at least two levels with matching errors")
    if np.any(np.diff(n) <= 0):
        raise ValueError(f"DOF counts must strictly increase, got {n.astype(int).tolist()}")
    return _rates(errors, n**-0.5)


def fitted_order(scale: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of ``log e`` against ``log scale``."""
    return float(np.polyfit(np.log(scale), np.log(errors), 1)[0])


@dataclass
class LevelResult:
    level: int
    h: float
    ndof: int
    n_cells: int
    errors: ErrorTriple
    residual: float = 0.0
    mu_estimate: float = float("nan")
    seconds: float = 0.0
    mesh: dict = field(default_factory=dict)


@dataclass
class ConvergenceReport:
    problem: str
    m: int
    beta: float
    levels: list[LevelResult] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        if name in ("h2", "h1", "l2"):
            return np.array([getattr(lv.errors, name) for lv in self.levels])
        return np.array([getattr(lv, name) for lv in self.levels])

    def rates_h(self, norm: str = "h2") -> list[float]:
        """Orders in h; NaN where h does not decrease (e.g. graded levels)."""
        h = self.column("h")
        r = _rates(self.column(norm), h)
        return [x if h[i + 1] < h[i] else float("nan") for i, x in enumerate(r)]

    def rates_ndof(self, norm: str = "h2") -> list[float]:
        return _rates(self.column(norm), self.column("ndof").astype(float) ** -0.5)

    def rows(self) -> list[dict]:
        rh, rn = self.rates_h(), self.rates_ndof()
        out = []
        for i, lv in enumerate(self.levels):
            out.append({
                "level": lv.level, "h": lv.h, "ndof": lv.ndof,
                "err_h2": lv.errors.h2, "err_h1": lv.errors.h1, "err_l2": lv.errors.l2,
                "rate_h2_h": rh[i - 1] if i else float("nan"),
                "rate_h2_ndof": rn[i - 1] if i else float("nan"),
            })
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows():
            w.writerow([r["level"], f"{r['h']:.12e}", r["ndof"]]
                       + [_fmt(r[c]) for c in CSV_COLUMNS[3:]])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "problem": self.problem, "m": self.m, "beta": self.beta, "config": self.config,
            # wall times are left out so reruns serialise identically
            "levels": [{k: v for k, v in dict(asdict(lv), errors=asdict(lv.errors)).items() if k != "seconds"}
                       for lv in self.levels],
            "rates": {n: {"h": self.rates_h(n), "ndof": self.rates_ndof(n)} for n in ("h2", "h1", "l2")},
        }

    def to_json(self) -> str:
        return json.dumps(_nan_to_none(self.to_dict()), indent=2, sort_keys=True) + "\n"

    def to_plot_data(self) -> str:
        lines = ["# ndof h err_h2 err_h1 err_l2"]
        for lv in self.levels:
            lines.append(f"{lv.ndof} {lv.h:.12e} {lv.errors.h2:.12e} {lv.errors.h1:.12e} {lv.errors.l2:.12e}")
        return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    return "" if x != x else f"{x:.12e}"


def _nan_to_none(obj):
    if isinstance(obj, float) and obj != obj:
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_nan_to_none(v) for v in obj]
    return obj


class StudyError(RuntimeError):
    pass


def solve_level(problem: ProblemDefinition, mesh: PolygonalMesh, m: int = 2, beta: float = 1.0,
                quad_degree: int = 4, threads: int | None = 1, check_cordes: bool = True):
    """Assemble, solve and measure errors on one mesh; returns (solution, ErrorTriple)."""
    mu = float("nan")
    if check_cordes:
        rep = verify_field(problem.A, mesh, samples_per_cell=1)
        if rep.failed:
            raise StudyError(f"Cordes check failed (mu estimate {rep.mu_estimate:.4g})")
        mu = rep.mu_estimate
    system = assemble(mesh, m, problem, beta=beta, threads=threads, check_cordes=False)
    sol = solve_direct(system)
    sol.provenance["mu_estimate"] = mu
    err = None
    if problem.has_exact:
        err = error_norms(mesh, sol, problem.u, problem.grad_u, problem.hess_u, quad_degree)
    return sol, err


def run_study(problem: ProblemDefinition, family: MeshFamily, levels: int, m: int = 2,
              beta: float = 1.0, quad_degree: int = 4, threads: int | None = 1,
              check_cordes: bool = True, start: int = 0) -> ConvergenceReport:
    """Mesh, check, assemble, solve and measure on ``levels`` refinement levels."""
    if not problem.has_exact:
        raise StudyError(f"problem {problem.name!r} has no exact solution")
    rep = ConvergenceReport(problem.name, m, float(beta),
                            config={"family": asdict(family), "levels": levels, "start": start,
                                    "quad_degree": quad_degree})
    for lev in range(start, start + levels):
        t0 = time.perf_counter()
        try:
            mesh = family.mesh(lev)
            sol, err = solve_level(problem, mesh, m, beta, quad_degree, threads, check_cordes)
        except Exception as exc:
            raise StudyError(f"level {lev} ({family.describe(lev)}): {exc}") from exc
        rep.levels.append(LevelResult(
            level=lev, h=float(mesh.h), ndof=int(sol.provenance["n_dofs"]), n_cells=mesh.n_cells,
            errors=err, residual=sol.residual, mu_estimate=sol.provenance["mu_estimate"],
            seconds=time.perf_counter() - t0, mesh=family.describe(lev)))
    return rep


def interpolation_errors(problem_u, grad_u, hess_u, mesh: PolygonalMesh, m: int,
                         degree: int = 4) -> ErrorTriple:
    """Errors of the projected Lagrange interpolant ``Pi I_h u``."""
    from .assembly import build_dof_map

    x = interpolate(mesh, m, problem_u, grad_u)
    dm = build_dof_map(mesh, m)
    polys = []
    for k in range(mesh.n_cells):
        el = LocalElement(mesh.cell_geometry(k), m)
        polys.append((el.basis, el.projection @ (dm.cell_signs[k] * x[dm.cell_dofs[k]])))
    return error_norms(mesh, polys, problem_u, grad_u, hess_u, degree)
