"""Command-line interface.

Subcommands: ``mesh-gen``, ``check-cordes``, ``solve``, ``convergence``.
Exit codes: 0 success, 1 numerical failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .analysis import StudyError, error_norms, run_study
from .assembly import (
    AssemblyError,
    CordesViolation,
    SolverError,
    assemble,
    local_dofs,
    solve_direct,
    write_matrix_market,
)
from .cordes import CoefficientEvaluationError, InvalidCoefficientError, verify_field
from .element import ElementError
from .mesh import MeshError, MeshFamily, MeshFormatError, read_mesh, write_mesh
from .problems import PROBLEMS, get_problem

EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2
NUMERICAL_ERRORS = (AssemblyError, CordesViolation, SolverError, StudyError, ElementError,
                    InvalidCoefficientError, CoefficientEvaluationError, MeshError,
                    np.linalg.LinAlgError, FloatingPointError)
MESH_KINDS = ("uniform", "uniform-even", "uniform-odd", "voronoi", "graded")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    problem: str = "example2"
    poly: str | None = None
    mesh: str = "uniform"
    mesh_file: str | None = None
    n: int = 4
    seeds: int = 16
    seed: int = 0
    lloyd: int = 3
    tau: float = 1e-2
    n0: int = 2
    levels: int = 4
    order: int = 2
    beta: float = 1.0
    quad_degree: int = 4
    samples: int = 8
    threads: int | None = None
    out: str | None = None
    dump_system: str | None = None
    dump_local: int | None = None

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        keys = cls.__dataclass_fields__.keys()
        return cls(**{k: getattr(args, k) for k in keys if hasattr(args, k)})

    def validate(self) -> None:
        if self.problem not in PROBLEMS:
            raise UsageError(f"unknown problem {self.problem!r}")
        if self.poly is not None and self.problem != "patch":
            raise UsageError("--poly applies only to --problem patch")
        if self.mesh not in MESH_KINDS:
            raise UsageError(f"unknown mesh kind {self.mesh!r}")
        for name in ("n", "seeds", "levels", "samples", "n0"):
            if getattr(self, name) < 1:
                raise UsageError(f"--{name.replace('_', '-')} must be at least 1")
        if self.lloyd < 0:
            raise UsageError("--lloyd must be nonnegative")
        if self.tau <= 0:
            raise UsageError("--tau must be positive")
        if self.beta <= 0:
            raise UsageError("--beta must be positive")
        if self.order not in (2, 3):
            raise UsageError("--order must be 2 or 3")
        if not 0 <= self.quad_degree <= 12:
            raise UsageError("--quad-degree must lie in [0, 12]")
        if self.threads is not None and self.threads < 1:
            raise UsageError("--threads must be at least 1")
        if self.mesh_file is not None and not Path(self.mesh_file).is_file():
            raise UsageError(f"mesh file not found: {self.mesh_file}")
        if self.mesh == "uniform-odd" and self.n % 2 == 0:
            raise UsageError("--n must be odd for uniform-odd meshes")

    def family(self, box) -> MeshFamily:
        return MeshFamily(self.mesh, n=self.n, seeds=self.seeds, seed=self.seed, lloyd=self.lloyd,
                          tau=self.tau, n0=self.n0, box=tuple(box))

    def build_problem(self):
        if self.problem == "patch" and self.poly is not None:
            try:
                return get_problem("patch", p=self.poly)
            except ValueError as exc:
                raise UsageError(str(exc)) from exc
        return get_problem(self.problem)

    def thread_count(self) -> int:
        return self.threads or os.cpu_count() or 1


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _mesh_for(cfg: RunConfig, box):
    if cfg.mesh_file:
        try:
            return read_mesh(cfg.mesh_file)
        except MeshFormatError as exc:
            raise UsageError(str(exc)) from exc
    return cfg.family(box).mesh(0)


def cmd_mesh_gen(cfg: RunConfig, box) -> int:
    if box is None:
        box = (0.0, 1.0, 0.0, 1.0) if cfg.mesh == "graded" else (-1.0, 1.0, -1.0, 1.0)
    mesh = cfg.family(box).mesh(0)
    if cfg.out:
        write_mesh(mesh, cfg.out)
    else:
        from .mesh import mesh_to_json
        sys.stdout.write(mesh_to_json(mesh))
    print(f"{mesh.n_cells} cells, {mesh.n_vertices} vertices, h = {mesh.h:.6g}", file=sys.stderr)
    return EXIT_OK


def cmd_check_cordes(cfg: RunConfig, box) -> int:
    problem = cfg.build_problem()
    mesh = _mesh_for(cfg, box or problem.box)
    rep = verify_field(problem.A, mesh, samples_per_cell=cfg.samples, mu=problem.mu,
                       gamma=problem.gamma)
    d = rep.to_dict()
    d.pop("cell_mu")
    d["problem"] = problem.name
    d["declared_mu"] = problem.mu
    _emit(json.dumps(d, indent=2, sort_keys=True) + "\n", cfg.out)
    return EXIT_NUMERICAL if rep.failed else EXIT_OK


def cmd_solve(cfg: RunConfig, box) -> int:
    problem = cfg.build_problem()
    mesh = _mesh_for(cfg, box or problem.box)
    system = assemble(mesh, cfg.order, problem, beta=cfg.beta, threads=cfg.thread_count())
    sol = solve_direct(system)
    out_dir = Path(cfg.out).parent if cfg.out else Path(".")
    if cfg.dump_system:
        write_matrix_market(system, cfg.dump_system)
    if cfg.dump_local is not None:
        k = cfg.dump_local
        if not 0 <= k < mesh.n_cells:
            raise UsageError(f"--dump-local: cell {k} out of range [0, {mesh.n_cells})")
        _dump_local(system, sol, k, out_dir / f"local_cell_{k}.json")
    result = {"config": asdict(cfg), "problem": problem.name, "n_cells": mesh.n_cells,
              "h": float(mesh.h), "ndof": system.n_dofs, "n_free": system.n_free,
              "residual": sol.residual}
    result["config"].pop("threads")
    if problem.has_exact:
        err = error_norms(mesh, sol, problem.u, problem.grad_u, problem.hess_u, cfg.quad_degree)
        result.update(err_h2=err.h2, err_h1=err.h1, err_l2=err.l2)
    _emit(json.dumps(result, indent=2, sort_keys=True) + "\n", cfg.out)
    return EXIT_OK


def _dump_local(system, sol, k, path) -> None:
    el = system.elements[k]
    geom = el.geom
    from .quadrature import scheme_rule

    Kc, F = el.local_system(system.problem.A, system.problem.scaling, system.problem.f,
                            scheme_rule(geom, system.m))
    data = {
        "cell": k,
        "vertices": geom.vertices.tolist(),
        "global_dofs": system.dofmap.cell_dofs[k].tolist(),
        "signs": system.dofmap.cell_signs[k].tolist(),
        "consistency": Kc.tolist(),
        "stabilization": el.stabilization.tolist(),
        "load": F.tolist(),
        "projection": el.projection.tolist(),
        "local_solution": local_dofs(system, sol.dofs, k).tolist(),
    }
    Path(path).write_text(json.dumps(data, indent=1) + "\n")


def cmd_convergence(cfg: RunConfig, box) -> int:
    problem = cfg.build_problem()
    if cfg.mesh_file:
        raise UsageError("convergence needs a mesh family, not --mesh-file")
    fam = cfg.family(box or problem.box)
    rep = run_study(problem, fam, cfg.levels, m=cfg.order, beta=cfg.beta,
                    quad_degree=cfg.quad_degree, threads=cfg.thread_count())
    cfg_d = asdict(cfg)
    cfg_d.pop("threads")
    rep.config["run"] = cfg_d
    if cfg.out:
        base = Path(cfg.out)
        if base.suffix == ".csv":
            base = base.with_suffix("")
        base.with_suffix(".csv").write_text(rep.to_csv())
        base.with_suffix(".json").write_text(rep.to_json())
        base.with_suffix(".dat").write_text(rep.to_plot_data())
    else:
        sys.stdout.write(rep.to_csv())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cordesvem",
                                description="H2-conforming virtual elements for A : D^2 u = f.")
    sub = p.add_subparsers(dest="command", required=True)

    def mesh_args(sp, kind_flag="--mesh"):
        sp.add_argument(kind_flag, dest="mesh", choices=MESH_KINDS, default="uniform",
                        help="mesh kind or family")
        sp.add_argument("--n", type=int, default=4, help="cells per side (uniform)")
        sp.add_argument("--seeds", type=int, default=16, help="Voronoi seeds (level 0)")
        sp.add_argument("--seed", type=int, default=0, help="RNG seed")
        sp.add_argument("--lloyd", type=int, default=3, help="Lloyd iterations")
        sp.add_argument("--tau", type=float, default=1e-2, help="grading threshold (level 0)")
        sp.add_argument("--n0", type=int, default=2, help="coarse grid of graded meshes")
        sp.add_argument("--box", type=float, nargs=4, metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
        sp.add_argument("--out", help="output path")

    def problem_args(sp):
        sp.add_argument("--problem", choices=sorted(PROBLEMS), default="example2")
        sp.add_argument("--poly", help="polynomial for --problem patch, e.g. 'x^2+3xy'")
        sp.add_argument("--mesh-file", help="read the mesh from a JSON file")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")

    def scheme_args(sp):
        sp.add_argument("--order", type=int, choices=(2, 3), default=2)
        sp.add_argument("--beta", type=float, default=1.0, help="stabilisation scaling")
        sp.add_argument("--quad-degree", type=int, default=4, help="quadrature degree for errors")

    g = sub.add_parser("mesh-gen", help="generate a mesh and write it as JSON")
    mesh_args(g, "--kind")

    c = sub.add_parser("check-cordes", help="sample the coefficient for the Cordes condition")
    mesh_args(c)
    problem_args(c)
    c.add_argument("--samples", type=int, default=8, help="samples per cell")

    s = sub.add_parser("solve", help="solve on one mesh")
    mesh_args(s)
    problem_args(s)
    scheme_args(s)
    s.add_argument("--dump-system", metavar="PATH", help="write the reduced matrix (Matrix Market)")
    s.add_argument("--dump-local", type=int, metavar="CELL", help="write one cell's local matrices as JSON")

    v = sub.add_parser("convergence", help="refinement study with CSV/JSON output")
    mesh_args(v)
    problem_args(v)
    scheme_args(v)
    v.add_argument("--levels", type=int, default=4)
    return p


COMMANDS = {
    "mesh-gen": cmd_mesh_gen,
    "check-cordes": cmd_check_cordes,
    "solve": cmd_solve,
    "convergence": cmd_convergence,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    cfg = RunConfig.from_args(args)
    box = tuple(args.box) if args.box else None
    try:
        cfg.validate()
        if box is not None and not (box[0] < box[1] and box[2] < box[3]):
            raise UsageError("--box must satisfy XMIN < XMAX and YMIN < YMAX")
        return COMMANDS[cfg.command](cfg, box)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"cordesvem: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERICAL_ERRORS as exc:
        print(f"cordesvem: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
