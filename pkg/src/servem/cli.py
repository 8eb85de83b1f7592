"""Command-line driver: mesh generation, solves, convergence studies and reports.

Exit codes: 0 success, 2 configuration or input error, 3 property-S failure,
4 linear solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .assembly import RESIDUAL_TOL, SolverError, assemble, apply_dirichlet, solve, write_matrix_market
from .element import PropertySViolation, SerendipityStrategy, element_operators
from .experiments import (
    FAMILIES,
    PRESETS,
    ReportUnavailable,
    dof_report,
    error_norms,
    level_mesh,
    run_convergence,
)
from .geometry import InvalidGeometry, UnsupportedShape
from .meshes import MeshGenerationError, gen_square_grid, gen_trapezoid_grid, gen_voronoi_lloyd, read_mesh, write_mesh
from .problems import PROBLEMS, ModelError, get_problem, load_problem_file

log = logging.getLogger("servem")

EXIT_OK, EXIT_CONFIG, EXIT_PROPERTY_S, EXIT_SOLVER = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    k: int = 2
    strategy: str = "stingy"
    theta0: float = 1e-8
    family: Optional[str] = None
    n: int = 8
    sigma: float = 0.2
    cells: int = 100
    lloyd: int = 50
    seed: int = 0
    mesh: Optional[Path] = None
    problem: Optional[str] = None
    problem_file: Optional[Path] = None
    levels: int = 3
    tol: float = RESIDUAL_TOL
    exactness: Optional[int] = None
    outputs: dict = field(default_factory=dict)

    def validate(self) -> None:
        """Check every field without reading or writing any file contents."""
        if not 1 <= self.k <= 8:
            raise ConfigError(f"k must lie in [1, 8], got {self.k}")
        if self.tol <= 0:
            raise ConfigError("solver tolerance must be positive")
        if self.theta0 <= 0:
            raise ConfigError("theta0 must be positive")
        if self.exactness is not None and self.exactness < 0:
            raise ConfigError("quadrature exactness must be non-negative")
        if self.strategy != "all":
            try:
                self.strategy_obj()
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if self.family is not None and self.family not in FAMILIES:
            raise ConfigError(f"unknown mesh family {self.family!r}; choose from {list(FAMILIES)}")
        if self.n < 1 or self.cells < 2 or self.lloyd < 0 or self.levels < 1:
            raise ConfigError("mesh size parameters out of range")
        if not 0 <= self.sigma < 0.5:
            raise ConfigError("sigma must lie in [0, 0.5)")
        for path in (self.mesh, self.problem_file):
            if path is not None and not path.is_file():
                raise ConfigError(f"no such file: {path}")
        if self.problem is not None and self.problem not in PROBLEMS and self.problem not in PRESETS:
            raise ConfigError(f"unknown problem {self.problem!r}; choose from "
                              f"{sorted(PROBLEMS) + sorted(PRESETS)}")
        for path in self.outputs.values():
            if path is not None and not path.parent.exists():
                raise ConfigError(f"output directory does not exist: {path.parent}")

    def strategy_obj(self) -> SerendipityStrategy:
        return SerendipityStrategy.parse(self.strategy, self.theta0)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="servem", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def mesh_opts(p, family_required=False):
        p.add_argument("--family", choices=FAMILIES, required=family_required)
        p.add_argument("--n", type=int, default=8, help="grid cells per side")
        p.add_argument("--sigma", type=float, default=0.2, help="trapezoid offset")
        p.add_argument("--cells", type=int, default=100, help="Voronoi cell count")
        p.add_argument("--lloyd", type=int, default=50, help="Lloyd iterations")
        p.add_argument("--seed", type=int, default=0)

    def method_opts(p, allow_all=False):
        p.add_argument("--k", type=int, default=2, help="order, 1..8")
        help_ = "original, lazy, stingy or fixed:J" + (", or all" if allow_all else "")
        p.add_argument("--strategy", default="stingy", help=help_)
        p.add_argument("--theta0", type=float, default=1e-8, help="collinearity tolerance")

    g = sub.add_parser("gen-mesh", help="generate a mesh and write it as JSON")
    mesh_opts(g, family_required=True)
    g.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("solve", help="solve a model problem")
    mesh_opts(s)
    method_opts(s)
    s.add_argument("--mesh", type=Path, help="mesh JSON file (instead of --family)")
    s.add_argument("--problem", default=None, help=f"one of {sorted(PROBLEMS)}")
    s.add_argument("--problem-file", type=Path, help="JSON coefficient and exact-solution description")
    s.add_argument("--tol", type=float, default=RESIDUAL_TOL, help="relative residual bound")
    s.add_argument("--exactness", type=int, help="quadrature exactness override")
    s.add_argument("--json", type=Path, help="write summary and dof vector here")
    s.add_argument("--dump-system", type=Path, help="write the reduced matrix (Matrix Market)")

    c = sub.add_parser("convergence", help="run a convergence study")
    mesh_opts(c)
    method_opts(c)
    c.add_argument("--problem", required=True,
                   help=f"preset {sorted(PRESETS)} or problem name (then --family is needed)")
    c.add_argument("--levels", type=int, default=3)
    c.add_argument("--exactness", type=int)
    c.add_argument("--csv", type=Path)
    c.add_argument("--json", type=Path)

    i = sub.add_parser("inspect", help="dump per-element operators as JSON")
    mesh_opts(i)
    method_opts(i)
    i.add_argument("--mesh", type=Path)
    i.add_argument("--out", type=Path, help="write JSON here instead of stdout")
    i.add_argument("--full", action="store_true", help="include operator matrices")

    d = sub.add_parser("dofs", help="dof counts per strategy")
    mesh_opts(d)
    method_opts(d, allow_all=True)
    d.add_argument("--mesh", type=Path)
    return parser


def _config(args) -> RunConfig:
    cfg = RunConfig(command=args.command)
    for name in ("k", "strategy", "theta0", "family", "n", "sigma", "cells", "lloyd", "seed",
                 "mesh", "problem", "problem_file", "levels", "tol", "exactness"):
        if getattr(args, name, None) is not None:
            setattr(cfg, name, getattr(args, name))
    cfg.outputs = {name: getattr(args, name, None) for name in ("out", "json", "csv", "dump_system")}
    if cfg.command in ("solve", "inspect", "dofs") and (cfg.mesh is None) == (cfg.family is None):
        raise ConfigError("give exactly one of --mesh and --family")
    if cfg.command == "solve" and (cfg.problem is None) == (cfg.problem_file is None):
        raise ConfigError("give exactly one of --problem and --problem-file")
    if cfg.command == "solve" and cfg.problem in PRESETS:
        raise ConfigError(f"{cfg.problem!r} is a convergence preset, not a problem")
    if cfg.command == "convergence":
        if cfg.problem not in PRESETS and cfg.family is None:
            raise ConfigError("--family is required unless --problem names a preset")
        if cfg.levels < 2:
            raise ConfigError("a convergence study needs at least two levels")
    cfg.validate()
    return cfg


def _mesh(cfg: RunConfig):
    if cfg.mesh is not None:
        return read_mesh(cfg.mesh)
    if cfg.family == "square":
        return gen_square_grid(cfg.n)
    if cfg.family == "trapezoid":
        return gen_trapezoid_grid(cfg.n, cfg.sigma)
    return gen_voronoi_lloyd(cfg.cells, cfg.lloyd, cfg.seed)


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def cmd_gen_mesh(cfg: RunConfig) -> int:
    mesh = _mesh(cfg)
    write_mesh(mesh, cfg.outputs["out"])
    print(f"{mesh.n_cells} cells, {mesh.n_vertices} vertices -> {cfg.outputs['out']}")
    return EXIT_OK


def cmd_solve(cfg: RunConfig) -> int:
    prob = load_problem_file(cfg.problem_file) if cfg.problem_file else get_problem(cfg.problem)
    mesh = _mesh(cfg)
    strat = cfg.strategy_obj()
    disc = assemble(mesh, cfg.k, strat, prob, cfg.exactness)
    reduced = apply_dirichlet(disc.system, disc.dof_map, prob.g)
    if cfg.outputs.get("dump_system"):
        write_matrix_market(reduced, cfg.outputs["dump_system"])
    u = solve(reduced, cfg.tol)
    summary = {"problem": prob.name, "k": cfg.k, "strategy": str(strat), "theta0": strat.theta0,
               "cells": mesh.n_cells, "dofs": disc.dof_map.n_dofs, "residual": reduced.residual,
               "rel_l2": None, "rel_h1": None}
    try:
        l2, h1 = error_norms(mesh, cfg.k, u, disc.operators, disc.dof_map, prob)
        summary["rel_l2"], summary["rel_h1"] = l2, h1
    except ReportUnavailable:
        pass
    for key in ("cells", "dofs", "residual", "rel_l2", "rel_h1"):
        val = summary[key]
        print(f"{key:9s} {'n/a' if val is None else (f'{val:.6e}' if isinstance(val, float) else val)}")
    if cfg.outputs.get("json"):
        summary["solution"] = u.tolist()
        _write(cfg.outputs["json"], json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_convergence(cfg: RunConfig) -> int:
    if cfg.problem in PRESETS:
        problem, family = PRESETS[cfg.problem]
        family = cfg.family or family
    else:
        problem, family = cfg.problem, cfg.family
    report = run_convergence(problem, family, cfg.levels, cfg.k, cfg.strategy_obj(),
                             seed=cfg.seed, sigma=cfg.sigma, n_iter=cfg.lloyd,
                             exactness=cfg.exactness)
    print(report.to_text(), end="")
    if cfg.outputs.get("csv"):
        _write(cfg.outputs["csv"], report.to_csv())
    if cfg.outputs.get("json"):
        _write(cfg.outputs["json"], report.to_json())
    return EXIT_OK


def cmd_inspect(cfg: RunConfig, full: bool = False) -> int:
    mesh = _mesh(cfg)
    strat = cfg.strategy_obj()
    out = []
    for ci, p in enumerate(mesh.polygons()):
        try:
            ops = element_operators(p, cfg.k, strat)
        except PropertySViolation as exc:
            raise PropertySViolation(f"element {ci}: {exc}", min_sv=exc.min_sv, element=ci) from exc
        d = ops.to_dict()
        if not full:
            d = {key: d[key] for key in d if key not in ("DS", "PiS", "Pi0k")}
        out.append({"element": ci, **d})
    text = json.dumps(out, indent=2) + "\n"
    if cfg.outputs.get("out"):
        _write(cfg.outputs["out"], text)
    else:
        print(text, end="")
    return EXIT_OK


def cmd_dofs(cfg: RunConfig) -> int:
    mesh = _mesh(cfg)
    names = None if cfg.strategy == "all" else [cfg.strategy_obj().kind]
    if names is not None and names[0] == "fixed":
        raise ConfigError("dofs reports the original, lazy and stingy strategies only")
    print(dof_report(mesh, cfg.k, names, cfg.theta0).to_text(), end="")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if cfg.command == "gen-mesh":
            return cmd_gen_mesh(cfg)
        if cfg.command == "solve":
            return cmd_solve(cfg)
        if cfg.command == "convergence":
            return cmd_convergence(cfg)
        if cfg.command == "inspect":
            return cmd_inspect(cfg, args.full)
        return cmd_dofs(cfg)
    except PropertySViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROPERTY_S
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, ModelError, InvalidGeometry, UnsupportedShape, MeshGenerationError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
