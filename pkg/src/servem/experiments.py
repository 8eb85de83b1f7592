"""Error norms, convergence studies and dof-count reports."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import GlobalDofMap, solve_problem
from .element import SerendipityStrategy, build_dof_layout
from .geometry import Polygon, polygon_quadrature
from .meshes import Mesh, gen_square_grid, gen_trapezoid_grid, gen_voronoi_lloyd
from .polynomials import poly_dim
from .problems import ModelProblem, get_problem

log = logging.getLogger(__name__)


class ReportUnavailable(ValueError):
    """Raised when an error norm is requested for a problem without exact solution."""


def error_norms(mesh: Mesh, k: int, u, operators, dof_map: GlobalDofMap,
                prob: ModelProblem, exactness=None):
    """Relative L2 and H1-seminorm errors of the projected discrete solution.

    The L2 error uses ``Pi0k u_h`` and the H1 error ``Pi0_{k-1} grad u_h``
    on each element. Returns ``nan`` for a norm whose exact counterpart
    vanishes identically.
    """
    if not prob.has_exact:
        raise ReportUnavailable(f"problem {prob.name} has no exact solution")
    q = 2 * k + 4 if exactness is None else exactness
    e0 = n0 = e1 = n1 = 0.0
    for ci, op in enumerate(operators):
        p = op.polygon
        pts, w = polygon_quadrature(p, q)
        x, y = pts[:, 0], pts[:, 1]
        ue = dof_map_local(u, dof_map, ci)
        M = op.basis.eval(pts)
        uh = M @ (op.Pi0k @ ue)
        ex = prob.exact(x, y)
        e0 += w @ (uh - ex) ** 2
        n0 += w @ ex**2
        m1 = op.Pi0grad[0].shape[0]
        gh = np.stack([M[:, :m1] @ (op.Pi0grad[0] @ ue), M[:, :m1] @ (op.Pi0grad[1] @ ue)], -1)
        gex = prob.exact_grad(x, y) if prob.exact_grad is not None else None
        if gex is not None:
            e1 += w @ np.sum((gh - gex) ** 2, axis=1)
            n1 += w @ np.sum(gex**2, axis=1)
    rel0 = math.sqrt(e0 / n0) if n0 > 0 else float("nan")
    rel1 = math.sqrt(e1 / n1) if n1 > 0 else float("nan")
    return rel0, rel1


def dof_map_local(u, dof_map: GlobalDofMap, ci: int) -> np.ndarray:
    return np.asarray(u)[dof_map.cell_dofs[ci]]


# convergence studies

PRESETS = {
    "trapezoid-quintic": ("poisson-quintic", "trapezoid"),
    "lloyd-variable": ("variable-coeff", "voronoi"),
}

FAMILIES = ("square", "trapezoid", "voronoi")


def level_mesh(family: str, level: int, *, seed: int = 0, sigma: float = 0.2,
               n_iter: int = 50, base: int | None = None):
    """Mesh for refinement ``level`` of a family, plus a short descriptor.

    Grids use ``n = base * 2**level`` (base 8); Voronoi meshes use
    ``base * 4**level`` cells (base 25) and seed ``seed + level``.
    """
    if family == "square":
        n = (base or 8) * 2**level
        return gen_square_grid(n), f"square {n}x{n}"
    if family == "trapezoid":
        n = (base or 8) * 2**level
        return gen_trapezoid_grid(n, sigma), f"trapezoid {n}x{n}"
    if family == "voronoi":
        n = (base or 25) * 4**level
        return gen_voronoi_lloyd(n, n_iter, seed + level), f"voronoi {n}"
    raise ValueError(f"unknown mesh family {family!r}; choose from {FAMILIES}")


@dataclass
class ConvergenceReport:
    problem: str
    family: str
    k: int
    strategy: str
    levels: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    COLUMNS = ("mesh", "cells", "h", "dofs", "rel_l2", "rel_h1", "rate_l2", "rate_h1", "residual")

    def rates(self, key: str = "rel_l2") -> list:
        """Observed orders ``log(e_i / e_{i+1}) / log(h_i / h_{i+1})``."""
        out = []
        for a, b in zip(self.levels, self.levels[1:]):
            ea, eb = a[key], b[key]
            if ea > 0 and eb > 0 and a["h"] != b["h"]:
                out.append(math.log(ea / eb) / math.log(a["h"] / b["h"]))
            else:
                out.append(float("nan"))
        return out

    def rows(self) -> list:
        r2, r1 = self.rates("rel_l2"), self.rates("rel_h1")
        rows = []
        for i, lev in enumerate(self.levels):
            row = dict(lev)
            row["rate_l2"] = r2[i - 1] if i else float("nan")
            row["rate_h1"] = r1[i - 1] if i else float("nan")
            rows.append(row)
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.COLUMNS)
        for row in self.rows():
            writer.writerow([_fmt(row[c]) for c in self.COLUMNS])
        return buf.getvalue()

    def to_text(self) -> str:
        head = f"{self.problem} on {self.family}, k={self.k}, {self.strategy}"
        table = [list(self.COLUMNS)] + [[_fmt(r[c]) for c in self.COLUMNS] for r in self.rows()]
        widths = [max(len(row[j]) for row in table) for j in range(len(self.COLUMNS))]
        lines = [head] + ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in table]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        data = {
            "problem": self.problem,
            "family": self.family,
            "k": self.k,
            "strategy": self.strategy,
            "meta": self.meta,
            "levels": self.rows(),
        }
        return json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6e}"
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and math.isnan(v):
        return None
    if isinstance(v, np.generic):
        return v.item()
    return v


def run_convergence(problem, family: str, levels: int, k: int, strat: SerendipityStrategy,
                    *, seed: int = 0, sigma: float = 0.2, n_iter: int = 50,
                    base: int | None = None, exactness=None, meshes=None) -> ConvergenceReport:
    """Solve on ``levels`` successively refined meshes and collect errors.

    ``problem`` is a :class:`ModelProblem` or a registered name. Pass
    ``meshes`` as a list of ``(mesh, descriptor)`` pairs to reuse meshes
    already built with :func:`level_mesh`.
    """
    if levels < 2:
        raise ValueError("a convergence study needs at least two levels")
    prob = get_problem(problem) if isinstance(problem, str) else problem
    report = ConvergenceReport(prob.name, family, k, str(strat))
    report.meta = {"theta0": strat.theta0, "sigma": sigma if family == "trapezoid" else None,
                   "seeds": [seed + i for i in range(levels)] if family == "voronoi" else None,
                   "lloyd_iterations": n_iter if family == "voronoi" else None}
    for level in range(levels):
        if meshes is not None:
            mesh, desc = meshes[level]
        else:
            mesh, desc = level_mesh(family, level, seed=seed, sigma=sigma, n_iter=n_iter, base=base)
        disc, u = solve_problem(mesh, k, strat, prob, exactness)
        l2, h1 = error_norms(mesh, k, u, disc.operators, disc.dof_map, prob)
        log.info("%s: dofs=%d relL2=%.3e", desc, disc.dof_map.n_dofs, l2)
        report.levels.append({
            "mesh": desc, "cells": mesh.n_cells, "h": mesh.max_diameter(),
            "dofs": disc.dof_map.n_dofs, "rel_l2": l2, "rel_h1": h1,
            "residual": disc.system.residual,
        })
    return report


# dof accounting

STRATEGIES = {
    "original": SerendipityStrategy.original,
    "lazy": SerendipityStrategy.lazy,
    "stingy": SerendipityStrategy.stingy,
}


@dataclass
class DofReport:
    k: int
    rows: list

    def to_text(self) -> str:
        cols = list(self.rows[0])
        table = [cols] + [[str(r[c]) for c in cols] for r in self.rows]
        widths = [max(len(row[j]) for row in table) for j in range(len(cols))]
        return "\n".join("  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in table) + "\n"

    def total(self, name: str) -> int:
        for r in self.rows:
            if r["strategy"] == name:
                return r["total"]
        raise KeyError(name)


def mesh_dof_total(mesh: Mesh, k: int, strat: SerendipityStrategy) -> int:
    internal = sum(build_dof_layout(p, k, strat).n_internal for p in mesh.polygons())
    return mesh.n_vertices + len(mesh.edges) * (k - 1) + internal


def dof_report(target, k: int, strategies=None, theta0: float = 1e-8) -> DofReport:
    """Internal dof counts per strategy for a polygon, or global totals for a mesh.

    For a single triangle an extra ``lagrange`` row gives the Lagrange
    element's internal count; for a parallelogram a ``serendipity-fem`` row
    gives that of the classical serendipity element.
    """
    names = strategies or list(STRATEGIES)
    rows = []
    if isinstance(target, Polygon):
        for name in names:
            strat = STRATEGIES[name](theta0) if name == "stingy" else STRATEGIES[name]()
            lay = build_dof_layout(target, k, strat)
            rows.append({"strategy": name, "internal": lay.n_internal,
                         "total": lay.n_boundary + lay.n_internal})
        nb = k * target.n_vertices
        if target.n_vertices == 3:
            rows.append({"strategy": "lagrange", "internal": poly_dim(k - 3) if k >= 2 else 0,
                         "total": nb + (poly_dim(k - 3) if k >= 2 else 0)})
        if _is_parallelogram(target):
            n = poly_dim(k - 4) if k >= 3 else 0
            rows.append({"strategy": "serendipity-fem", "internal": n, "total": nb + n})
        return DofReport(k, rows)
    for name in names:
        strat = STRATEGIES[name](theta0) if name == "stingy" else STRATEGIES[name]()
        layouts = [build_dof_layout(p, k, strat) for p in target.polygons()]
        internal = sum(l.n_internal for l in layouts)
        rows.append({"strategy": name, "internal": internal,
                     "total": target.n_vertices + len(target.edges) * (k - 1) + internal})
    return DofReport(k, rows)


def _is_parallelogram(p: Polygon, tol: float = 1e-12) -> bool:
    if p.n_vertices != 4:
        return False
    v = p.vertices
    scale = p.diameter
    return bool(np.linalg.norm(v[1] - v[0] - (v[2] - v[3])) <= tol * scale)
