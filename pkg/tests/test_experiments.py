import json

import numpy as np
import pytest

from servem.assembly import assemble, interpolate, solve_problem
from servem.element import SerendipityStrategy
from servem.experiments import (
    ConvergenceReport,
    ReportUnavailable,
    dof_report,
    error_norms,
    level_mesh,
    mesh_dof_total,
    run_convergence,
)
from servem.geometry import Polygon
from servem.meshes import Mesh, gen_square_grid, gen_voronoi_lloyd
from servem.polynomials import gauss, multi_indices, poly_dim
from servem.problems import ModelProblem, get_problem, problem_polynomial

from shapes import PARALLELOGRAM, TRIANGLE, UNIT_SQUARE, regular

STINGY = SerendipityStrategy.stingy()


def test_norms_vanish_for_polynomial_solution():
    prob = problem_polynomial({a: 0.3 * (i + 1) for i, a in enumerate(multi_indices(3))})
    m = gen_voronoi_lloyd(12, 10, 0)
    disc, u = solve_problem(m, 3, STINGY, prob)
    l2, h1 = error_norms(m, 3, u, disc.operators, disc.dof_map, prob)
    assert l2 <= 1e-9 and h1 <= 1e-9


def test_zero_solution_has_unit_error():
    prob = ModelProblem("two", f=lambda x, y: 0 * x, g=lambda x, y: 0 * x + 2,
                        exact=lambda x, y: 0 * x + 2, exact_grad=lambda x, y: np.zeros((len(x), 2)))
    m = gen_square_grid(2)
    disc = assemble(m, 2, STINGY, prob)
    l2, h1 = error_norms(m, 2, np.zeros(disc.dof_map.n_dofs), disc.operators, disc.dof_map, prob)
    assert l2 == pytest.approx(1.0, abs=1e-14)
    assert np.isnan(h1)


def test_missing_exact_solution():
    m = gen_square_grid(1)
    prob = get_problem("zero")
    disc = assemble(m, 2, STINGY, prob)
    with pytest.raises(ReportUnavailable):
        error_norms(m, 2, np.zeros(disc.dof_map.n_dofs), disc.operators, disc.dof_map, prob)


def test_single_square_dense_oracle():
    """x^3 interpolated on one square, k=2: compare with an independent projection."""
    prob = ModelProblem("cubic", f=lambda x, y: -6 * x, g=lambda x, y: x**3,
                        exact=lambda x, y: x**3,
                        exact_grad=lambda x, y: np.stack([3 * x**2, 0 * y], -1))
    m = Mesh(np.array(UNIT_SQUARE, float), [[0, 1, 2, 3]])
    disc = assemble(m, 2, STINGY, prob)
    u = interpolate(disc, prob.exact)
    l2, _ = error_norms(m, 2, u, disc.operators, disc.dof_map, prob)
    # oracle: least-squares fit of the dof vector in the monomials 1, x, y, x^2, xy, y^2
    ops = disc.operators[0]
    c, h = ops.basis.center, ops.basis.h
    pts = np.array(UNIT_SQUARE, float)
    # k=2: one edge node, the midpoint
    edge_pts = 0.5 * (pts + np.roll(pts, -1, 0))
    all_pts = np.vstack([pts, edge_pts])
    X = (all_pts - c) / h
    V = np.column_stack([X[:, 0] ** a * X[:, 1] ** b for a, b in multi_indices(2)])
    coef = np.linalg.lstsq(V, all_pts[:, 0] ** 3, rcond=None)[0]
    g, w = gauss(8)
    gx, gy = np.meshgrid(0.5 * (g + 1), 0.5 * (g + 1))
    ww = np.outer(w, w).ravel() / 4
    q = np.column_stack([gx.ravel(), gy.ravel()])
    Q = (q - c) / h
    uh = np.column_stack([Q[:, 0] ** a * Q[:, 1] ** b for a, b in multi_indices(2)]) @ coef
    ex = q[:, 0] ** 3
    oracle = np.sqrt(ww @ (uh - ex) ** 2 / (ww @ ex**2))
    assert l2 == pytest.approx(oracle, abs=1e-10)


def test_report_rates_and_formats():
    rep = ConvergenceReport("p", "square", 2, "stingy")
    for h, e in [(0.4, 1e-2), (0.2, 1.25e-3), (0.1, 1.5625e-4)]:
        rep.levels.append({"mesh": f"m{h}", "cells": 1, "h": h, "dofs": 10, "rel_l2": e,
                           "rel_h1": 10 * e, "residual": 0.0})
    np.testing.assert_allclose(rep.rates(), [3.0, 3.0])
    lines = rep.to_csv().strip().splitlines()
    assert len(lines) == 4
    assert lines[0].split(",") == list(ConvergenceReport.COLUMNS)
    assert lines[1].split(",")[6] == "nan"
    data = json.loads(rep.to_json())
    assert data["levels"][0]["rate_l2"] is None
    assert data["levels"][2]["rate_l2"] == pytest.approx(3.0)
    assert "stingy" in rep.to_text()


def test_run_convergence_square_quintic_k4():
    rep = run_convergence("poisson-quintic", "square", 2, 4, STINGY)
    assert [lev["cells"] for lev in rep.levels] == [64, 256]
    assert rep.levels[0]["h"] > rep.levels[1]["h"]
    assert rep.rates()[0] == pytest.approx(5.0, abs=0.2)
    assert rep.levels[1]["rel_l2"] < rep.levels[0]["rel_l2"]


def test_run_convergence_is_reproducible():
    a = run_convergence("variable-coeff", "voronoi", 2, 2, STINGY, seed=3, n_iter=10, base=9)
    b = run_convergence("variable-coeff", "voronoi", 2, 2, STINGY, seed=3, n_iter=10, base=9)
    assert a.to_json() == b.to_json()
    assert a.meta["seeds"] == [3, 4]
    assert [lev["cells"] for lev in a.levels] == [9, 36]


def test_run_convergence_needs_two_levels():
    with pytest.raises(ValueError):
        run_convergence("poisson-quintic", "square", 1, 2, STINGY)
    with pytest.raises(ValueError):
        level_mesh("hexagonal", 0)


def test_dof_report_triangle():
    rep = dof_report(Polygon(TRIANGLE), 4)
    rows = {r["strategy"]: r["internal"] for r in rep.rows}
    assert rows == {"original": 6, "lazy": 3, "stingy": 3, "lagrange": 3}


def test_dof_report_square_stingy_mean_only():
    rows = {r["strategy"]: r["internal"] for r in dof_report(Polygon(UNIT_SQUARE), 4).rows}
    assert rows["stingy"] == 1 and rows["original"] == 6
    assert rows["serendipity-fem"] == 1


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5, 6])
def test_dof_report_parallelogram_matches_serendipity_fem(k):
    rows = {r["strategy"]: r["internal"] for r in dof_report(Polygon(PARALLELOGRAM), k).rows}
    assert rows["stingy"] == rows["serendipity-fem"] == poly_dim(max(k - 4, -1))


def test_dof_report_mesh_totals_reconcile():
    m = gen_voronoi_lloyd(30, 10, 5)
    rep = dof_report(m, 4)
    for name in ("original", "lazy", "stingy"):
        strat = SerendipityStrategy.parse(name)
        disc = assemble(m, 4, strat, get_problem("zero"))
        assert rep.total(name) == disc.dof_map.n_dofs == mesh_dof_total(m, 4, strat)
    assert rep.total("original") > rep.total("lazy") >= rep.total("stingy")
    assert "strategy" in rep.to_text()


def test_dof_report_hexagon_stingy_has_no_internal_for_k5():
    rows = {r["strategy"]: r["internal"] for r in dof_report(Polygon(regular(6)), 5).rows}
    assert rows["stingy"] == 0 and rows["lazy"] == 6
