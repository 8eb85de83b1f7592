"""Randomized invariants checked with hypothesis."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from servem.assembly import stabilization
from servem.element import SerendipityStrategy, build_D, build_dof_layout, element_operators
from servem.geometry import Polygon, distinct_edge_lines, monomial_integral, polygon_quadrature
from servem.polynomials import ScaledMonomialBasis, mass_matrix_H, multi_indices, poly_dim

from shapes import ARROW_QUAD, L_SHAPE, pentagram

SETTINGS = settings(max_examples=100, deadline=None)
STINGY = SerendipityStrategy.stingy()

coords = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)
# bounded gaps and aspect keep the elements shape regular
gaps = st.lists(st.floats(0.5, 1.0), min_size=3, max_size=9)


def _inscribed_polygon(args):
    """Vertices on an ellipse at increasing angles: always strictly convex."""
    g, aspect, tilt = args
    g = np.asarray(g)
    t = 2 * np.pi * np.cumsum(g) / g.sum()
    pts = np.column_stack([np.cos(t), aspect * np.sin(t)])
    c, s = np.cos(tilt), np.sin(tilt)
    return Polygon(pts @ np.array([[c, -s], [s, c]]).T)


convex_polygons = st.tuples(gaps, st.floats(0.5, 1.0), st.floats(0.0, np.pi)).map(_inscribed_polygon)
fixed_shapes = st.sampled_from([Polygon(L_SHAPE), Polygon(ARROW_QUAD), Polygon(pentagram())])
# shapes the stingy rule accepts at every order
stingy_shapes = st.one_of(convex_polygons, st.just(Polygon(ARROW_QUAD)))
motions = st.tuples(st.floats(0.01, 100.0), coords, coords, st.floats(0.0, 2 * np.pi))


@SETTINGS
@given(st.one_of(convex_polygons, fixed_shapes), motions, st.integers(0, 20))
def test_eta_invariant_under_rigid_motion_and_relabel(p, motion, shift):
    scale, sx, sy, angle = motion
    q = p.transformed(scale=scale, shift=(10 * sx, 10 * sy), angle=angle)
    q = Polygon(np.roll(q.vertices, shift % p.n_vertices, axis=0))
    assert distinct_edge_lines(q)[0] == distinct_edge_lines(p)[0]


@SETTINGS
@given(convex_polygons, st.integers(0, 10))
def test_quadrature_exact_for_monomials(p, q):
    pts, w = polygon_quadrature(p, q)
    c = p.centroid
    for a, b in multi_indices(q):
        exact = monomial_integral(p, a, b, c)
        approx = w @ ((pts[:, 0] - c[0]) ** a * (pts[:, 1] - c[1]) ** b)
        assert abs(approx - exact) <= 1e-12 * p.diameter ** (a + b) * p.area + 1e-15


@SETTINGS
@given(convex_polygons, st.integers(1, 5), st.floats(0.1, 0.9), st.floats(0.1, 0.9))
def test_basis_gradient_matches_finite_differences(p, k, s, t):
    B = ScaledMonomialBasis.for_polygon(p, k)
    v = p.vertices
    x = (1 - s) * p.centroid + s * ((1 - t) * v[0] + t * v[1])
    step = 1e-7 * B.h
    gx, gy = B.eval_grad(x[None])
    fd_x = (B.eval(x[None] + [step, 0]) - B.eval(x[None] - [step, 0])) / (2 * step)
    fd_y = (B.eval(x[None] + [0, step]) - B.eval(x[None] - [0, step])) / (2 * step)
    scale = max(1.0, np.abs(gx).max(), np.abs(gy).max())
    assert np.abs(gx - fd_x).max() <= 1e-6 * scale
    assert np.abs(gy - fd_y).max() <= 1e-6 * scale


@SETTINGS
@given(convex_polygons, st.integers(1, 4), st.floats(1e-3, 1e3), coords, coords)
def test_mass_conditioning_invariant_under_scaling(p, k, scale, sx, sy):
    q = p.transformed(scale=scale, shift=(100 * sx, 100 * sy))
    Hp = mass_matrix_H(ScaledMonomialBasis.for_polygon(p, k), p) / p.area
    Hq = mass_matrix_H(ScaledMonomialBasis.for_polygon(q, k), q) / q.area
    # shifts of up to 1e5 element sizes cost about 1e-11 in the coordinates
    np.testing.assert_allclose(Hq, Hp, atol=1e-10)
    assert abs(np.linalg.cond(Hp) - np.linalg.cond(Hq)) <= 1e-8 * np.linalg.cond(Hp)


@SETTINGS
@given(stingy_shapes, st.integers(1, 4), st.floats(1e-3, 1e3), coords, coords)
def test_operators_invariant_under_scaling(p, k, scale, sx, sy):
    q = p.transformed(scale=scale, shift=(100 * sx, 100 * sy))
    a = element_operators(p, k, STINGY)
    b = element_operators(q, k, STINGY)
    np.testing.assert_allclose(b.DS, a.DS, atol=1e-9)
    # geometry far from the origin carries ~1e-12 errors; the arrow's mass matrix
    # (cond ~ 1e9) amplifies them in Pi0k
    np.testing.assert_allclose(b.Pi0k, a.Pi0k, atol=1e-6 * max(1.0, np.abs(a.Pi0k).max()))


@SETTINGS
@given(st.one_of(convex_polygons, fixed_shapes), st.integers(1, 4),
       st.sampled_from(["original", "lazy", "stingy"]), st.integers(0, 2**32 - 1))
def test_projector_idempotent(p, k, strat, seed):
    if strat == "stingy" and not p.is_convex() and p.n_vertices > 4:
        strat = "lazy"
    ops = element_operators(p, k, SerendipityStrategy.parse(strat))
    n = poly_dim(k)
    np.testing.assert_allclose(ops.PiS @ ops.DS, np.eye(n), atol=1e-10)
    # Pi0k also solves with the monomial mass matrix (cond up to ~1e9)
    np.testing.assert_allclose(ops.Pi0k @ ops.DS, np.eye(n), atol=1e-8)
    phi = np.random.default_rng(seed).normal(size=ops.layout.S)
    c = ops.PiS @ phi
    np.testing.assert_allclose(ops.PiS @ (ops.DS @ c), c, atol=1e-9 * max(1.0, np.abs(c).max()))


@SETTINGS
@given(st.one_of(convex_polygons, fixed_shapes), st.integers(0, 6))
def test_scaled_monomials_bounded_on_element(p, k):
    pts, _ = polygon_quadrature(p, 6)
    vals = ScaledMonomialBasis.for_polygon(p, k).eval(np.vstack([pts, p.vertices]))
    assert np.abs(vals).max() <= 1.0 + 1e-14


@SETTINGS
@given(convex_polygons, st.integers(1, 4))
def test_stabilization_semidefinite_with_polynomial_kernel(p, k):
    ops = element_operators(p, k, STINGY)
    ev = np.linalg.eigvalsh(stabilization(ops))
    tol = 1e-10 * max(1.0, ev.max())
    assert ev.min() >= -tol
    assert (ev > tol).sum() == ops.layout.S - poly_dim(k)


@SETTINGS
@given(convex_polygons, st.integers(2, 5))
def test_dof_count_monotone_in_strategy(p, k):
    sizes = [build_dof_layout(p, k, SerendipityStrategy.parse(s)).S
             for s in ("original", "lazy", "stingy")]
    assert sizes[0] > sizes[1] >= sizes[2]
    lay = build_dof_layout(p, k, STINGY)
    assert build_D(p, k, lay).shape == (lay.S, poly_dim(k))
