"""Local forms, global assembly, Dirichlet elimination and the linear solve."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from .element import (
    ElementOperators,
    PropertySViolation,
    SerendipityStrategy,
    boundary_dof_points,
    element_operators,
    moment_constraint_matrix,
)
from .geometry import Polygon, polygon_quadrature
from .meshes import Mesh
from .polynomials import gauss_lobatto
from .problems import ModelProblem

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


def local_system(p: Polygon, ops: ElementOperators, prob: ModelProblem, exactness=None):
    """Element matrix and load vector.

    ``A = K + C + R + S_stab`` with projected gradients and values of
    degree ``k-1``::

        K_ij = int kappa P grad phi_j . P grad phi_i
        C_ij = -int P phi_j (b . P grad phi_i)
        R_ij = int gamma P phi_j P phi_i
        S_ij = tau sum_r (I - D Pi0k)_rj (I - D Pi0k)_ri
        f_i  = int f Pi0k phi_i

    where ``tau`` is the mean diagonal entry of ``K`` over the boundary dofs.
    """
    k = ops.k
    q = 2 * k + 2 if exactness is None else exactness
    pts, w = polygon_quadrature(p, q)
    x, y = pts[:, 0], pts[:, 1]
    M = ops.basis.eval(pts)
    n1 = ops.Pi0km1.shape[0]
    gx = M[:, :n1] @ ops.Pi0grad[0]
    gy = M[:, :n1] @ ops.Pi0grad[1]
    g = np.stack([gx, gy], axis=1)  # (nq, 2, S)

    K = prob.kappa_at(x, y)
    Kg = np.einsum("qab,qbj->qaj", K, g)
    A = np.einsum("q,qai,qaj->ij", w, g, Kg)
    # internal-moment rows of K can be orders of magnitude larger; they
    # would inflate tau and wreck the conditioning
    tau = float(np.mean(np.diag(A)[: ops.layout.n_boundary]))

    if prob.b is not None or prob.gamma is not None:
        P0 = M[:, :n1] @ ops.Pi0km1
        if prob.b is not None:
            bg = np.einsum("qa,qai->qi", prob.b(x, y), g)
            A -= (bg * w[:, None]).T @ P0
        if prob.gamma is not None:
            A += (P0 * (w * prob.gamma(x, y))[:, None]).T @ P0

    R = np.eye(ops.layout.S) - ops.DS @ ops.Pi0k
    A += tau * R.T @ R

    F = (M @ ops.Pi0k).T @ (w * prob.f(x, y))
    return A, F


def stabilization(ops: ElementOperators, tau: float = 1.0) -> np.ndarray:
    R = np.eye(ops.layout.S) - ops.DS @ ops.Pi0k
    return tau * R.T @ R


@dataclass
class GlobalDofMap:
    """Global numbering: vertices, then edge Gauss-Lobatto slots, then internal moments.

    Edge slots follow the canonical orientation (lower vertex index first).
    """

    k: int
    n_vertices: int
    n_edges: int
    cell_dofs: list
    internal_offsets: np.ndarray
    n_dofs: int
    boundary_mask: np.ndarray
    dof_points: np.ndarray

    @property
    def n_internal(self) -> int:
        return int(self.n_dofs - self.n_vertices - self.n_edges * (self.k - 1))


def build_dof_map(mesh: Mesh, k: int, n_internal_per_cell) -> GlobalDofMap:
    nv = mesh.n_vertices
    edges = mesh.edges
    ne = len(edges)
    edge_base = nv
    int_base = nv + ne * (k - 1)
    offsets = int_base + np.concatenate([[0], np.cumsum(n_internal_per_cell)])
    n_dofs = int(offsets[-1])

    cell_dofs = []
    for ci, c in enumerate(mesh.cells):
        dofs = list(c)
        for a, b in zip(c, c[1:] + c[:1]):
            e = edges[(min(a, b), max(a, b))]
            slots = [edge_base + e * (k - 1) + j for j in range(k - 1)]
            dofs += slots if a < b else slots[::-1]
        dofs += range(offsets[ci], offsets[ci + 1])
        cell_dofs.append(np.array(dofs, dtype=int))

    mask = np.zeros(n_dofs, bool)
    points = np.full((n_dofs, 2), np.nan)
    points[:nv] = mesh.vertices
    nodes = 0.5 * (gauss_lobatto(k + 1)[0][1:-1] + 1.0)
    for (a, b), e in edges.items():
        sl = slice(edge_base + e * (k - 1), edge_base + (e + 1) * (k - 1))
        pa, pb = mesh.vertices[a], mesh.vertices[b]
        points[sl] = pa + nodes[:, None] * (pb - pa)
        if (a, b) in mesh.boundary_edges:
            mask[[a, b]] = True
            mask[sl] = True
    return GlobalDofMap(k, nv, ne, cell_dofs, offsets, n_dofs, mask, points)


@dataclass
class SparseSystem:
    matrix: sparse.csr_matrix
    rhs: np.ndarray
    solution: Optional[np.ndarray] = None
    free: Optional[np.ndarray] = None
    fixed_values: Optional[np.ndarray] = None
    residual: Optional[float] = None


@dataclass
class Discretization:
    mesh: Mesh
    k: int
    strategy: SerendipityStrategy
    dof_map: GlobalDofMap
    operators: list = field(repr=False)
    system: SparseSystem = field(repr=False)


def element_operators_for_mesh(mesh: Mesh, k: int, strat: SerendipityStrategy) -> list:
    ops = []
    for ci in range(mesh.n_cells):
        p = mesh.polygon(ci)
        try:
            ops.append(element_operators(p, k, strat))
        except PropertySViolation as exc:
            exc.element = ci
            raise PropertySViolation(f"element {ci}: {exc}", min_sv=exc.min_sv, element=ci) from exc
    return ops


def _sum_triplets(rows, cols, vals, shape):
    """Sum duplicate entries in a fixed canonical order (row, col, value)."""
    order = np.lexsort((vals, cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if len(rows) == 0:
        return sparse.csr_matrix(shape)
    key_change = np.flatnonzero((np.diff(rows) != 0) | (np.diff(cols) != 0)) + 1
    starts = np.concatenate([[0], key_change])
    summed = np.add.reduceat(vals, starts)
    return sparse.csr_matrix((summed, (rows[starts], cols[starts])), shape=shape)


def assemble(mesh: Mesh, k: int, strat: SerendipityStrategy, prob: ModelProblem,
             exactness=None, operators=None) -> Discretization:
    """Build element operators and the global (unconstrained) system.

    Raises
    ------
    PropertySViolation
        With ``element`` set to the offending cell index.
    """
    if operators is None:
        operators = element_operators_for_mesh(mesh, k, strat)
    dmap = build_dof_map(mesh, k, [op.layout.n_internal for op in operators])
    rows, cols, vals, frows, fvals = [], [], [], [], []
    for ci, op in enumerate(operators):
        A, F = local_system(op.polygon, op, prob, exactness)
        d = dmap.cell_dofs[ci]
        rows.append(np.repeat(d, len(d)))
        cols.append(np.tile(d, len(d)))
        vals.append(A.ravel())
        frows.append(d)
        fvals.append(F)
    shape = (dmap.n_dofs, dmap.n_dofs)
    matrix = _sum_triplets(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), shape)
    frows = np.concatenate(frows)
    rhs = _sum_triplets(frows, np.zeros_like(frows), np.concatenate(fvals), (dmap.n_dofs, 1))
    rhs = rhs.toarray().ravel()
    return Discretization(mesh, k, strat, dmap, operators, SparseSystem(matrix, rhs))


def apply_dirichlet(sys: SparseSystem, dmap: GlobalDofMap, g) -> SparseSystem:
    """Eliminate boundary dofs set to point values of ``g``."""
    fixed = np.flatnonzero(dmap.boundary_mask)
    free = np.flatnonzero(~dmap.boundary_mask)
    pts = dmap.dof_points[fixed]
    values = np.asarray(g(pts[:, 0], pts[:, 1]), float)
    A = sys.matrix
    A_ff = A[free][:, free].tocsr()
    rhs = sys.rhs[free] - A[free][:, fixed] @ values
    full = np.zeros(len(sys.rhs))
    full[fixed] = values
    return SparseSystem(A_ff, rhs, free=free, fixed_values=full)


def solve(sys: SparseSystem, tol: float = RESIDUAL_TOL) -> np.ndarray:
    """Sparse direct solve with one step of iterative refinement.

    Raises :class:`SolverError` when the relative residual exceeds ``tol``.
    """
    A = sys.matrix.tocsc()
    b = np.asarray(sys.rhs, float)
    bnorm = np.linalg.norm(b)
    if A.shape[0] == 0:
        x = np.zeros(0)
    elif bnorm == 0:
        x = np.zeros_like(b)
    else:
        try:
            lu = spla.splu(A)
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc
        x = lu.solve(b)
        x += lu.solve(b - A @ x)
    res = float(np.linalg.norm(A @ x - b) / bnorm) if bnorm > 0 else 0.0
    sys.residual = res
    if not np.isfinite(res) or res > tol:
        raise SolverError(f"relative residual {res:.3e} exceeds {tol:.1e}", residual=res)
    if sys.free is not None:
        full = sys.fixed_values.copy()
        full[sys.free] = x
        sys.solution = full
    else:
        sys.solution = x
    return sys.solution


def solve_problem(mesh: Mesh, k: int, strat: SerendipityStrategy, prob: ModelProblem,
                  exactness=None, operators=None):
    """Assemble, impose ``g`` and solve; returns ``(discretization, full dof vector)``."""
    disc = assemble(mesh, k, strat, prob, exactness, operators)
    reduced = apply_dirichlet(disc.system, disc.dof_map, prob.g)
    u = solve(reduced)
    disc.system.solution = u
    disc.system.residual = reduced.residual
    return disc, u


def interpolate(disc: Discretization, fn_values, exactness=None) -> np.ndarray:
    """Global dof vector of the element-wise interpolant of a smooth function.

    ``fn_values(x, y)`` is evaluated at boundary dof points; internal
    moments are computed by quadrature.
    """
    dmap = disc.dof_map
    out = np.zeros(dmap.n_dofs)
    for ci, op in enumerate(disc.operators):
        p = op.polygon
        d = dmap.cell_dofs[ci]
        bpts = boundary_dof_points(p, op.layout)
        out[d[: op.layout.n_boundary]] = fn_values(bpts[:, 0], bpts[:, 1])
        if op.layout.n_internal:
            q = 2 * op.k + 4 if exactness is None else exactness
            pts, w = polygon_quadrature(p, q)
            mom = op.basis.eval(pts).T @ (w * fn_values(pts[:, 0], pts[:, 1])) / p.area
            out[d[op.layout.n_boundary:]] = moment_constraint_matrix(op.layout) @ mom
    return out


def write_matrix_market(sys: SparseSystem, path) -> None:
    import scipy.io

    scipy.io.mmwrite(str(path), sys.matrix)
