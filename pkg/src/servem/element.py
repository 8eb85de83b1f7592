"""Serendipity virtual element operators on a single polygon.

The retained degrees of freedom of an element of order ``k`` are

* vertex values,
* values at the ``k - 1`` interior Gauss-Lobatto points of each edge,
* scaled internal moments ``(1/|E|) int_E phi m_alpha (w2) dE`` for
  ``|alpha| <= k_int``.

From them a least-squares projector onto ``P_k`` is built; the moments of
degree up to ``k`` that are not retained are defined as those of the
projection, which fixes the reduced space and lets the ``L2`` projections
be computed from the retained values alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .geometry import Polygon, distinct_edge_lines, reentrant_weight
from .polynomials import (
    ScaledMonomialBasis,
    gauss,
    gauss_lobatto,
    index_of,
    lagrange_matrix,
    mass_matrix_H,
    multi_indices,
    multiplication_matrix,
    poly_dim,
)

SV_TOL = 1e-10


class PropertySViolation(RuntimeError):
    """The retained dofs do not determine polynomials of degree k."""

    def __init__(self, message, min_sv=None, element=None):
        super().__init__(message)
        self.min_sv = min_sv
        self.element = element


@dataclass(frozen=True)
class SerendipityStrategy:
    """How many internal moments an element keeps.

    ``kind`` is one of ``"original"`` (degree k-2), ``"lazy"`` (k-3),
    ``"stingy"`` (k - eta_E(theta0)) or ``"fixed"`` (``degree``).
    """

    kind: str
    theta0: float = 1e-8
    degree: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("original", "lazy", "stingy", "fixed"):
            raise ValueError(f"unknown strategy {self.kind!r}")
        if self.kind == "fixed" and self.degree is None:
            raise ValueError("fixed strategy needs a degree")
        if self.theta0 < 0:
            raise ValueError("theta0 must be non-negative")

    @classmethod
    def original(cls):
        return cls("original")

    @classmethod
    def lazy(cls):
        return cls("lazy")

    @classmethod
    def stingy(cls, theta0=1e-8):
        return cls("stingy", theta0=theta0)

    @classmethod
    def fixed(cls, degree):
        return cls("fixed", degree=int(degree))

    @classmethod
    def parse(cls, text: str, theta0: float = 1e-8) -> "SerendipityStrategy":
        text = text.strip().lower()
        if text.startswith("fixed"):
            _, _, deg = text.partition(":")
            return cls.fixed(int(deg))
        if text == "stingy":
            return cls.stingy(theta0)
        return cls(text)

    def __str__(self):
        if self.kind == "fixed":
            return f"fixed:{self.degree}"
        return self.kind


@dataclass(frozen=True, eq=False)
class DofLayout:
    k: int
    n_vertices: int
    k_int: int
    eta: int
    convex: bool
    weight: Optional[np.ndarray] = None

    @property
    def n_edges(self) -> int:
        return self.n_vertices

    @property
    def edge_nodes(self) -> np.ndarray:
        """Interior Gauss-Lobatto nodes on [-1, 1], ascending."""
        return gauss_lobatto(self.k + 1)[0][1:-1]

    @property
    def n_boundary(self) -> int:
        return self.k * self.n_vertices

    @property
    def n_internal(self) -> int:
        return poly_dim(self.k_int)

    @property
    def S(self) -> int:
        return self.n_boundary + self.n_internal

    @property
    def N_E(self) -> int:
        return self.k * self.n_edges + poly_dim(self.k)

    @property
    def weighted(self) -> bool:
        return self.weight is not None


def internal_degree(p: Polygon, k: int, strat: SerendipityStrategy) -> int:
    if strat.kind == "original":
        deg = k - 2
    elif strat.kind == "lazy":
        deg = k - 3
    elif strat.kind == "stingy":
        deg = k - distinct_edge_lines(p, strat.theta0)[0]
    else:
        deg = strat.degree
    return max(deg, -1)


def build_dof_layout(p: Polygon, k: int, strat: SerendipityStrategy) -> DofLayout:
    """Choose the retained dofs of ``p`` for order ``k`` under ``strat``.

    Raises
    ------
    UnsupportedShape
        Stingy strategy on a polygon with more than two re-entrant lines.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    eta, _ = distinct_edge_lines(p, strat.theta0)
    convex = p.is_convex()
    k_int = internal_degree(p, k, strat)
    weight = None
    if strat.kind == "stingy" and not convex:
        weight = reentrant_weight(p, strat.theta0)
    return DofLayout(k=k, n_vertices=p.n_vertices, k_int=k_int, eta=eta, convex=convex,
                     weight=weight)


def boundary_dof_points(p: Polygon, layout: DofLayout) -> np.ndarray:
    """Coordinates of the vertex and edge dofs, in local dof order."""
    v = p.vertices
    s = 0.5 * (layout.edge_nodes + 1.0)
    nxt = np.roll(v, -1, axis=0)
    edge_pts = v[:, None, :] + s[None, :, None] * (nxt - v)[:, None, :]
    return np.vstack([v, edge_pts.reshape(-1, 2)])


def moment_constraint_matrix(layout: DofLayout) -> np.ndarray:
    """Matrix mapping all scaled moments of degree ``<= k`` to the internal dofs."""
    k, ki = layout.k, layout.k_int
    if ki < 0:
        return np.zeros((0, poly_dim(k)))
    if layout.weighted:
        return multiplication_matrix(layout.weight, ki, k)
    W = np.zeros((poly_dim(ki), poly_dim(k)))
    W[:, : poly_dim(ki)] = np.eye(poly_dim(ki))
    return W


def build_D(p: Polygon, k: int, layout: DofLayout, H=None) -> np.ndarray:
    """Matrix ``DS[i, alpha] = delta_i(m_alpha)`` of the retained dofs."""
    B = ScaledMonomialBasis.for_polygon(p, k)
    if H is None:
        H = mass_matrix_H(B, p)
    rows = B.eval(boundary_dof_points(p, layout))
    internal = moment_constraint_matrix(layout) @ H / p.area
    return np.vstack([rows, internal])


def solve_mass(H, rhs) -> np.ndarray:
    """Solve with a monomial mass matrix after symmetric diagonal scaling.

    Scaled monomials of different degrees have very different norms on
    elongated elements; equilibrating first removes most of that spread.
    """
    d = 1.0 / np.sqrt(np.diag(H))
    factor = scipy.linalg.cho_factor(H * np.outer(d, d))
    return d[:, None] * scipy.linalg.cho_solve(factor, d[:, None] * rhs)


def check_property_S(DS):
    """Column-scaled smallest singular value test of ``DS``.

    Returns ``(ok, min_sv)`` with ``ok`` true when ``min_sv > 1e-10``.
    """
    DS = np.asarray(DS, float)
    if DS.shape[0] < DS.shape[1]:
        return False, 0.0
    scale = np.abs(DS).max(axis=0)
    scale[scale == 0] = 1.0
    sv = np.linalg.svd(DS / scale, compute_uv=False)
    min_sv = float(sv[-1])
    return min_sv > SV_TOL, min_sv


def build_PiS(DS) -> np.ndarray:
    """Least-squares projector from dof vectors to ``P_k`` coefficients."""
    ok, min_sv = check_property_S(DS)
    if not ok:
        raise PropertySViolation(f"retained dofs are not unisolvent on P_k (min_sv={min_sv:.3e})",
                                 min_sv=min_sv)
    scale = np.abs(DS).max(axis=0)
    Q, R = scipy.linalg.qr(DS / scale, mode="economic")
    return scipy.linalg.solve_triangular(R, Q.T) / scale[:, None]


def extend_and_project(p: Polygon, k: int, layout: DofLayout, DS, PiS, H=None):
    """Scaled moments of degree ``<= k`` and the ``L2`` projection onto ``P_k``.

    Returns
    -------
    MomFull : ndarray, shape (pi_k, S)
        ``(1/|E|) int_E phi m_alpha`` of each dof basis function.
    Pi0k : ndarray, shape (pi_k, S)
        Coefficients of the ``L2(E)`` projection onto ``P_k``.
    """
    B = ScaledMonomialBasis.for_polygon(p, k)
    if H is None:
        H = mass_matrix_H(B, p)
    S = layout.S
    MomS = H @ PiS / p.area
    W = moment_constraint_matrix(layout)
    if not W.shape[0]:
        return MomS, PiS.copy()
    internal = np.zeros((W.shape[0], S))
    internal[:, layout.n_boundary:] = np.eye(W.shape[0])
    if layout.weighted:
        correction = np.linalg.lstsq(W, internal - W @ MomS, rcond=None)[0]
    else:
        correction = W.T @ (internal - W @ MomS)
    MomFull = MomS + correction
    # H^{-1} (|E| MomS) is PiS itself; only the correction goes through H
    Pi0k = PiS + solve_mass(H, p.area * correction)
    return MomFull, Pi0k


def build_Pi0grad(p: Polygon, k: int, layout: DofLayout, MomFull, H=None):
    """``L2`` projection onto ``P_{k-1}`` of both partial derivatives.

    Uses integration by parts: the volume term comes from the moments of
    degree ``<= k-2``, the boundary term from the degree-``k`` edge traces.
    """
    n1 = poly_dim(k - 1)
    B = ScaledMonomialBasis.for_polygon(p, k)
    if H is None:
        H = mass_matrix_H(B, p)
    S = layout.S
    Gx = np.zeros((n1, S))
    Gy = np.zeros((n1, S))
    h = p.diameter
    for b, (bx, by) in enumerate(multi_indices(k - 1)):
        if bx > 0:
            Gx[b] -= bx / h * p.area * MomFull[index_of(bx - 1, by)]
        if by > 0:
            Gy[b] -= by / h * p.area * MomFull[index_of(bx, by - 1)]

    nv = p.n_vertices
    nodes = np.concatenate([[-1.0], layout.edge_nodes, [1.0]])
    tg, wg = gauss(k)
    L = lagrange_matrix(nodes, tg)
    B1 = ScaledMonomialBasis(B.center, B.h, k - 1)
    normals = p.outward_normals()
    lengths = p.edge_lengths()
    v = p.vertices
    for e in range(nv):
        a, c = v[e], v[(e + 1) % nv]
        xg = 0.5 * (a + c)[None, :] + 0.5 * tg[:, None] * (c - a)[None, :]
        M = B1.eval(xg)
        contrib = (M * (0.5 * lengths[e] * wg)[:, None]).T @ L
        dofs = [e] + [nv + e * (k - 1) + j for j in range(k - 1)] + [(e + 1) % nv]
        Gx[:, dofs] += normals[e, 0] * contrib
        Gy[:, dofs] += normals[e, 1] * contrib

    H1 = H[:n1, :n1]
    return solve_mass(H1, Gx), solve_mass(H1, Gy)


@dataclass(frozen=True, eq=False)
class ElementOperators:
    polygon: Polygon
    layout: DofLayout
    H: np.ndarray
    DS: np.ndarray
    PiS: np.ndarray
    MomFull: np.ndarray
    Pi0k: np.ndarray
    Pi0km1: np.ndarray
    Pi0grad: tuple
    min_sv: float

    @property
    def k(self) -> int:
        return self.layout.k

    @property
    def basis(self) -> ScaledMonomialBasis:
        return ScaledMonomialBasis.for_polygon(self.polygon, self.k)

    def dof_vector(self, coeffs) -> np.ndarray:
        """Retained dofs of the polynomial with the given P_k coefficients."""
        return self.DS @ np.asarray(coeffs, float)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "n_vertices": self.layout.n_vertices,
            "eta": self.layout.eta,
            "convex": self.layout.convex,
            "internal_degree": self.layout.k_int,
            "weighted": self.layout.weighted,
            "S": self.layout.S,
            "N_E": self.layout.N_E,
            "min_sv": self.min_sv,
            "DS": self.DS.tolist(),
            "PiS": self.PiS.tolist(),
            "Pi0k": self.Pi0k.tolist(),
        }


def element_operators(p: Polygon, k: int, strat: SerendipityStrategy,
                      layout: Optional[DofLayout] = None) -> ElementOperators:
    """Build every per-element matrix for ``p``."""
    if layout is None:
        layout = build_dof_layout(p, k, strat)
    B = ScaledMonomialBasis.for_polygon(p, k)
    H = mass_matrix_H(B, p)
    DS = build_D(p, k, layout, H)
    ok, min_sv = check_property_S(DS)
    if not ok:
        raise PropertySViolation(
            f"property S fails (min_sv={min_sv:.3e}, k={k}, internal degree {layout.k_int})",
            min_sv=min_sv)
    PiS = build_PiS(DS)
    MomFull, Pi0k = extend_and_project(p, k, layout, DS, PiS, H)
    n1 = poly_dim(k - 1)
    Pi0km1 = solve_mass(H[:n1, :n1], p.area * MomFull[:n1])
    grad = build_Pi0grad(p, k, layout, MomFull, H)
    return ElementOperators(p, layout, H, DS, PiS, MomFull, Pi0k, Pi0km1, grad, min_sv)
