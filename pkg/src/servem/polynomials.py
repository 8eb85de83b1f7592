"""Scaled monomial bases, polynomial bookkeeping and 1D quadrature.

Monomials are enumerated in graded lexicographic order::

    (0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...

so the first ``poly_dim(r)`` members always span the polynomials of
degree at most ``r``. Coefficient vectors follow the same order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import Polygon, polygon_quadrature


def poly_dim(k: int, d: int = 2) -> int:
    """Dimension of the polynomials of degree ``<= k`` in ``d`` variables."""
    if k < -1:
        raise ValueError("k must be >= -1")
    if k == -1:
        return 0
    if d == 1:
        return k + 1
    if d == 2:
        return (k + 1) * (k + 2) // 2
    raise ValueError("only d in {1, 2} is supported")


@lru_cache(maxsize=None)
def multi_indices(k: int) -> tuple:
    return tuple((deg - ay, ay) for deg in range(k + 1) for ay in range(deg + 1))


def index_of(ax: int, ay: int) -> int:
    deg = ax + ay
    return poly_dim(deg - 1) + ay


def degree_of_length(n: int) -> int:
    k = 0
    while poly_dim(k) < n:
        k += 1
    if poly_dim(k) != n:
        raise ValueError(f"{n} is not the dimension of a full polynomial space")
    return k


def poly_mul(a, b) -> np.ndarray:
    """Product of two coefficient vectors in the graded basis."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    ka, kb = degree_of_length(len(a)), degree_of_length(len(b))
    out = np.zeros(poly_dim(ka + kb))
    for i, (ax, ay) in enumerate(multi_indices(ka)):
        if a[i] == 0:
            continue
        for j, (bx, by) in enumerate(multi_indices(kb)):
            out[index_of(ax + bx, ay + by)] += a[i] * b[j]
    return out


def multiplication_matrix(weight, k_rows: int, k_cols: int) -> np.ndarray:
    """Matrix ``W`` with ``m_alpha * weight = sum_beta W[alpha, beta] m_beta``.

    Rows run over ``|alpha| <= k_rows``, columns over ``|beta| <= k_cols``;
    ``k_cols`` must be at least ``k_rows + deg(weight)``.
    """
    kw = degree_of_length(len(weight))
    if k_cols < k_rows + kw:
        raise ValueError("column degree too small for the product")
    W = np.zeros((poly_dim(k_rows), poly_dim(k_cols)))
    for i in range(poly_dim(k_rows)):
        e = np.zeros(poly_dim(k_rows))
        e[i] = 1.0
        prod = poly_mul(e, weight)
        W[i, : len(prod)] = prod
    return W


@dataclass(frozen=True, eq=False)
class ScaledMonomialBasis:
    """Monomials ``((x - center) / h)^alpha`` for ``|alpha| <= degree``."""

    center: np.ndarray
    h: float
    degree: int

    @classmethod
    def for_polygon(cls, p: Polygon, degree: int) -> "ScaledMonomialBasis":
        return cls(np.asarray(p.centroid, float), float(p.diameter), int(degree))

    @property
    def size(self) -> int:
        return poly_dim(self.degree)

    def _powers(self, pts):
        pts = np.atleast_2d(np.asarray(pts, float))
        xi = (pts[:, 0] - self.center[0]) / self.h
        eta = (pts[:, 1] - self.center[1]) / self.h
        k = max(self.degree, 0)
        px = np.ones((len(pts), k + 1))
        py = np.ones((len(pts), k + 1))
        for j in range(1, k + 1):
            px[:, j] = px[:, j - 1] * xi
            py[:, j] = py[:, j - 1] * eta
        return px, py

    def eval(self, pts) -> np.ndarray:
        """Values, shape ``(n_points, size)``."""
        px, py = self._powers(pts)
        return np.stack([px[:, ax] * py[:, ay] for ax, ay in multi_indices(self.degree)], axis=1)

    def eval_grad(self, pts):
        """Partial derivatives ``(d/dx, d/dy)``, each ``(n_points, size)``."""
        px, py = self._powers(pts)
        gx, gy = [], []
        for ax, ay in multi_indices(self.degree):
            gx.append(ax * px[:, max(ax - 1, 0)] * py[:, ay] / self.h)
            gy.append(ay * px[:, ax] * py[:, max(ay - 1, 0)] / self.h)
        return np.stack(gx, axis=1), np.stack(gy, axis=1)

    def eval_poly(self, coeffs, pts) -> np.ndarray:
        coeffs = np.asarray(coeffs, float)
        sub = ScaledMonomialBasis(self.center, self.h, degree_of_length(len(coeffs)))
        return sub.eval(pts) @ coeffs


def eval_basis(B: ScaledMonomialBasis, pts) -> np.ndarray:
    return B.eval(pts)


def eval_grad_basis(B: ScaledMonomialBasis, pts):
    return B.eval_grad(pts)


def mass_matrix_H(B: ScaledMonomialBasis, p: Polygon, weight=None, exactness=None) -> np.ndarray:
    """Moments ``H[a, b] = int_E m_a m_b (w) dE`` of the scaled monomials.

    ``weight`` is an optional coefficient vector in the same scaled basis.
    """
    wdeg = 0 if weight is None else degree_of_length(len(weight))
    q = 2 * B.degree + wdeg if exactness is None else exactness
    pts, w = polygon_quadrature(p, q)
    M = B.eval(pts)
    if weight is not None:
        w = w * B.eval_poly(weight, pts)
    H = (M * w[:, None]).T @ M
    return 0.5 * (H + H.T)


@lru_cache(maxsize=None)
def gauss(npts: int):
    """Gauss-Legendre nodes and weights on [-1, 1] (exact to ``2 npts - 1``)."""
    if npts < 1:
        raise ValueError("npts must be >= 1")
    return np.polynomial.legendre.leggauss(npts)


@lru_cache(maxsize=None)
def gauss_lobatto(npts: int):
    """Gauss-Lobatto nodes and weights on [-1, 1] (exact to ``2 npts - 3``)."""
    if npts < 2:
        raise ValueError("npts must be >= 2")
    n = npts - 1
    leg = np.polynomial.legendre.Legendre.basis(n)
    inner = np.sort(leg.deriv().roots().real) if n > 1 else np.array([])
    # symmetrize to remove root-finding noise
    inner = 0.5 * (inner - inner[::-1])
    nodes = np.concatenate([[-1.0], inner, [1.0]])
    weights = 2.0 / (n * (n + 1) * leg(nodes) ** 2)
    return nodes, weights


def lagrange_matrix(nodes, x) -> np.ndarray:
    """Values of the Lagrange basis on ``nodes`` at points ``x``, shape ``(len(x), len(nodes))``."""
    nodes = np.asarray(nodes, float)
    x = np.asarray(x, float)
    L = np.ones((len(x), len(nodes)))
    for j, xj in enumerate(nodes):
        for m, xm in enumerate(nodes):
            if m != j:
                L[:, j] *= (x - xm) / (xj - xm)
    return L
