"""Polygons, edge-line analysis and quadrature over polygons.

Coordinates are plain ``(n, 2)`` float arrays. A :class:`Polygon` is an
immutable counterclockwise vertex loop; derived quantities (area,
centroid, diameter) are computed once on construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np


class InvalidGeometry(ValueError):
    """Raised for degenerate, clockwise or self-intersecting polygons."""


class UnsupportedShape(ValueError):
    """Raised when a non-convex polygon has more than two re-entrant lines."""


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def signed_area(vertices) -> float:
    v = np.asarray(vertices, dtype=float)
    # relative to the first vertex: avoids cancellation far from the origin
    v = v - v[0]
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _segments_intersect(p1, p2, q1, q2, rtol: float = 1e-12) -> bool:
    """Proper crossing or collinear overlap of two segments.

    Orientation values below ``rtol`` times the squared length scale count
    as zero, so segments on a common line are not split by roundoff.
    """
    d1 = _cross(p2 - p1, q1 - p1)
    d2 = _cross(p2 - p1, q2 - p1)
    d3 = _cross(q2 - q1, p1 - q1)
    d4 = _cross(q2 - q1, p2 - q1)
    tol = rtol * max(np.dot(p2 - p1, p2 - p1), np.dot(q2 - q1, q2 - q1))
    d1, d2, d3, d4 = (0.0 if abs(d) <= tol else d for d in (d1, d2, d3, d4))
    if d1 == d2 == d3 == d4 == 0.0:
        t = p2 - p1
        s0, s1 = sorted((np.dot(q1 - p1, t), np.dot(q2 - p1, t)))
        return s1 > tol and s0 < np.dot(t, t) - tol
    return (d1 * d2 < 0) and (d3 * d4 < 0)


@dataclass(frozen=True, eq=False)
class Polygon:
    """Simple polygon given by a counterclockwise vertex loop.

    Parameters
    ----------
    vertices : array_like, shape (n, 2)
        Vertex coordinates, counterclockwise, without repeating the first.
    check_simple : bool
        Run the O(n^2) self-intersection test.
    """

    vertices: np.ndarray
    check_simple: bool = True
    area: float = field(init=False)
    centroid: np.ndarray = field(init=False)
    diameter: float = field(init=False)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise InvalidGeometry("a polygon needs at least 3 vertices in 2D")
        if not np.all(np.isfinite(v)):
            raise InvalidGeometry("non-finite vertex coordinates")
        if np.any(np.all(v == np.roll(v, -1, axis=0), axis=1)):
            raise InvalidGeometry("repeated consecutive vertices")
        area = signed_area(v)
        if not area > 0:
            raise InvalidGeometry(f"signed area {area:g} is not positive")
        if self.check_simple and len(v) > 3:
            n = len(v)
            for i in range(n):
                for j in range(i + 2, n):
                    if i == 0 and j == n - 1:
                        continue
                    if _segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                        raise InvalidGeometry("polygon boundary self-intersects")
        v.setflags(write=False)
        x, y = v[:, 0] - v[0, 0], v[:, 1] - v[0, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        c = x * yn - xn * y
        centroid = v[0] + np.array([np.dot(x + xn, c), np.dot(y + yn, c)]) / (6.0 * area)
        diff = v[:, None, :] - v[None, :, :]
        diameter = float(np.sqrt((diff ** 2).sum(-1)).max())
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "area", area)
        object.__setattr__(self, "centroid", centroid)
        object.__setattr__(self, "diameter", diameter)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def edges(self) -> np.ndarray:
        """Edges as an ``(n, 2, 2)`` array; edge i runs from vertex i to i+1."""
        return np.stack([self.vertices, np.roll(self.vertices, -1, axis=0)], axis=1)

    def edge_lengths(self) -> np.ndarray:
        e = self.edges()
        return np.linalg.norm(e[:, 1] - e[:, 0], axis=1)

    def outward_normals(self) -> np.ndarray:
        e = self.edges()
        t = e[:, 1] - e[:, 0]
        n = np.stack([t[:, 1], -t[:, 0]], axis=1)
        return n / np.linalg.norm(n, axis=1)[:, None]

    def reflex_vertices(self, tol: float = 1e-12) -> np.ndarray:
        """Indices of vertices with interior angle strictly above pi."""
        v = self.vertices
        prev = v - np.roll(v, 1, axis=0)
        nxt = np.roll(v, -1, axis=0) - v
        return np.flatnonzero(_cross(prev, nxt) < -tol * self.diameter ** 2)

    def is_convex(self) -> bool:
        return len(self.reflex_vertices()) == 0

    def transformed(self, scale=1.0, shift=(0.0, 0.0), angle=0.0) -> "Polygon":
        c, s = np.cos(angle), np.sin(angle)
        rot = np.array([[c, -s], [s, c]])
        return Polygon(scale * self.vertices @ rot.T + np.asarray(shift, float))


def polygon_measures(p: Polygon):
    """Return ``(area, centroid, diameter)`` of ``p``."""
    return p.area, p.centroid.copy(), p.diameter


@dataclass(frozen=True)
class LineEquation:
    """Normalized line ``a x + b y + c = 0`` with ``a^2 + b^2 = 1``."""

    a: float
    b: float
    c: float

    def __call__(self, x, y):
        return self.a * np.asarray(x) + self.b * np.asarray(y) + self.c

    def distance(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.abs(self(pts[:, 0], pts[:, 1]))

    def scaled(self, center, h: float) -> np.ndarray:
        """Linear coefficients ``[c, a, b]`` in the variables ``(x - center) / h``."""
        return np.array([(self.a * center[0] + self.b * center[1] + self.c) / h, self.a, self.b])


def edge_line(p: Polygon, i: int) -> LineEquation:
    n = p.outward_normals()[i]
    v0 = p.vertices[i]
    return LineEquation(float(n[0]), float(n[1]), float(-n @ v0))


def _same_line(p: Polygon, i: int, j: int, theta0: float) -> bool:
    e = p.edges()
    ti = e[i, 1] - e[i, 0]
    tj = e[j, 1] - e[j, 0]
    angle = np.arctan2(abs(_cross(ti, tj)), abs(np.dot(ti, tj)))
    if angle > theta0:
        return False
    tol = theta0 * p.diameter
    li, lj = edge_line(p, i), edge_line(p, j)
    return bool(lj.distance(e[i]).max() <= tol and li.distance(e[j]).max() <= tol)


def edge_line_classes(p: Polygon, theta0: float = 1e-8) -> np.ndarray:
    """Label each edge with the index of the line class it belongs to.

    Classes are numbered in order of their first edge.
    """
    if theta0 < 0:
        raise ValueError("theta0 must be non-negative")
    n = p.n_vertices
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if find(i) != find(j) and _same_line(p, i, j, theta0):
                parent[max(find(i), find(j))] = min(find(i), find(j))
    roots = [find(i) for i in range(n)]
    relabel = {}
    for r in roots:
        relabel.setdefault(r, len(relabel))
    return np.array([relabel[r] for r in roots])


def distinct_edge_lines(p: Polygon, theta0: float = 1e-8):
    """Count the distinct straight lines carrying the edges of ``p``.

    Two edge lines are merged when the smaller angle between them is at
    most ``theta0`` and every endpoint of each edge lies within
    ``theta0 * h_E`` of the other edge's line.

    Returns
    -------
    eta : int
        Number of line classes, never reported below 3.
    lines : list of LineEquation
        One line per class, oriented by the outward normal of the first
        edge of the class.
    """
    labels = edge_line_classes(p, theta0)
    lines = []
    for cls in range(labels.max() + 1):
        first = int(np.flatnonzero(labels == cls)[0])
        lines.append(edge_line(p, first))
    return max(len(lines), 3), lines


def reentrant_lines(p: Polygon, theta0: float = 1e-8) -> list:
    """Distinct lines carrying the edges incident to reflex vertices."""
    reflex = p.reflex_vertices()
    if len(reflex) == 0:
        return []
    n = p.n_vertices
    labels = edge_line_classes(p, theta0)
    edges = sorted({int(r) for r in reflex} | {int((r - 1) % n) for r in reflex})
    seen = {}
    for e in edges:
        seen.setdefault(labels[e], e)
    return [edge_line(p, e) for e in seen.values()]


def reentrant_weight(p: Polygon, theta0: float = 1e-8) -> Optional[np.ndarray]:
    """Quadratic weight built from the two re-entrant edge lines of ``p``.

    Returns ``None`` for convex polygons. Otherwise the coefficients of
    the product of the two line equations in the graded scaled-monomial
    basis ``[1, X, Y, X^2, XY, Y^2]`` with ``X = (x - x_E) / h_E``.

    Raises
    ------
    UnsupportedShape
        If the re-entrant edges lie on more than two distinct lines.
    """
    lines = reentrant_lines(p, theta0)
    if not lines:
        return None
    if len(lines) != 2:
        raise UnsupportedShape(
            f"{len(lines)} re-entrant lines; only two are supported, use the lazy strategy"
        )
    c1, a1, b1 = lines[0].scaled(p.centroid, p.diameter)
    c2, a2, b2 = lines[1].scaled(p.centroid, p.diameter)
    return np.array([c1 * c2, a1 * c2 + a2 * c1, b1 * c2 + b2 * c1,
                     a1 * a2, a1 * b2 + a2 * b1, b1 * b2])


def triangulate(p: Polygon) -> np.ndarray:
    """Split ``p`` into triangles, returned as vertex-index triples.

    Convex polygons are fanned from vertex 0; others are ear-clipped.
    """
    n = p.n_vertices
    if p.is_convex():
        return np.array([[0, i, i + 1] for i in range(1, n - 1)])
    v = p.vertices
    idx = list(range(n))
    tris = []
    eps = 1e-14 * p.diameter ** 2
    while len(idx) > 3:
        m = len(idx)
        for t in range(m):
            a, b, c = idx[(t - 1) % m], idx[t], idx[(t + 1) % m]
            if _cross(v[b] - v[a], v[c] - v[b]) <= eps:
                continue
            inside = False
            for o in idx:
                if o in (a, b, c):
                    continue
                q = v[o]
                if (_cross(v[b] - v[a], q - v[a]) >= -eps and _cross(v[c] - v[b], q - v[b]) >= -eps
                        and _cross(v[a] - v[c], q - v[c]) >= -eps):
                    inside = True
                    break
            if not inside:
                tris.append([a, b, c])
                idx.pop(t)
                break
        else:
            raise InvalidGeometry("ear clipping failed; polygon is not simple")
    tris.append(idx)
    return np.array(tris)


@lru_cache(maxsize=None)
def triangle_rule(exactness: int):
    """Collapsed Gauss rule on the reference triangle (0,0), (1,0), (0,1).

    Exact for total degree ``exactness``; weights sum to 1/2.
    """
    npts = max(1, (exactness + 3) // 2)
    t, w = np.polynomial.legendre.leggauss(npts)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    u, v = np.meshgrid(t, t, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    x = u.ravel()
    y = (v * (1.0 - u)).ravel()
    weights = (wu * wv * (1.0 - u)).ravel()
    pts = np.stack([x, y], axis=1)
    pts.setflags(write=False)
    weights.setflags(write=False)
    return pts, weights


def polygon_quadrature(p: Polygon, exactness: int):
    """Quadrature nodes and weights on ``p`` exact to total degree ``exactness``.

    Returns
    -------
    points : ndarray, shape (m, 2)
    weights : ndarray, shape (m,)
    """
    if exactness < 0:
        raise ValueError("exactness must be >= 0")
    ref_pts, ref_w = triangle_rule(int(exactness))
    tris = p.vertices[triangulate(p)]
    v0 = tris[:, 0]
    e1 = tris[:, 1] - v0
    e2 = tris[:, 2] - v0
    det = _cross(e1, e2)
    pts = (v0[:, None, :] + ref_pts[None, :, 0:1] * e1[:, None, :]
           + ref_pts[None, :, 1:2] * e2[:, None, :])
    w = det[:, None] * ref_w[None, :]
    return pts.reshape(-1, 2), w.ravel()


def monomial_integral(p: Polygon, a: int, b: int, center=(0.0, 0.0)) -> float:
    """Exact integral of ``(x-cx)^a (y-cy)^b`` over ``p`` via the divergence theorem.

    Uses ``int_E f = int_dE F n_x ds`` with ``F = (x-cx)^(a+1) (y-cy)^b / (a+1)``
    and a Gauss rule per edge exact for the edge polynomial.
    """
    t, w = np.polynomial.legendre.leggauss((a + b + 2) // 2 + 1)
    total = 0.0
    cx, cy = center
    for (x0, y0), (x1, y1) in p.edges():
        xs = 0.5 * (x0 + x1) + 0.5 * (x1 - x0) * t - cx
        ys = 0.5 * (y0 + y1) + 0.5 * (y1 - y0) * t - cy
        # n_x ds = dy
        total += 0.5 * (y1 - y0) * np.dot(w, xs ** (a + 1) * ys ** b) / (a + 1)
    return float(total)


def chebyshev_radius(p: Polygon) -> float:
    """Radius of the largest disc inside the kernel of ``p``.

    A polygon is star-shaped with respect to a ball of radius r exactly
    when this value is at least r. Returns a negative number when the
    kernel is empty.
    """
    from scipy.optimize import linprog

    normals = p.outward_normals()
    offsets = np.einsum("ij,ij->i", normals, p.vertices)
    # maximize r subject to n_i . x + r <= n_i . v_i
    a_ub = np.hstack([normals, np.ones((len(normals), 1))])
    res = linprog(c=[0.0, 0.0, -1.0], A_ub=a_ub, b_ub=offsets,
                  bounds=[(None, None), (None, None), (None, None)], method="highs")
    if res.status != 0:
        return -np.inf
    return float(res.x[2])
