"""Polygonal meshes of the unit square: generators, JSON I/O and validation."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .geometry import InvalidGeometry, Polygon, chebyshev_radius, signed_area

log = logging.getLogger(__name__)


class MeshGenerationError(RuntimeError):
    pass


@dataclass(eq=False)
class Mesh:
    """Vertices plus counterclockwise cell loops of vertex indices."""

    vertices: np.ndarray
    cells: list

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.cells = [[int(i) for i in c] for c in self.cells]

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def polygon(self, i: int) -> Polygon:
        return Polygon(self.vertices[self.cells[i]], check_simple=False)

    def polygons(self):
        return [self.polygon(i) for i in range(self.n_cells)]

    @cached_property
    def edges(self) -> dict:
        """Map from sorted vertex pair to its index, numbered by first appearance."""
        edges = {}
        for c in self.cells:
            for a, b in zip(c, c[1:] + c[:1]):
                edges.setdefault((min(a, b), max(a, b)), len(edges))
        return edges

    @cached_property
    def edge_cells(self) -> dict:
        out = {}
        for ci, c in enumerate(self.cells):
            for a, b in zip(c, c[1:] + c[:1]):
                out.setdefault((min(a, b), max(a, b)), []).append(ci)
        return out

    @cached_property
    def boundary_edges(self) -> set:
        return {e for e, cs in self.edge_cells.items() if len(cs) == 1}

    @cached_property
    def boundary_vertices(self) -> set:
        return {v for e in self.boundary_edges for v in e}

    def max_diameter(self) -> float:
        return max(p.diameter for p in self.polygons())

    def to_dict(self) -> dict:
        return {"vertices": self.vertices.tolist(), "cells": [list(c) for c in self.cells]}

    @classmethod
    def from_dict(cls, data: dict) -> "Mesh":
        """Build a mesh from the JSON layout; clockwise loops are reversed."""
        try:
            vertices = np.asarray(data["vertices"], dtype=float)
            cells = [list(map(int, c)) for c in data["cells"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidGeometry(f"malformed mesh data: {exc}") from exc
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise InvalidGeometry("vertices must be a list of [x, y] pairs")
        for c in cells:
            if len(c) < 3 or min(c) < 0 or max(c) >= len(vertices):
                raise InvalidGeometry(f"cell {c} has invalid vertex indices")
        cells = [c if signed_area(vertices[c]) > 0 else c[::-1] for c in cells]
        mesh = cls(vertices, cells)
        report = validate_mesh(mesh)
        if not report.ok:
            raise InvalidGeometry(f"invalid mesh: {report.summary()}")
        return mesh

    def permuted(self, order) -> "Mesh":
        return Mesh(self.vertices.copy(), [list(self.cells[i]) for i in order])


def write_mesh(mesh: Mesh, path) -> None:
    Path(path).write_text(json.dumps(mesh.to_dict()), encoding="utf-8")


def read_mesh(path) -> Mesh:
    return Mesh.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def gen_square_grid(n: int) -> Mesh:
    """``n x n`` axis-aligned squares on the unit square."""
    return gen_trapezoid_grid(n, 0.0)


def gen_trapezoid_grid(n: int, sigma: float = 0.2) -> Mesh:
    """``n x n`` trapezoids with vertical parallel sides.

    Vertex ``(i, j)`` sits at ``(i/n, j/n + (-1)^(i+j) sigma/n)``; the
    bottom and top rows are not moved.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 <= sigma < 0.5:
        raise ValueError("sigma must lie in [0, 0.5)")
    idx = lambda i, j: j * (n + 1) + i
    verts = np.zeros(((n + 1) ** 2, 2))
    for j in range(n + 1):
        for i in range(n + 1):
            shift = (-1) ** (i + j) * sigma / n if 0 < j < n else 0.0
            verts[idx(i, j)] = (i / n, j / n + shift)
    cells = [[idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]
             for j in range(n) for i in range(n)]
    return Mesh(verts, cells)


_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def _clip(poly: np.ndarray, normal: np.ndarray, offset: float) -> np.ndarray:
    """Keep the part of a convex polygon with ``normal . x <= offset``."""
    d = poly @ normal - offset
    inside = d <= 0
    if inside.all():
        return poly
    if not inside.any():
        return poly[:0]
    out = []
    n = len(poly)
    for i in range(n):
        j = (i + 1) % n
        if inside[i]:
            out.append(poly[i])
        if inside[i] != inside[j]:
            t = d[i] / (d[i] - d[j])
            out.append(poly[i] + t * (poly[j] - poly[i]))
    out = np.array(out)
    keep = np.linalg.norm(out - np.roll(out, 1, axis=0), axis=1) > 1e-13
    return out[keep]


def voronoi_cells(seeds: np.ndarray) -> list:
    """Voronoi cells of ``seeds`` clipped to the unit square.

    Each cell is the square cut by the bisector half-planes of the other
    seeds, visited nearest first; the loop stops once the next seed is
    farther than twice the current cell radius.
    """
    tree = cKDTree(seeds)
    n = len(seeds)
    cells = []
    for i, s in enumerate(seeds):
        poly = _SQUARE.copy()
        kq = min(n, 16)
        done = False
        while not done:
            dist, nbr = tree.query(s, k=kq)
            dist, nbr = np.atleast_1d(dist), np.atleast_1d(nbr)
            for d, j in zip(dist, nbr):
                if j == i:
                    continue
                radius = np.sqrt(((poly - s) ** 2).sum(1).max()) if len(poly) else 0.0
                if d > 2.0 * radius:
                    done = True
                    break
                normal = seeds[j] - s
                poly = _clip(poly, normal, normal @ (0.5 * (seeds[j] + s)))
            else:
                if kq >= n:
                    done = True
                kq = min(n, 2 * kq)
        cells.append(poly)
    return cells


def _centroid(c: np.ndarray) -> np.ndarray:
    x, y = c[:, 0], c[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    return np.array([np.dot(x + xn, cr), np.dot(y + yn, cr)]) / (3.0 * cr.sum())


def _lloyd(seeds: np.ndarray, n_iter: int) -> np.ndarray:
    for _ in range(n_iter):
        cells = voronoi_cells(seeds)
        new = np.empty_like(seeds)
        for i, c in enumerate(cells):
            if len(c) < 3 or signed_area(c) <= 1e-14:
                raise MeshGenerationError(f"Voronoi cell {i} collapsed during Lloyd iterations")
            new[i] = _centroid(c)
        seeds = new
    return seeds


def _mesh_from_cells(cells: list, tol: float = 1e-9) -> Mesh:
    pts = np.vstack(cells)
    pts = np.where(np.abs(pts) < tol, 0.0, pts)
    pts = np.where(np.abs(pts - 1.0) < tol, 1.0, pts)
    tree = cKDTree(pts)
    parent = np.arange(len(pts))
    for a, b in sorted(tree.query_pairs(tol)):
        ra, rb = a, b
        while parent[ra] != ra:
            ra = parent[ra]
        while parent[rb] != rb:
            rb = parent[rb]
        parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([_root(parent, i) for i in range(len(pts))])
    uniq, inverse = np.unique(roots, return_inverse=True)
    vertices = pts[uniq]
    out, start = [], 0
    for c in cells:
        loop = list(inverse[start:start + len(c)])
        start += len(c)
        loop = [v for i, v in enumerate(loop) if v != loop[i - 1]]
        out.append(loop)
    return Mesh(vertices, out)


def _root(parent, i):
    while parent[i] != i:
        i = parent[i]
    return i


def _boundary_sides(pt, tol=1e-12) -> frozenset:
    sides = set()
    for axis in (0, 1):
        if abs(pt[axis]) <= tol:
            sides.add((axis, 0))
        if abs(pt[axis] - 1.0) <= tol:
            sides.add((axis, 1))
    return frozenset(sides)


def _cell_ok(pts: np.ndarray) -> bool:
    if len(pts) < 3 or signed_area(pts) <= 0:
        return False
    prev = pts - np.roll(pts, 1, axis=0)
    nxt = np.roll(pts, -1, axis=0) - pts
    turn = prev[:, 0] * nxt[:, 1] - prev[:, 1] * nxt[:, 0]
    return bool(np.all(turn > 0))


def _merge_targets(pa, pb) -> list:
    """Admissible positions for the merged vertex, preferred first."""
    sa, sb = _boundary_sides(pa), _boundary_sides(pb)
    if len(sa) == 2:
        return [pa]
    if len(sb) == 2:
        return [pb]
    if sa and not sb:
        return [pa]
    if sb and not sa:
        return [pb]
    if sa != sb:
        return []
    return [0.5 * (pa + pb), pa, pb]


def _try_merge(cells, verts, affected, a, b, target):
    trial = {}
    for ci in affected:
        loop = [a if v == b else v for v in cells[ci]]
        loop = [v for i, v in enumerate(loop) if v != loop[i - 1]]
        pts = verts[loop].copy()
        pts[[i for i, v in enumerate(loop) if v == a]] = target
        if not _cell_ok(pts):
            return None
        trial[ci] = loop
    return trial


def collapse_short_edges(mesh: Mesh, ratio: float) -> Mesh:
    """Merge the endpoints of edges shorter than ``ratio`` times the
    smaller diameter of the adjacent cells.

    Boundary vertices stay on the boundary and corners do not move. A
    collapse is skipped when it would leave an adjacent cell non-convex
    or with fewer than three vertices.
    """
    if ratio <= 0:
        return mesh
    verts = mesh.vertices.copy()
    cells = [list(c) for c in mesh.cells]
    while True:
        vertex_cells = {}
        for ci, c in enumerate(cells):
            for v in c:
                vertex_cells.setdefault(v, set()).add(ci)
        diam = [Polygon(verts[c], check_simple=False).diameter for c in cells]
        pairs = {(min(a, b), max(a, b)) for c in cells for a, b in zip(c, c[1:] + c[:1])}
        candidates = []
        for a, b in sorted(pairs):
            length = np.linalg.norm(verts[a] - verts[b])
            hmin = min(diam[j] for j in vertex_cells[a] & vertex_cells[b])
            if length < ratio * hmin:
                candidates.append((length, a, b))
        touched, changed = set(), False
        for _, a, b in sorted(candidates):
            if a in touched or b in touched:
                continue
            targets = _merge_targets(verts[a], verts[b])
            affected = vertex_cells[a] | vertex_cells[b]
            for target in targets:
                trial = _try_merge(cells, verts, affected, a, b, target)
                if trial is not None:
                    verts[a] = target
                    for ci, loop in trial.items():
                        cells[ci] = loop
                    touched |= {a, b}
                    changed = True
                    break
        if not changed:
            break
    used = sorted({v for c in cells for v in c})
    renum = {v: i for i, v in enumerate(used)}
    return Mesh(verts[used], [[renum[v] for v in c] for c in cells])


def gen_voronoi_lloyd(n_cells: int, n_iter: int = 50, seed: int = 0,
                      min_edge_ratio: float = 0.1) -> Mesh:
    """Lloyd-regularized Voronoi mesh of the unit square.

    Seeds are drawn uniformly from ``numpy.random.default_rng(seed)``. If a
    cell collapses or the result is not conforming the seeds are redrawn
    from a perturbed stream, up to 10 attempts. Edges shorter than
    ``min_edge_ratio`` times the local cell diameter are then collapsed
    (see :func:`collapse_short_edges`); pass 0 to keep the raw diagram.
    """
    if n_cells < 4:
        raise ValueError("n_cells must be >= 4")
    for attempt in range(10):
        rng = np.random.default_rng([seed, attempt] if attempt else seed)
        seeds = rng.random((n_cells, 2))
        try:
            seeds = _lloyd(seeds, n_iter)
            mesh = collapse_short_edges(_mesh_from_cells(voronoi_cells(seeds)), min_edge_ratio)
        except MeshGenerationError as exc:
            log.warning("attempt %d failed: %s", attempt, exc)
            continue
        report = validate_mesh(mesh)
        if report.ok and mesh.n_cells == n_cells:
            return mesh
        log.warning("attempt %d produced an invalid mesh: %s", attempt, report.summary())
    raise MeshGenerationError("Voronoi generation failed after 10 attempts")


@dataclass
class MeshReport:
    orientation: list = field(default_factory=list)
    invalid_cells: list = field(default_factory=list)
    dangling_edges: list = field(default_factory=list)
    nonconforming: list = field(default_factory=list)
    unused_vertices: list = field(default_factory=list)
    short_edges: list = field(default_factory=list)
    not_star_shaped: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not any(getattr(self, f) for f in self.__dataclass_fields__)

    def summary(self) -> str:
        parts = [f"{name}={len(v)}" for name, v in vars(self).items() if v]
        return ", ".join(parts) if parts else "clean"


def validate_mesh(m: Mesh, rho0: float = 0.0) -> MeshReport:
    """Collect topological and (for ``rho0 > 0``) shape-regularity problems.

    Orientation: cells with non-positive signed area. Dangling edges:
    edges used more than twice, or twice with the same orientation, and
    boundary edges whose endpoints do not close into loops.
    Non-conforming: vertices lying inside another cell's edge.
    """
    rep = MeshReport()
    v = m.vertices
    used = np.zeros(len(v), bool)
    for ci, c in enumerate(m.cells):
        used[c] = True
        if len(set(c)) != len(c) or signed_area(v[c]) <= 0:
            rep.orientation.append(ci)
    rep.unused_vertices = [int(i) for i in np.flatnonzero(~used)]

    directed = {}
    for ci, c in enumerate(m.cells):
        for a, b in zip(c, c[1:] + c[:1]):
            directed.setdefault((a, b), []).append(ci)
    for e, cs in m.edge_cells.items():
        a, b = e
        if len(cs) > 2 or len(directed.get((a, b), [])) > 1 or len(directed.get((b, a), [])) > 1:
            rep.dangling_edges.append(e)
    degree = {}
    for a, b in m.boundary_edges:
        degree[a] = degree.get(a, 0) + 1
        degree[b] = degree.get(b, 0) + 1
    rep.dangling_edges += sorted(e for e in m.boundary_edges if degree[e[0]] != 2 or degree[e[1]] != 2)

    if m.boundary_edges:
        tree = cKDTree(v)
        for a, b in sorted(m.boundary_edges):
            pa, pb = v[a], v[b]
            length = np.linalg.norm(pb - pa)
            mid = 0.5 * (pa + pb)
            for o in tree.query_ball_point(mid, 0.5 * length + 1e-12):
                if o in (a, b):
                    continue
                t = np.dot(v[o] - pa, pb - pa) / length ** 2
                dist = abs((pb - pa)[0] * (v[o] - pa)[1] - (pb - pa)[1] * (v[o] - pa)[0]) / length
                if 1e-9 < t < 1 - 1e-9 and dist < 1e-9 * max(length, 1.0):
                    rep.nonconforming.append((a, b, int(o)))

    for ci, c in enumerate(m.cells):
        if ci in rep.orientation:
            continue
        try:
            p = Polygon(v[c])
        except InvalidGeometry:
            rep.invalid_cells.append(ci)
            continue
        if rho0 > 0:
            if p.edge_lengths().min() < rho0 * p.diameter:
                rep.short_edges.append(ci)
            if chebyshev_radius(p) < rho0 * p.diameter:
                rep.not_star_shaped.append(ci)
    return rep
