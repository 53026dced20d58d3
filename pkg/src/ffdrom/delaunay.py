"""Incremental Bowyer-Watson Delaunay triangulation in the plane.

The convex hull is closed by "ghost" triangles that share a hull edge with a
vertex at infinity, so no bounding super-triangle is needed and the result
always covers the hull exactly.  A ghost on hull edge ``a -> b`` conflicts
with a new point lying strictly outside that edge (or on the open edge).

Predicates are plain float64 with relative epsilons; this is adequate for the
small, well-separated parameter sets used here and is not a robust-geometry
implementation.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ExtrapolationError

GHOST = -1


def orient(a, b, c) -> float:
    """Twice the signed area of triangle ``abc`` (positive when counter-clockwise)."""
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def circumcircle(a, b, c) -> tuple[np.ndarray, float]:
    """Centre and squared radius of the circle through three points."""
    ax, ay = b[0] - a[0], b[1] - a[1]
    bx, by = c[0] - a[0], c[1] - a[1]
    d = 2.0 * (ax * by - ay * bx)
    a2, b2 = ax * ax + ay * ay, bx * bx + by * by
    ux = (by * a2 - ay * b2) / d
    uy = (ax * b2 - bx * a2) / d
    return np.array([a[0] + ux, a[1] + uy]), ux * ux + uy * uy


@dataclass(frozen=True)
class Triangulation2D:
    """Delaunay triangles (counter-clockwise) with per-edge neighbours.

    ``adjacency[t, k]`` is the triangle across the edge opposite vertex ``k``
    of triangle ``t``, or ``-1`` on the hull.
    """

    points: np.ndarray
    simplices: np.ndarray
    adjacency: np.ndarray

    @property
    def n_simplices(self) -> int:
        return self.simplices.shape[0]

    def areas(self) -> np.ndarray:
        p = self.points[self.simplices]
        return 0.5 * np.array([orient(*tri) for tri in p])

    def barycentric(self, t: int, mu) -> np.ndarray:
        a, b, c = self.points[self.simplices[t]]
        mu = np.asarray(mu, dtype=float)
        det = orient(a, b, c)
        return np.array([orient(mu, b, c), orient(a, mu, c), orient(a, b, mu)]) / det

    def to_dict(self) -> dict:
        return {"points": self.points.tolist(), "simplices": self.simplices.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> Triangulation2D:
        pts = np.asarray(data["points"], dtype=float)
        simp = np.asarray(data["simplices"], dtype=np.int64).reshape(-1, 3)
        return cls(pts, simp, _adjacency(simp))


def _adjacency(simplices: np.ndarray) -> np.ndarray:
    edge_owner: dict[tuple[int, int], tuple[int, int]] = {}
    adj = np.full(simplices.shape, -1, dtype=np.int64)
    for t, tri in enumerate(simplices):
        for k in range(3):
            u, v = int(tri[(k + 1) % 3]), int(tri[(k + 2) % 3])
            key = (min(u, v), max(u, v))
            if key in edge_owner:
                t2, k2 = edge_owner[key]
                adj[t, k] = t2
                adj[t2, k2] = t
            else:
                edge_owner[key] = (t, k)
    return adj


class _Builder:
    def __init__(self, pts: np.ndarray):
        self.pts = pts
        span = pts.max(axis=0) - pts.min(axis=0)
        diam2 = float(span @ span)
        self.eps_circ = 1e-12 * diam2
        self.eps_orient = 1e-12 * diam2
        self.tris: dict[int, tuple[int, int, int]] = {}
        self.edges: dict[tuple[int, int], int] = {}  # directed edge -> triangle on its left
        self.next_id = 0

    def add(self, a: int, b: int, c: int) -> None:
        tid = self.next_id
        self.next_id += 1
        self.tris[tid] = (a, b, c)
        for u, v in ((a, b), (b, c), (c, a)):
            self.edges[(u, v)] = tid

    def remove(self, tid: int) -> tuple[int, int, int]:
        a, b, c = self.tris.pop(tid)
        for u, v in ((a, b), (b, c), (c, a)):
            if self.edges.get((u, v)) == tid:
                del self.edges[(u, v)]
        return a, b, c

    def conflicts(self, tid: int, p: np.ndarray) -> bool:
        a, b, c = self.tris[tid]
        if GHOST in (a, b, c):
            # rotate so the ghost is last: finite hull edge u -> v with infinity on its left
            while c != GHOST:
                a, b, c = b, c, a
            u, v = self.pts[a], self.pts[b]
            o = orient(u, v, p)
            if o > self.eps_orient:
                return True
            if abs(o) <= self.eps_orient:
                d = v - u
                s = float((p - u) @ d) / float(d @ d)
                return 0.0 < s < 1.0
            return False
        centre, r2 = circumcircle(self.pts[a], self.pts[b], self.pts[c])
        diff = p - centre
        return float(diff @ diff) < r2 - self.eps_circ

    def contains(self, tid: int, p: np.ndarray) -> bool:
        a, b, c = self.tris[tid]
        if GHOST in (a, b, c):
            return self.conflicts(tid, p)
        A, B, C = self.pts[a], self.pts[b], self.pts[c]
        e = -self.eps_orient
        return orient(A, B, p) >= e and orient(B, C, p) >= e and orient(C, A, p) >= e

    def insert(self, idx: int) -> None:
        p = self.pts[idx]
        seed = next((t for t in sorted(self.tris) if self.contains(t, p) and self.conflicts(t, p)), None)
        if seed is None:
            seed = next((t for t in sorted(self.tris) if self.conflicts(t, p)), None)
        if seed is None:
            raise DegenerateInputError(f"point {idx} {p.tolist()} could not be inserted (duplicate?)")
        cavity = {seed}
        queue = deque([seed])
        while queue:
            t = queue.popleft()
            a, b, c = self.tris[t]
            for u, v in ((a, b), (b, c), (c, a)):
                nb = self.edges.get((v, u))
                if nb is not None and nb not in cavity and self.conflicts(nb, p):
                    cavity.add(nb)
                    queue.append(nb)
        boundary = []
        for t in sorted(cavity):
            a, b, c = self.tris[t]
            for u, v in ((a, b), (b, c), (c, a)):
                nb = self.edges.get((v, u))
                if nb is None or nb not in cavity:
                    boundary.append((u, v))
        for t in sorted(cavity):
            self.remove(t)
        for u, v in boundary:
            if u == GHOST and v == GHOST:
                continue
            self.add(u, v, idx)


def delaunay(points) -> Triangulation2D:
    """Delaunay triangulation, deterministic for a given point order."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DegenerateInputError("delaunay expects an (n, 2) array of points")
    n = pts.shape[0]
    if n < 3:
        raise DegenerateInputError(f"need at least 3 points, got {n}")
    if not np.all(np.isfinite(pts)):
        raise DegenerateInputError("points must be finite")
    builder = _Builder(pts)
    if builder.eps_circ == 0.0:
        raise DegenerateInputError("all points coincide")

    first = None
    for k in range(2, n):
        o = orient(pts[0], pts[1], pts[k])
        if abs(o) > builder.eps_orient and np.any(pts[1] != pts[0]):
            first = k
            break
    if first is None:
        # pts[0] and pts[1] may coincide; search any non-collinear triple
        for i in range(n):
            for j in range(i + 1, n):
                for k in range(j + 1, n):
                    if abs(orient(pts[i], pts[j], pts[k])) > builder.eps_orient:
                        first = (i, j, k)
                        break
                if first is not None:
                    break
            if first is not None:
                break
        if first is None:
            raise DegenerateInputError("all points are collinear")
        i, j, k = first
    else:
        i, j, k = 0, 1, first
    if orient(pts[i], pts[j], pts[k]) < 0:
        j, k = k, j
    builder.add(i, j, k)
    builder.add(j, i, GHOST)
    builder.add(k, j, GHOST)
    builder.add(i, k, GHOST)

    dup_tol = 1e-12 * builder.eps_circ
    used = {i, j, k}
    for m in range(n):
        if m in used:
            continue
        d2 = np.sum((pts[list(used)] - pts[m]) ** 2, axis=1)
        if np.min(d2) <= dup_tol:
            raise DegenerateInputError(f"duplicate point {pts[m].tolist()}")
        builder.insert(m)
        used.add(m)

    simplices = np.array(
        [tri for _, tri in sorted(builder.tris.items()) if GHOST not in tri], dtype=np.int64
    ).reshape(-1, 3)
    return Triangulation2D(pts.copy(), simplices, _adjacency(simplices))


def locate(tri: Triangulation2D, mu, seed: int = 0, eps: float = 1e-12) -> tuple[int, np.ndarray]:
    """Containing triangle and barycentric coordinates by a visibility walk.

    Raises :class:`ExtrapolationError` when ``mu`` is outside the hull.
    """
    mu = np.asarray(mu, dtype=float)
    t = int(seed) if 0 <= seed < tri.n_simplices else 0
    visited = set()
    for _ in range(4 * tri.n_simplices + 4):
        lam = tri.barycentric(t, mu)
        k = int(np.argmin(lam))
        if lam[k] >= -eps:
            return t, _clean(lam)
        visited.add(t)
        nxt = int(tri.adjacency[t, k])
        if nxt < 0:
            break
        if nxt in visited:
            return _scan(tri, mu, eps)
        t = nxt
    return _scan(tri, mu, eps)


def _scan(tri: Triangulation2D, mu: np.ndarray, eps: float) -> tuple[int, np.ndarray]:
    for t in range(tri.n_simplices):
        lam = tri.barycentric(t, mu)
        if lam.min() >= -eps:
            return t, _clean(lam)
    raise ExtrapolationError(f"parameter {mu.tolist()} lies outside the triangulated hull")


def _clean(lam: np.ndarray) -> np.ndarray:
    lam = np.maximum(lam, 0.0)
    return lam / lam.sum()

