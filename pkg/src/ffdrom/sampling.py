"""Greedy enrichment of the snapshot database.

Each iteration scores every snapshot by a leave-one-out reconstruction error,
spreads the scores over the Delaunay triangles of the parameter points
(``e_t = area * sum of vertex errors``), and adds a full-order solve at the
error-weighted average of the worst triangle's vertices.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .delaunay import Triangulation2D, delaunay
from .errors import ConfigError, DegenerateInputError, FFDROMError, InsufficientDataError, NoRefinement, ShapeError
from .ffd import ParameterBinding
from .pod import SnapshotMatrix, build_basis

logger = logging.getLogger(__name__)

EPS_DUP = 1e-9
NORM_KIND = "relative-L2"


@dataclass(frozen=True)
class SnapshotDatabase:
    """Snapshots ``theta`` with one provenance record per column."""

    theta: SnapshotMatrix
    provenance: tuple = ()
    eps_dup: float = EPS_DUP

    def __post_init__(self) -> None:
        prov = tuple(self.provenance) if self.provenance else tuple({} for _ in range(self.theta.shape[1]))
        if len(prov) != self.theta.shape[1]:
            raise ShapeError(f"{len(prov)} provenance records for {self.theta.shape[1]} snapshots")
        object.__setattr__(self, "provenance", prov)
        xi = self.xi
        for k in range(1, xi.shape[0]):
            d = np.linalg.norm(xi[:k] - xi[k], axis=1)
            if np.min(d) <= self.eps_dup:
                raise DegenerateInputError(f"duplicate parameter point {xi[k].tolist()}")

    @classmethod
    def from_columns(cls, points, columns, provenance=()) -> SnapshotDatabase:
        cols = np.column_stack([np.asarray(c, dtype=float) for c in columns])
        return cls(SnapshotMatrix(cols, np.asarray(points, dtype=float)), tuple(provenance))

    @property
    def xi(self) -> np.ndarray:
        return self.theta.parameter_points

    @property
    def size(self) -> int:
        return self.theta.shape[1]

    def contains(self, mu) -> bool:
        return bool(np.any(np.linalg.norm(self.xi - np.asarray(mu, dtype=float), axis=1) <= self.eps_dup))

    def add(self, mu, values, meta: dict | None = None) -> SnapshotDatabase:
        cols = np.column_stack([self.theta.columns, np.asarray(values, dtype=float)])
        pts = np.vstack([self.xi, np.asarray(mu, dtype=float)])
        return SnapshotDatabase(SnapshotMatrix(cols, pts), self.provenance + (dict(meta or {}),), self.eps_dup)

    def prefix(self, n: int) -> SnapshotDatabase:
        if not 1 <= n <= self.size:
            raise ShapeError(f"prefix length {n} outside 1..{self.size}")
        th = SnapshotMatrix(self.theta.columns[:, :n], self.xi[:n])
        return SnapshotDatabase(th, self.provenance[:n], self.eps_dup)


@dataclass(frozen=True)
class ErrorIndicator:
    e_s: np.ndarray
    norm_kind: str = NORM_KIND
    absolute: np.ndarray | None = None  # True where a zero-norm snapshot forced the absolute norm

    def __post_init__(self) -> None:
        e = np.array(self.e_s, dtype=float).reshape(-1)
        if np.any(e < 0) or not np.all(np.isfinite(e)):
            raise ValueError("error indicator entries must be finite and non-negative")
        flags = np.zeros(e.size, dtype=bool) if self.absolute is None else np.asarray(self.absolute, dtype=bool)
        object.__setattr__(self, "e_s", e)
        object.__setattr__(self, "absolute", flags)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    max_e: float
    mean_e: float
    mu_new: np.ndarray  # NaN when the loop stopped on tolerance
    simplex: np.ndarray | None = None  # vertex coordinates of the refined triangle
    centroid_fallback: bool = False

    def row(self) -> list:
        return [self.iteration, repr(float(self.max_e)), repr(float(self.mean_e))] + [
            repr(float(v)) for v in self.mu_new
        ]

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "max_e": float(self.max_e),
            "mean_e": float(self.mean_e),
            "mu_new": [float(v) for v in self.mu_new],
            "simplex": None if self.simplex is None else np.asarray(self.simplex).tolist(),
            "centroid_fallback": self.centroid_fallback,
        }

    @classmethod
    def from_dict(cls, data: dict) -> IterationRecord:
        simplex = None if data.get("simplex") is None else np.asarray(data["simplex"], dtype=float)
        return cls(
            int(data["iteration"]),
            float(data["max_e"]),
            float(data["mean_e"]),
            np.asarray(data["mu_new"], dtype=float),
            simplex,
            bool(data.get("centroid_fallback", False)),
        )


class Proposal(NamedTuple):
    mu: np.ndarray
    simplex: int
    centroid_fallback: bool


def loo_errors(db: SnapshotDatabase, cells=None) -> ErrorIndicator:
    """Leave-one-out relative L2 errors, optionally on a subset of cells.

    Snapshot ``k`` is projected on the POD basis of the other columns (only
    modes with non-zero singular value) and compared with itself.
    """
    if db.size < 2:
        raise InsufficientDataError(f"leave-one-out needs at least 2 snapshots, got {db.size}")
    cols = db.theta.columns
    if cells is not None:
        cols = cols[np.asarray(cells, dtype=np.int64)]
    e = np.empty(db.size)
    flags = np.zeros(db.size, dtype=bool)
    for k in range(db.size):
        others = np.delete(cols, k, axis=1)
        u = cols[:, k]
        if not np.any(others):
            err = u
        else:
            basis = build_basis(others)
            modes = basis.modes[:, basis.singular_values > 0]
            err = u - modes @ (modes.T @ u)
        norm = np.linalg.norm(u)
        if norm > 0:
            e[k] = np.linalg.norm(err) / norm
        else:
            e[k] = np.linalg.norm(err)
            flags[k] = True
    return ErrorIndicator(e, NORM_KIND, flags)


def simplex_errors(tri: Triangulation2D, ind: ErrorIndicator) -> np.ndarray:
    """``e_t = area * (sum of the three vertex errors)`` per triangle."""
    if ind.e_s.size != tri.points.shape[0]:
        raise ShapeError(f"{ind.e_s.size} indicator entries for {tri.points.shape[0]} triangulation points")
    areas = np.maximum(tri.areas(), 0.0)
    return areas * ind.e_s[tri.simplices].sum(axis=1)


def next_point(tri: Triangulation2D, ind: ErrorIndicator, eps_dup: float = EPS_DUP) -> Proposal:
    """Error-weighted average of the vertices of the worst triangle.

    Ties in ``e_t`` go to the lowest triangle id.  A proposal that coincides
    with an existing point is replaced by the triangle centroid.
    """
    if ind.e_s.size == 0 or np.max(ind.e_s) <= 0.0:
        raise NoRefinement("all leave-one-out errors are zero; nothing to refine")
    e_t = simplex_errors(tri, ind)
    t = int(np.argmax(e_t))
    if e_t[t] <= 0.0:
        raise NoRefinement("no triangle carries a positive error")
    verts = tri.points[tri.simplices[t]]
    w = ind.e_s[tri.simplices[t]]
    mu = (w @ verts) / w.sum()
    fallback = bool(np.min(np.linalg.norm(tri.points - mu, axis=1)) <= eps_dup)
    if fallback:
        mu = verts.mean(axis=0)
    return Proposal(mu, t, fallback)


def grid_points(binding: ParameterBinding, n: int) -> np.ndarray:
    """``n`` x ``n`` uniform grid over the parameter box, first parameter fastest."""
    if binding.parameter_dim != 2:
        raise ConfigError("grid initialisation supports exactly 2 parameters")
    if n < 2:
        raise ConfigError("the initial grid needs at least 2 points per axis to include the corners")
    lo, hi = binding.lower(), binding.upper()
    a = np.linspace(lo[0], hi[0], n)
    b = np.linspace(lo[1], hi[1], n)
    A, B = np.meshgrid(a, b)
    return np.stack([A.ravel(), B.ravel()], axis=1)


def _check_corners(binding: ParameterBinding, init: np.ndarray) -> None:
    for c in binding.corners():
        if not np.any(np.linalg.norm(init - c, axis=1) <= EPS_DUP):
            raise ConfigError(f"initial set misses the parameter-domain corner {c.tolist()}")


SolveFn = Callable[[np.ndarray], tuple]


def greedy_sample(
    fom: SolveFn,
    binding: ParameterBinding,
    init,
    tol: float = 0.0,
    max_new: int = 4,
    cells=None,
    db: SnapshotDatabase | None = None,
    on_snapshot: Callable[[SnapshotDatabase], None] | None = None,
) -> tuple[SnapshotDatabase, list[IterationRecord]]:
    """Initial solves, then up to ``max_new`` greedy additions.

    ``fom(mu)`` returns ``(values, meta)``.  ``init`` is a grid size or an
    explicit point array.  Records cover iterations ``0..k`` where ``k`` is
    the number of added points; the last record holds the proposal that was
    not solved (or NaN when the loop stopped on ``tol``).  ``db`` resumes a
    partial run; ``on_snapshot`` is called after every new column.
    """
    pts = grid_points(binding, int(init)) if np.isscalar(init) else np.asarray(init, dtype=float)
    _check_corners(binding, pts)
    for mu in pts:
        binding.check(mu)

    def run(mu):
        try:
            return fom(mu)
        except FFDROMError as exc:
            exc.partial_database = db
            raise

    for mu in pts:
        if db is not None and db.contains(mu):
            continue
        values, meta = run(mu)
        db = SnapshotDatabase.from_columns([mu], [values], [meta]) if db is None else db.add(mu, values, meta)
        if on_snapshot:
            on_snapshot(db)

    records: list[IterationRecord] = []
    n_init = pts.shape[0]
    it = db.size - n_init
    # re-derive records for points added before a resume
    for j in range(it):
        sub = db.prefix(n_init + j)
        records.append(_record(sub, j, tol, cells)[0])
    while True:
        rec, stop = _record(db, it, tol, cells)
        records.append(rec)
        if stop or it >= max_new:
            break
        values, meta = run(rec.mu_new)
        db = db.add(rec.mu_new, values, meta)
        if on_snapshot:
            on_snapshot(db)
        it += 1
    return db, records


def _record(db: SnapshotDatabase, it: int, tol: float, cells) -> tuple[IterationRecord, bool]:
    ind = loo_errors(db, cells)
    max_e, mean_e = float(ind.e_s.max()), float(ind.e_s.mean())
    logger.info("sampling it=%d N=%d max_e=%.4e mean_e=%.4e", it, db.size, max_e, mean_e)
    if max_e <= tol:
        return IterationRecord(it, max_e, mean_e, np.full(2, np.nan)), True
    tri = delaunay(db.xi)
    try:
        prop = next_point(tri, ind, db.eps_dup)
    except NoRefinement:
        return IterationRecord(it, max_e, mean_e, np.full(2, np.nan)), True
    verts = tri.points[tri.simplices[prop.simplex]]
    return IterationRecord(it, max_e, mean_e, prop.mu, verts, prop.centroid_fallback), False
