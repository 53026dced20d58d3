"""Proper orthogonal decomposition of a snapshot matrix.

Two independent constructions are provided: a one-sided Jacobi SVD of the
snapshot matrix, and the method of snapshots (eigenproblem of the N x N Gram
matrix).  Snapshots are *not* mean-centred and the inner product is the plain
Euclidean one on cell values.

Sign convention: every mode has its largest-magnitude entry positive.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .linalg import jacobi_eigh, jacobi_svd

logger = logging.getLogger(__name__)

DROP_TOL = 1e-12


@dataclass(frozen=True)
class SnapshotMatrix:
    """Snapshots as columns, with the parameter point of each column."""

    columns: np.ndarray
    parameter_points: np.ndarray

    def __post_init__(self) -> None:
        cols = np.array(self.columns, dtype=float)
        if cols.ndim == 1:
            cols = cols[:, None]
        pts = np.array(self.parameter_points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if cols.shape[1] < 1:
            raise ShapeError("a snapshot matrix needs at least one column")
        if pts.shape[0] != cols.shape[1]:
            raise ShapeError(f"{cols.shape[1]} snapshots but {pts.shape[0]} parameter points")
        cols.setflags(write=False)
        pts.setflags(write=False)
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "parameter_points", pts)

    @property
    def shape(self) -> tuple[int, int]:
        return self.columns.shape


@dataclass(frozen=True)
class PODBasis:
    """Orthonormal modes (as columns) with their singular values, largest first."""

    modes: np.ndarray
    singular_values: np.ndarray

    def __post_init__(self) -> None:
        modes = np.array(self.modes, dtype=float)
        sv = np.array(self.singular_values, dtype=float).reshape(-1)
        if modes.ndim != 2 or modes.shape[1] != sv.size:
            raise ShapeError(f"{sv.size} singular values for modes of shape {modes.shape}")
        modes.setflags(write=False)
        sv.setflags(write=False)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "singular_values", sv)

    @property
    def rank(self) -> int:
        return self.singular_values.size

    @property
    def size(self) -> int:
        return self.modes.shape[0]

    def rows(self, cells) -> np.ndarray:
        return self.modes[np.asarray(cells, dtype=np.int64)]


def _as_array(theta) -> np.ndarray:
    arr = theta.columns if isinstance(theta, SnapshotMatrix) else np.asarray(theta, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise ShapeError(f"snapshot matrix must be 2-d with N >= 1 columns, got shape {arr.shape}")
    return arr


def _fix_signs(modes: np.ndarray) -> np.ndarray:
    if modes.shape[1] == 0:
        return modes
    pivot = modes[np.argmax(np.abs(modes), axis=0), np.arange(modes.shape[1])]
    return modes * np.where(pivot < 0, -1.0, 1.0)


def _complete(modes: np.ndarray, count: int) -> np.ndarray:
    """Append ``count`` orthonormal columns by Gram-Schmidt over the unit vectors."""
    M = modes.shape[0]
    cols = [modes[:, k] for k in range(modes.shape[1])]
    for e in range(M):
        if count == 0:
            break
        v = np.zeros(M)
        v[e] = 1.0
        for _ in range(2):
            for c in cols:
                v -= (c @ v) * c
        nv = np.linalg.norm(v)
        if nv > 0.5:
            cols.append(v / nv)
            count -= 1
    return np.column_stack(cols) if cols else np.zeros((M, 0))


def _empty(M: int) -> PODBasis:
    warnings.warn("snapshot matrix is numerically zero; returning a rank-0 basis", RuntimeWarning, stacklevel=3)
    return PODBasis(np.zeros((M, 0)), np.zeros(0))


def build_basis_svd(theta) -> PODBasis:
    """Left singular vectors of the snapshot matrix, all ``min(M, N)`` of them.

    Modes with numerically zero singular value are completed to an orthonormal
    set deterministically; their singular value is reported as 0.
    """
    A = _as_array(theta)
    M, N = A.shape
    W, sigma, _ = jacobi_svd(A)
    order = np.argsort(-sigma, kind="stable")[: min(M, N)]
    sigma = sigma[order]
    W = W[:, order]
    if sigma.size == 0 or sigma[0] == 0.0:
        return _empty(M)
    null = sigma <= max(M, N) * np.finfo(float).eps * sigma[0]
    keep = ~null
    modes = W[:, keep] / sigma[keep]
    modes = _fix_signs(modes)
    if np.any(null):
        modes = _complete(modes, int(null.sum()))
        sigma = np.where(null, 0.0, sigma)
    return PODBasis(modes, sigma)


def build_basis_snapshots(theta, drop_tol: float = DROP_TOL) -> PODBasis:
    """Method of snapshots: ``Theta^T Theta phi = lambda phi``, ``psi = Theta phi / sqrt(lambda)``.

    Eigenpairs with ``lambda <= drop_tol * lambda_max`` are discarded.
    """
    A = _as_array(theta)
    lam, phi = jacobi_eigh(A.T @ A)
    order = np.argsort(-lam, kind="stable")
    lam, phi = lam[order], phi[:, order]
    if lam.size == 0 or lam[0] <= 0.0:
        return _empty(A.shape[0])
    keep = lam > drop_tol * lam[0]
    lam, phi = lam[keep], phi[:, keep]
    sigma = np.sqrt(lam)
    modes = (A @ phi) / sigma
    # Orthogonality of Theta phi / sqrt(lambda) degrades like eps * lambda_max / lambda;
    # a symmetric (Lowdin) re-orthonormalisation restores it with the smallest change.
    w, Q = jacobi_eigh(modes.T @ modes)
    modes = modes @ (Q / np.sqrt(w)) @ Q.T
    return PODBasis(_fix_signs(modes), sigma)


def build_basis(theta, method: str = "auto") -> PODBasis:
    """``auto`` uses the method of snapshots when ``M > 4 N``, else the SVD."""
    A = _as_array(theta)
    if method == "auto":
        method = "snapshots" if A.shape[0] > 4 * A.shape[1] else "svd"
    if method == "snapshots":
        return build_basis_snapshots(A)
    if method == "svd":
        return build_basis_svd(A)
    raise ValueError(f"unknown POD method {method!r}")


def truncate(basis: PODBasis, energy: float = 1.0) -> PODBasis:
    """Smallest leading rank capturing ``energy`` of the total squared singular values."""
    if not 0.0 < energy <= 1.0:
        raise ValueError(f"energy must lie in (0, 1], got {energy}")
    if energy == 1.0 or basis.rank == 0:
        return basis
    e = basis.singular_values**2
    total = e.sum()
    if total == 0.0:
        return basis
    r = int(np.searchsorted(np.cumsum(e), energy * total, side="left")) + 1
    r = min(r, basis.rank)
    return PODBasis(basis.modes[:, :r], basis.singular_values[:r])


def project(basis: PODBasis, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape[0] != basis.size:
        raise ShapeError(f"field of length {u.shape[0]} does not match basis size {basis.size}")
    return basis.modes.T @ u


def reconstruct(basis: PODBasis, alpha: np.ndarray) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape[0] != basis.rank:
        raise ShapeError(f"{alpha.shape[0]} coefficients for a rank-{basis.rank} basis")
    return basis.modes @ alpha
