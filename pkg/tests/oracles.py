"""Reference computations written independently of the package code."""

from __future__ import annotations

from math import comb

import numpy as np
import scipy.sparse.linalg as spla
from scipy.spatial import ConvexHull


def bernstein_ref(i: int, n: int, t: float) -> float:
    return comb(n, i) * t**i * (1.0 - t) ** (n - i)


def ffd_tensor_sum(origin, lengths, dims, disp, p):
    """Explicit double sum over control points in physical coordinates (2-d)."""
    origin, lengths, p = (np.asarray(a, dtype=float) for a in (origin, lengths, p))
    if np.any(p < origin) or np.any(p > origin + lengths):
        return p.copy()
    s = (p - origin) / lengths
    l, m = dims
    out = np.zeros(2)
    for i in range(l):
        for j in range(m):
            P = np.array([i / (l - 1), j / (m - 1)]) + disp[i][j]
            out += P * bernstein_ref(i, l - 1, s[0]) * bernstein_ref(j, m - 1, s[1])
    return origin + lengths * out


def central_jacobian(f, p, h: float = 1e-6) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    J = np.empty((p.size, p.size))
    for k in range(p.size):
        e = np.zeros(p.size)
        e[k] = h
        J[:, k] = (f(p + e) - f(p - e)) / (2 * h)
    return J


def empty_circumcircle_violations(points, simplices, rel_eps: float = 1e-10) -> list:
    """Every (triangle, point) pair with the point strictly inside the circumcircle."""
    pts = np.asarray(points, dtype=float)
    diam2 = np.max(np.sum((pts[:, None] - pts[None]) ** 2, axis=-1))
    bad = []
    for t, (a, b, c) in enumerate(simplices):
        A, B, C = pts[a], pts[b], pts[c]
        for k in range(len(pts)):
            if k in (a, b, c):
                continue
            rows = [[q[0] - pts[k][0], q[1] - pts[k][1], (q[0] - pts[k][0]) ** 2 + (q[1] - pts[k][1]) ** 2] for q in (A, B, C)]
            det = np.linalg.det(np.array(rows))
            orient = (B[0] - A[0]) * (C[1] - A[1]) - (B[1] - A[1]) * (C[0] - A[0])
            if np.sign(orient) * det > rel_eps * diam2**2:
                bad.append((t, k))
    return bad


def hull_area(points) -> float:
    return float(ConvexHull(np.asarray(points, dtype=float)).volume)


def direct_solve(matrix, rhs) -> np.ndarray:
    return spla.spsolve(matrix.tocsc(), rhs)


def gram_singular_values(theta) -> np.ndarray:
    lam = np.linalg.eigvalsh(theta.T @ theta)[::-1]
    return np.sqrt(np.maximum(lam, 0.0))


def bump_flux_uniform(values, nx, ny, cells_on_patch, kappa: float, normalization: float = 1.0) -> float:
    """Downward diffusive flux on an undeformed uniform mesh, face by face.

    On a uniform grid the bottom-face flux of cell c projected on (0, -1) is
    kappa * (u_above - u_c) / h integrated over a face of length h.
    """
    total = 0.0
    for c in cells_on_patch:
        total += kappa * (values[c + nx] - values[c])
    return total / normalization
