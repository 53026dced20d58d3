"""Dense Jacobi-rotation kernels: one-sided SVD and symmetric eigensolver."""

from __future__ import annotations

import numpy as np

_EPS = np.finfo(float).eps


def jacobi_svd(A: np.ndarray, max_sweeps: int = 80) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One-sided (Hestenes) Jacobi SVD of an ``M x N`` matrix.

    Orthogonalises the columns of ``A`` by plane rotations accumulated in
    ``V``; on exit ``A V = W`` has orthogonal columns whose norms are the
    singular values.  Returns ``(W, sigma, V)`` unsorted, with ``W`` not yet
    normalised, so callers decide what to do with null columns.
    """
    W = np.array(A, dtype=float, copy=True)
    n = W.shape[1]
    V = np.eye(n)
    tol = _EPS * max(W.shape[0], 1)
    with np.errstate(over="ignore"):  # near-null columns: zeta -> inf gives t = 0
        _hestenes_sweeps(W, V, tol, max_sweeps)
    sigma = np.linalg.norm(W, axis=0)
    return W, sigma, V


def _hestenes_sweeps(W: np.ndarray, V: np.ndarray, tol: float, max_sweeps: int) -> None:
    n = W.shape[1]
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                wp, wq = W[:, p], W[:, q]
                alpha = wp @ wp
                beta = wq @ wq
                gamma = wp @ wq
                if gamma == 0.0 or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.hypot(1.0, zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                W[:, [p, q]] = np.column_stack([c * wp - s * wq, s * wp + c * wq])
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
        if not rotated:
            break


def jacobi_eigh(S: np.ndarray, max_sweeps: int = 80) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigen-decomposition of a symmetric matrix.

    Returns ``(eigenvalues, eigenvectors)`` unsorted; column ``k`` of the
    second array pairs with ``eigenvalues[k]``.
    """
    A = np.array(S, dtype=float, copy=True)
    n = A.shape[0]
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max(initial=0.0))):
        raise ValueError("jacobi_eigh needs a symmetric matrix")
    A = 0.5 * (A + A.T)
    Q = np.eye(n)
    scale = np.linalg.norm(A)
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= _EPS * scale or scale == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                if abs(apq) < _EPS * 1e-3 * np.sqrt(abs(A[p, p] * A[q, q])):
                    A[p, q] = A[q, p] = 0.0
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (abs(theta) + np.hypot(1.0, theta))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap, aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                qp, qq = Q[:, p].copy(), Q[:, q].copy()
                Q[:, p] = c * qp - s * qq
                Q[:, q] = s * qp + c * qq
    return np.diag(A).copy(), Q
