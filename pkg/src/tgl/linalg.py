"""Symmetric eigensolver and the pseudo-inverse built on it."""
import numpy as np

from .errors import ConvergenceError, ShapeError


def _check_square(M):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {M.shape}")
    return M


def symmetric_eig(M, sym_tol=1e-10, max_sweeps=100):
    """Cyclic Jacobi eigendecomposition of a real symmetric matrix.

    Returns ``(w, V)`` with ``w`` ascending and ``V`` orthonormal so that
    ``M = V diag(w) V^T``. Raises ``ValueError`` if ``M`` is not symmetric
    within ``sym_tol`` and :class:`ConvergenceError` after ``max_sweeps``.
    """
    A = _check_square(M)
    if A.size and np.max(np.abs(A - A.T)) > sym_tol:
        raise ValueError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    V = np.eye(n)
    scale = np.linalg.norm(A)
    offdiag = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = np.linalg.norm(A[offdiag])
        if off <= 1e-13 * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap, aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def pinv_symmetric(M, rtol=1e-12):
    """Moore-Penrose pseudo-inverse of a symmetric PSD matrix via its eigenbasis."""
    w, V = symmetric_eig(M)
    cutoff = rtol * max(np.max(np.abs(w)), 0.0) if w.size else 0.0
    inv = np.array([1.0 / x if abs(x) > cutoff and x != 0 else 0.0 for x in w])
    return (V * inv) @ V.T
