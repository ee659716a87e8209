"""Graph signal processing on symmetric shifts.

A shift operator (adjacency, Laplacian or normalized Laplacian of an
undirected graph) is diagonalized once into a :class:`SpectralBasis`; the
graph Fourier transform is then projection onto its orthonormal eigenvectors.
"""
from dataclasses import dataclass

import numpy as np

from . import ad
from .errors import ShapeError
from .graph import laplacian, normalized_laplacian
from .linalg import symmetric_eig

SHIFT_KINDS = ("adjacency", "laplacian", "normalized_laplacian")
_ALIASES = {"adj": "adjacency", "lap": "laplacian", "nlap": "normalized_laplacian"}


def shift_operator(A, shift_kind):
    kind = _ALIASES.get(shift_kind, shift_kind)
    A = np.asarray(A, dtype=np.float64)
    if kind == "adjacency":
        return A.copy()
    if kind == "laplacian":
        return laplacian(A)
    if kind == "normalized_laplacian":
        return normalized_laplacian(A)
    raise ValueError(f"unknown shift kind {shift_kind!r}; expected one of {SHIFT_KINDS}")


@dataclass(frozen=True)
class SpectralBasis:
    shift_kind: str
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    shift: np.ndarray

    @property
    def n(self):
        return len(self.eigenvalues)

    @property
    def lambda_max(self):
        return float(self.eigenvalues[-1])


def build_basis(A, shift_kind="normalized_laplacian"):
    """Eigendecomposition of the chosen shift. Directed (asymmetric) shifts are rejected."""
    S = shift_operator(A, shift_kind)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ShapeError(f"shift must be square, got {S.shape}")
    if np.max(np.abs(S - S.T), initial=0.0) > 1e-10:
        raise ValueError("shift operator is not symmetric; directed graphs are not supported")
    w, V = symmetric_eig(S)
    for a in (w, V, S):
        a.setflags(write=False)
    return SpectralBasis(_ALIASES.get(shift_kind, shift_kind), w, V, S)


def _check_len(basis, x, what="signal"):
    if np.shape(x)[0] != basis.n:
        raise ShapeError(f"{what} has length {np.shape(x)[0]}, basis has n={basis.n}")


def gft(basis, x):
    """Forward transform V^T x. ``x`` may be a vector or an n x d matrix."""
    _check_len(basis, x)
    return basis.eigenvectors.T @ np.asarray(x, dtype=np.float64)


def igft(basis, y):
    _check_len(basis, y)
    return basis.eigenvectors @ np.asarray(y, dtype=np.float64)


def graph_convolve(basis, x, g):
    """x *_G g = igft(gft(x) . gft(g))."""
    _check_len(basis, x)
    _check_len(basis, g, "filter")
    return igft(basis, gft(basis, x) * gft(basis, g))


def spectral_filter(basis, response, x):
    """V diag(response) V^T x for a response given per eigenvalue."""
    response = np.asarray(response, dtype=np.float64)
    _check_len(basis, response, "response")
    V = basis.eigenvectors
    x = np.asarray(x, dtype=np.float64)
    return V @ ((response if x.ndim == 1 else response[:, None]) * (V.T @ x))


def characteristic_polynomial(M):
    """Coefficients c_n..c_0 of det(zI - M) by Faddeev-LeVerrier (highest first).

    This is the monic form; it differs from det(M - zI) only by (-1)^n and has
    the same roots.
    """
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    coeffs = [1.0]
    Mk = np.zeros_like(M)
    c = 1.0
    for k in range(1, n + 1):
        Mk = M @ Mk + c * np.eye(n)
        c = -np.trace(M @ Mk) / k
        coeffs.append(c)
    return np.array(coeffs)


def apply_poly_filter(S, coeffs, x):
    """(sum_k h_k S^k) x evaluated by Horner's rule.

    The filter degree must not exceed n - 1, the degree bound of a
    shift-invariant filter.
    """
    S = np.asarray(S, dtype=np.float64)
    h = np.asarray(coeffs, dtype=np.float64)
    n = S.shape[0]
    if len(h) == 0:
        raise ValueError("need at least one coefficient")
    if len(h) - 1 > n - 1:
        raise ValueError(f"filter degree {len(h) - 1} exceeds bound n-1 = {n - 1}")
    x = np.asarray(x, dtype=np.float64)
    y = h[-1] * x
    for hk in h[-2::-1]:
        y = S @ y + hk * x
    return y


def poly_response(coeffs, eigenvalues):
    """h(lambda) for each eigenvalue."""
    return np.polyval(np.asarray(coeffs, dtype=np.float64)[::-1], eigenvalues)


def chebyshev_basis(M, K):
    """Applicators x -> T_k(M) x for k = 0..K.

    Each applicator runs the recurrence T_k = 2 M T_{k-1} - T_{k-2} on the
    signal, never forming T_k(M) as a matrix. ``M`` may be an array or a
    callable implementing ``x -> M x``; ``x`` may be a :class:`~tgl.ad.Tensor`.
    """
    if K < 0:
        raise ValueError("K must be nonnegative")

    def make(k):
        return lambda x: chebyshev_terms(M, x, k)[k]

    return [make(k) for k in range(K + 1)]


def chebyshev_terms(M, x, K):
    """[T_0(M) x, ..., T_K(M) x]."""
    mul = M if callable(M) else (lambda v: ad.matmul(M, v) if isinstance(v, ad.Tensor) else M @ v)
    terms = [x]
    if K >= 1:
        terms.append(mul(x))
    for _ in range(2, K + 1):
        terms.append(2 * mul(terms[-1]) - terms[-2])
    return terms


def chebyshev_values(lam, K):
    """T_k evaluated at scalars ``lam``: array of shape (K+1, len(lam))."""
    lam = np.asarray(lam, dtype=np.float64)
    out = [np.ones_like(lam)]
    if K >= 1:
        out.append(lam.copy())
    for _ in range(2, K + 1):
        out.append(2 * lam * out[-1] - out[-2])
    return np.array(out)
