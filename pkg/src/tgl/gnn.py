"""Spatial layers: ChebNet, GCN, diffusion convolution, MPNN, GIN, GAT and the
recurrent GNNs (Scarselli diffusion, Graph ESN, gated GNN) with graph readout.

All layers read the adjacency by rows: node ``v`` aggregates over
``{u : A[v, u] != 0}`` with weight ``A[v, u]``. For undirected graphs this is
the same as the column convention of the k-hop definition.
"""
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import ad
from .ad import Tensor
from .errors import ShapeError
from .graph import sampled_adjacency, sym_normalized_adjacency, transition_matrix
from .gsp import build_basis, chebyshev_terms, chebyshev_values
from .nn import MLP, Linear, Module, activation, as_rng, glorot
from .seq import GRUCell, gru_cell


def _edges(A):
    v, u = np.nonzero(np.asarray(A))
    return v, u


def _scatter(n, targets):
    """n x E incidence matrix summing edge messages into their target rows."""
    S = np.zeros((n, len(targets)))
    S[targets, np.arange(len(targets))] = 1.0
    return S


def _maybe_sample(A, sample):
    if sample is None:
        return np.asarray(A, dtype=np.float64)
    q, seed = sample
    return sampled_adjacency(A, q, seed)


def batched(fn, A, H, *args, **kw):
    """Apply a single-graph layer over a leading batch axis of ``A`` and ``H``."""
    A = np.asarray(A)
    if A.ndim == 2:
        return fn(A, H, *args, **kw)
    H = ad._t(H)
    return ad.stack([fn(A[b], H[b], *args, **kw) for b in range(A.shape[0])])


# ---------------------------------------------------------------- ChebNet

def chebnet_layer(basis, theta, x, lambda_max=None, mode="spectral"):
    """Chebyshev spectral filter sum_k theta_k T_k(L~) x with L~ = 2/lmax S - I.

    ``theta`` is (K+1,) for scalar taps or (K+1, d_in, d_out) for channel
    mixing. ``lambda_max`` defaults to the largest computed eigenvalue; pass
    2.0 for the usual first-order approximation. ``mode="spatial"`` runs the
    recurrence on the shift matrix instead of the eigenbasis.
    """
    theta = ad._t(theta)
    lmax = basis.lambda_max if lambda_max is None else float(lambda_max)
    if lmax <= 0:
        raise ValueError("lambda_max must be positive (edgeless graph?)")
    K = theta.shape[0] - 1
    if K > basis.n - 1:
        raise ValueError(f"Chebyshev order {K} exceeds n-1 = {basis.n - 1}")
    scalar = theta.ndim == 1
    x = ad._t(x)
    if mode == "spectral":
        lam = 2.0 / lmax * basis.eigenvalues - 1.0
        Tk = chebyshev_values(lam, K)
        V = basis.eigenvectors
        if scalar:
            resp = ad.matmul(theta, Tk)
            xs = ad.matmul(V.T, x)
            resp = resp if x.ndim == 1 else ad.reshape(resp, (-1, 1))
            return ad.matmul(V, resp * xs)
        out = None
        for k in range(K + 1):
            Pk = (V * Tk[k]) @ V.T
            term = ad.matmul(ad.matmul(Pk, x), theta[k])
            out = term if out is None else out + term
        return out
    if mode == "spatial":
        Lt = 2.0 / lmax * np.asarray(basis.shift) - np.eye(basis.n)
        terms = chebyshev_terms(Lt, x, K)
        out = None
        for k, t in enumerate(terms):
            term = theta[k] * t if scalar else ad.matmul(t, theta[k])
            out = term if out is None else out + term
        return out
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------- GCN

def gcn_propagation(A):
    """A~ = I + D^{-1/2} A D^{-1/2}; accepts a stack of matrices."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 3:
        return np.stack([gcn_propagation(a) for a in A])
    return np.eye(A.shape[0]) + sym_normalized_adjacency(A)


def gcn_layer(A, X, Theta, act="linear"):
    """a(A~ X Theta)."""
    X = ad._t(X)
    if np.shape(A)[-1] != X.shape[-2]:
        raise ShapeError(f"adjacency is {np.shape(A)}, features {X.shape}")
    return activation(act)(ad.matmul(ad.matmul(gcn_propagation(A), X), Theta))


# ---------------------------------------------------------------- diffusion

def diffusion_conv(A, X, thetas, mode="concat", act="linear"):
    """Diffusion convolution with transition matrix P = D^{-1} A.

    concat: [a(theta_1 . P X), ..., a(theta_K . P^K X)], ``thetas`` K tensors
    broadcastable against X. sum: sum_{k=0..K} a(P^k X theta_k), ``thetas``
    K+1 matrices.
    """
    P = transition_matrix(A)
    X = ad._t(X)
    a = activation(act)
    if mode == "concat":
        if len(thetas) < 1:
            raise ValueError("concat diffusion needs K >= 1")
        out, Z = [], X
        for th in thetas:
            Z = ad.matmul(P, Z)
            out.append(a(ad.hadamard(th, Z)))
        return ad.concat(out, axis=-1)
    if mode == "sum":
        if len(thetas) < 1:
            raise ValueError("sum diffusion needs K >= 0 (at least one matrix)")
        out, Z = None, X
        for k, th in enumerate(thetas):
            if k:
                Z = ad.matmul(P, Z)
            term = a(ad.matmul(Z, th))
            out = term if out is None else out + term
        return out
    raise ValueError(f"unknown diffusion mode {mode!r}")


# ---------------------------------------------------------------- message passing

def mpnn_step(A, H, f, g, sample=None):
    """h_v <- f(h_v, sum_u g(h_v, h_u, A[v, u])) over the 1-hop neighbourhood.

    ``f(H, M)`` and ``g(Hv, Hu, a)`` are vectorized callables; ``g`` receives
    one row per edge and ``a`` as an (E, 1) column.
    """
    A = _maybe_sample(A, sample)
    H = ad._t(H)
    if A.shape[0] != H.shape[0]:
        raise ShapeError(f"adjacency is {A.shape}, embeddings {H.shape}")
    v, u = _edges(A)
    msgs = g(H[v], H[u], Tensor(A[v, u][:, None]))
    agg = ad.matmul(_scatter(A.shape[0], v), msgs)
    return f(H, agg)


def gin_step(A, H, eps, mlp, sample=None):
    """f_MLP((1 + eps) h_v + sum_u h_u) with an unweighted neighbour sum."""
    A = _maybe_sample(A, sample)
    H = ad._t(H)
    if A.shape[0] != H.shape[0]:
        raise ShapeError(f"adjacency is {A.shape}, embeddings {H.shape}")
    B = (A != 0).astype(float)
    return mlp((1.0 + ad._t(eps)) * H + ad.matmul(B, H))


def gat_layer(A, H, Theta, a_vec, act="sigmoid", slope=0.2, sample=None, return_attention=False):
    """Single-head graph attention over U_v and v itself."""
    A = _maybe_sample(A, sample)
    H, Theta, a_vec = ad._t(H), ad._t(Theta), ad._t(a_vec)
    width = Theta.shape[-1]
    if a_vec.shape != (2 * width,):
        raise ShapeError(f"attention vector must have length {2 * width}, got {a_vec.shape}")
    Z = ad.matmul(H, Theta)
    src = ad.matmul(Z, a_vec[:width])
    dst = ad.matmul(Z, a_vec[width:])
    e = ad.leaky_relu(ad.reshape(src, (-1, 1)) + ad.reshape(dst, (1, -1)), slope)
    mask = (A != 0) | np.eye(A.shape[0], dtype=bool)
    alpha = ad.softmax(ad.where(mask, e, -np.inf), axis=-1)
    out = activation(act)(ad.matmul(alpha, Z))
    return (out, alpha) if return_attention else out


# ---------------------------------------------------------------- recurrent GNNs

def gated_gnn_init(X, width):
    """h_0 = [X 0], zero-padding the features up to ``width``."""
    X = np.asarray(X, dtype=np.float64)
    if width < X.shape[-1]:
        raise ShapeError(f"state width {width} is smaller than feature width {X.shape[-1]}")
    pad = [(0, 0)] * (X.ndim - 1) + [(0, width - X.shape[-1])]
    return Tensor(np.pad(X, pad))


def gated_gnn_step(W_edges, H, gru_params):
    """h_v <- GRU(h_v, sum_u W(v,u) h_u)."""
    H = ad._t(H)
    return gru_cell(gru_params, H, ad.matmul(np.asarray(W_edges, dtype=np.float64), H))


class GraphReservoir:
    """Fixed random input and recurrent matrices for a Graph ESN.

    ``W_rec`` is rescaled so its spectral radius is 0.9 * ``scale``. Nothing
    here is trained.
    """

    def __init__(self, n_in, width, scale=0.9, input_scale=1.0, rng=None):
        rng = as_rng(rng)
        self.W_in = rng.uniform(-input_scale, input_scale, size=(n_in, width))
        W = rng.uniform(-1.0, 1.0, size=(width, width))
        radius = np.max(np.abs(np.linalg.eigvals(W)))
        self.W_rec = W * (0.9 * scale / radius) if radius > 0 else W
        self.width = width

    def zero_state(self, n):
        return np.zeros((n, self.width))


def graph_esn_step(A, X, reservoir, H_prev):
    """h_v = tanh(W(v,v) X_v W_in + sum_{u != v} W(v,u) h_u W_rec).

    A missing self-loop counts as self weight 1.
    """
    A = np.asarray(A, dtype=np.float64)
    self_w = np.diag(A).copy()
    self_w[self_w == 0] = 1.0
    A_off = A - np.diag(np.diag(A))
    drive = self_w[:, None] * (np.asarray(X, dtype=np.float64) @ reservoir.W_in)
    return np.tanh(drive + A_off @ np.asarray(H_prev) @ reservoir.W_rec)


def graph_readout(H, X, g_theta, g_psi):
    """tanh(sum_v sigmoid(g_theta(h_v, x_v)) . tanh(g_psi(h_v, x_v)))."""
    H, X = ad._t(H), ad._t(X)
    if H.shape[:-1] != X.shape[:-1]:
        raise ShapeError(f"embeddings {H.shape} and features {X.shape} disagree on nodes")
    inp = ad.concat([H, X], axis=-1)
    gated = ad.sigmoid(g_theta(inp)) * ad.tanh(g_psi(inp))
    return ad.tanh(ad.sum(gated, axis=-2))


def scarselli_step(A, X, H, f):
    """h_v = sum_u f(x_v, x_u, W(v,u), h_u); ``f`` sees one row per edge."""
    A = np.asarray(A, dtype=np.float64)
    X, H = ad._t(X), ad._t(H)
    v, u = _edges(A)
    msgs = f(X[v], X[u], Tensor(A[v, u][:, None]), H[u])
    return ad.matmul(_scatter(A.shape[0], v), msgs)


class FixpointResult(NamedTuple):
    H: object
    converged: bool
    iterations: int


def iterate_to_fixpoint(step, H0, tol=1e-6, max_iter=100):
    """Repeat ``H <- step(H)`` until max |H_t - H_{t-1}| < tol.

    On failure the last iterate is returned with ``converged=False`` and a
    ``RuntimeWarning`` is emitted.
    """
    H = H0
    for it in range(1, max_iter + 1):
        H_new = step(H)
        delta = np.max(np.abs(np.asarray(ad._t(H_new).data) - np.asarray(ad._t(H).data)), initial=0.0)
        H = H_new
        if delta < tol:
            return FixpointResult(H, True, it)
    warnings.warn(f"no fixpoint within {max_iter} iterations", RuntimeWarning, stacklevel=2)
    return FixpointResult(H, False, max_iter)


# ---------------------------------------------------------------- layer objects

@dataclass
class GNNLayerSpec:
    kind: str
    width: int
    K: int = 2
    learn_eps: bool = True
    heads: int = 1
    q: Optional[int] = None
    act: str = "tanh"
    extra: dict = field(default_factory=dict)


class ChebLayer(Module):
    def __init__(self, n_in, width, K=2, act="tanh", rng=None):
        rng = as_rng(rng)
        self.theta = Tensor(glorot(rng, n_in, width, (K + 1, n_in, width)), requires_grad=True)
        self._act = activation(act)
        self._cache = {}

    def __call__(self, A, H):
        return batched(self._one, A, H)

    def _one(self, A, H):
        key = A.tobytes()
        if key not in self._cache:
            self._cache[key] = build_basis(A, "normalized_laplacian")
        basis = self._cache[key]
        lmax = basis.lambda_max if basis.lambda_max > 0 else 2.0
        return self._act(chebnet_layer(basis, self.theta, H, lmax, mode="spatial"))


class GCNLayer(Module):
    def __init__(self, n_in, width, act="tanh", rng=None):
        self.Theta = Tensor(glorot(as_rng(rng), n_in, width), requires_grad=True)
        self._act = act

    def __call__(self, A, H):
        return gcn_layer(A, H, self.Theta, self._act)


class DiffusionLayer(Module):
    def __init__(self, n_in, width, K=2, mode="sum", act="tanh", rng=None):
        rng = as_rng(rng)
        self._mode, self._act = mode, act
        if mode == "concat":
            if width != K * n_in:
                raise ShapeError(f"concat diffusion emits K*d = {K * n_in} columns, not {width}")
            self.thetas = [Tensor(rng.normal(1.0, 0.1, n_in), requires_grad=True) for _ in range(K)]
        else:
            self.thetas = [Tensor(glorot(rng, n_in, width), requires_grad=True) for _ in range(K + 1)]

    def __call__(self, A, H):
        return batched(diffusion_conv, A, H, self.thetas, self._mode, self._act)


class MPNNLayer(Module):
    def __init__(self, n_in, width, hidden=None, rng=None, sample=None):
        rng = as_rng(rng)
        hidden = hidden or width
        self.msg = MLP(2 * n_in + 1, hidden, width, rng)
        self.upd = MLP(n_in + width, hidden, width, rng)
        self._sample = sample

    def g(self, hv, hu, a):
        return self.msg(ad.concat([hv, hu, a], axis=-1))

    def f(self, h, m):
        return self.upd(ad.concat([h, m], axis=-1))

    def __call__(self, A, H):
        return batched(mpnn_step, A, H, self.f, self.g, self._sample)


class GINLayer(Module):
    def __init__(self, n_in, width, hidden=None, learn_eps=True, rng=None, sample=None):
        rng = as_rng(rng)
        self.mlp = MLP(n_in, hidden or width, width, rng)
        self.eps = Tensor(0.0, requires_grad=learn_eps)
        self._sample = sample

    def __call__(self, A, H):
        return batched(gin_step, A, H, self.eps, self.mlp, self._sample)


class GATLayer(Module):
    def __init__(self, n_in, width, act="tanh", rng=None, sample=None):
        rng = as_rng(rng)
        self.Theta = Tensor(glorot(rng, n_in, width), requires_grad=True)
        self.a = Tensor(rng.normal(0, 0.1, 2 * width), requires_grad=True)
        self._act, self._sample = act, sample

    def __call__(self, A, H):
        return batched(gat_layer, A, H, self.Theta, self.a, self._act, 0.2, self._sample)


class GatedGNNLayer(Module):
    """``steps`` GRU propagation rounds starting from zero-padded features."""

    def __init__(self, n_in, width, steps=2, rng=None):
        self.gru = GRUCell(width, width, rng)
        self._width, self._steps = width, steps

    def __call__(self, A, H):
        H = ad._t(H)
        if H.shape[-1] < self._width:
            pad = [(0, 0)] * (H.ndim - 1) + [(0, self._width - H.shape[-1])]
            H = ad.pad(H, pad)
        for _ in range(self._steps):
            H = batched(gated_gnn_step, A, H, self.gru.params())
        return H


class GraphESNLayer(Module):
    """Untrained reservoir run for ``steps`` rounds; has no parameters."""

    def __init__(self, n_in, width, scale=0.9, steps=5, rng=None):
        self._res = GraphReservoir(n_in, width, scale, rng=rng)
        self._steps = steps

    def __call__(self, A, H):
        X = ad._t(H).data

        def run(a, x):
            h = self._res.zero_state(a.shape[0])
            for _ in range(self._steps):
                h = graph_esn_step(a, x, self._res, h)
            return h

        A = np.asarray(A)
        out = run(A, X) if A.ndim == 2 else np.stack([run(A[b], X[b]) for b in range(len(A))])
        return Tensor(out)


class GraphReadout(Module):
    def __init__(self, n_state, n_feat, width, rng=None):
        rng = as_rng(rng)
        self.g_theta = Linear(n_state + n_feat, width, rng)
        self.g_psi = Linear(n_state + n_feat, width, rng)

    def __call__(self, H, X):
        return graph_readout(H, X, self.g_theta, self.g_psi)


def build_layer(spec: GNNLayerSpec, n_in, rng=None):
    rng = as_rng(rng)
    sample = None if spec.q is None else (spec.q, spec.extra.get("sample_seed", 0))
    kind = spec.kind
    if kind == "gcn":
        return GCNLayer(n_in, spec.width, spec.act, rng)
    if kind == "chebnet":
        return ChebLayer(n_in, spec.width, spec.K, spec.act, rng)
    if kind in ("diffusion_concat", "diffusion_sum"):
        return DiffusionLayer(n_in, spec.width, spec.K, kind.split("_")[1], spec.act, rng)
    if kind == "mpnn":
        return MPNNLayer(n_in, spec.width, rng=rng, sample=sample)
    if kind == "gin":
        return GINLayer(n_in, spec.width, learn_eps=spec.learn_eps, rng=rng, sample=sample)
    if kind == "gat":
        if spec.heads != 1:
            raise ValueError("only single-head GAT is supported")
        return GATLayer(n_in, spec.width, spec.act, rng, sample)
    if kind == "gated_gnn":
        return GatedGNNLayer(n_in, spec.width, spec.extra.get("steps", 2), rng)
    if kind == "graph_esn":
        return GraphESNLayer(n_in, spec.width, spec.extra.get("scale", 0.9),
                             spec.extra.get("steps", 5), rng)
    raise ValueError(f"unknown GNN layer kind {kind!r}")
