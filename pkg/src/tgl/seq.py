"""Sequence layers: recurrent cells, n-D convolution, pooling, TCNs, attention.

Recurrent weights use the row-vector convention: a gate is
``act([h x] @ W + b)`` with ``W`` of shape (hidden + input, hidden), so the
same cell runs on a single vector or on a batch of rows (one per node).
"""
from itertools import product

import numpy as np

from . import ad
from .ad import Tensor
from .errors import ShapeError
from .nn import Module, activation, as_rng, glorot


def _cat(h, x):
    return ad.concat([h, x], axis=-1)


def _check_gate(W, h, x, name):
    if W.shape[0] != h.shape[-1] + x.shape[-1]:
        raise ShapeError(
            f"{name} expects [h x] of width {W.shape[0]}, got {h.shape[-1]} + {x.shape[-1]}")


# ---------------------------------------------------------------- recurrent cells

def rnn_cell(params, h_prev, x):
    """Elman update h = tanh([h_prev x] W + b)."""
    h_prev, x = ad._t(h_prev), ad._t(x)
    _check_gate(params["W"], h_prev, x, "rnn W")
    return ad.tanh(_cat(h_prev, x) @ params["W"] + params["b"])


def lstm_cell(params, state, x):
    h_prev, c_prev = (ad._t(s) for s in state)
    x = ad._t(x)
    _check_gate(params["W_f"], h_prev, x, "lstm W_f")
    hx = _cat(h_prev, x)
    f = ad.sigmoid(hx @ params["W_f"] + params["b_f"])
    i = ad.sigmoid(hx @ params["W_i"] + params["b_i"])
    o = ad.sigmoid(hx @ params["W_o"] + params["b_o"])
    c_hat = ad.tanh(hx @ params["W_c"] + params["b_c"])
    c = f * c_prev + i * c_hat
    return o * ad.tanh(c), c


def gru_cell(params, h_prev, x):
    """h = u . h_prev + (1 - u) . tanh([r . h_prev  x] W_h + b_h)."""
    h_prev, x = ad._t(h_prev), ad._t(x)
    _check_gate(params["W_u"], h_prev, x, "gru W_u")
    hx = _cat(h_prev, x)
    u = ad.sigmoid(hx @ params["W_u"] + params["b_u"])
    r = ad.sigmoid(hx @ params["W_r"] + params["b_r"])
    h_hat = ad.tanh(_cat(r * h_prev, x) @ params["W_h"] + params["b_h"])
    return u * h_prev + (1.0 - u) * h_hat


class _Cell(Module):
    _gates = ()

    def __init__(self, n_in, n_hidden, rng=None, zero=False):
        rng = as_rng(rng)
        self.n_in, self.n_hidden = n_in, n_hidden
        for g in self._gates:
            W = np.zeros((n_hidden + n_in, n_hidden)) if zero else glorot(rng, n_hidden + n_in, n_hidden)
            setattr(self, f"W_{g}" if g else "W", Tensor(W, requires_grad=True))
            setattr(self, f"b_{g}" if g else "b", Tensor(np.zeros(n_hidden), requires_grad=True))

    def params(self):
        return {k: v for k, v in vars(self).items() if isinstance(v, Tensor)}

    def zero_state(self, *batch):
        return Tensor(np.zeros((*batch, self.n_hidden)))


class RNNCell(_Cell):
    _gates = ("",)

    def __call__(self, h, x):
        return rnn_cell(self.params(), h, x)


class LSTMCell(_Cell):
    _gates = ("f", "i", "o", "c")

    def __call__(self, state, x):
        return lstm_cell(self.params(), state, x)

    def zero_state(self, *batch):
        return super().zero_state(*batch), super().zero_state(*batch)


class GRUCell(_Cell):
    _gates = ("u", "r", "h")

    def __call__(self, h, x):
        return gru_cell(self.params(), h, x)


# ---------------------------------------------------------------- convolution

def conv_nd(theta, X):
    """Valid cross-correlation of an n-D array with an n-cubic kernel.

    Y[i1..in] = sum(theta * X[i1:i1+d, ..., in:in+d]); output extent along
    each axis is d_i - d + 1.
    """
    theta, X = ad._t(theta), ad._t(X)
    d = theta.shape[0] if theta.ndim else 0
    if theta.ndim != X.ndim or any(s != d for s in theta.shape):
        raise ShapeError(f"kernel must be an {X.ndim}-cube, got shape {theta.shape}")
    if any(d > s for s in X.shape):
        raise ShapeError(f"kernel width {d} exceeds input shape {X.shape}")
    out = tuple(s - d + 1 for s in X.shape)
    Y = None
    for off in product(range(d), repeat=X.ndim):
        window = X[tuple(slice(o, o + m) for o, m in zip(off, out))]
        term = theta[off] * window
        Y = term if Y is None else Y + term
    return Y


def dilation_mask(d, n, l):
    """l-dilation mask over [d]^n with 1-based indices: 1 where every index is a multiple of l."""
    if l < 1:
        raise ValueError("dilation factor must be >= 1")
    keep = (np.arange(1, d + 1) % l == 0).astype(float)
    M = keep
    for _ in range(n - 1):
        M = np.multiply.outer(M, keep)
    return M


def dilated_conv(theta_prime, X, l):
    theta_prime = ad._t(theta_prime)
    M = dilation_mask(theta_prime.shape[0], theta_prime.ndim, l)
    return conv_nd(theta_prime * M, X)


def pool(X, tile, rule="max"):
    """Non-overlapping pooling with an n-cubic tile; every axis must divide exactly."""
    X = ad._t(X)
    if any(s % tile for s in X.shape):
        raise ShapeError(f"shape {X.shape} is not divisible by tile {tile}")
    split = []
    for s in X.shape:
        split += [s // tile, tile]
    Xs = X.reshape(tuple(split))
    axes = tuple(range(1, 2 * X.ndim, 2))
    if rule == "max":
        return ad.amax(Xs, axis=axes)
    if rule == "avg":
        return ad.mean(Xs, axis=axes)
    if rule == "l2":
        return ad.sqrt(ad.sum(Xs * Xs, axis=axes))
    raise ValueError(f"unknown pooling rule {rule!r}")


# ---------------------------------------------------------------- temporal convolution

def tcn_forward(theta_f, x, act="linear", bias=0.0):
    """z = a(theta_f * x + bias) along the time axis of a 1-D series.

    With a linear activation and ``theta_f`` equal to the AR weights in
    reverse (oldest lag first), z[t] is the AR prediction of x[t + d].
    """
    return activation(act)(conv_nd(theta_f, x) + bias)


def gated_tcn_forward(theta_f, theta_g, x, bias_f=0.0, bias_g=0.0):
    theta_f, theta_g = ad._t(theta_f), ad._t(theta_g)
    if theta_f.shape != theta_g.shape:
        raise ShapeError("filter and gate kernels must give equal output lengths")
    filt = ad.tanh(conv_nd(theta_f, x) + bias_f)
    gate = ad.sigmoid(conv_nd(theta_g, x) + bias_g)
    return filt * gate


def causal_conv1d(theta, x, l=1):
    """Causal dilated convolution; taps are ``l`` steps apart.

    ``x`` is left-padded with (d-1)*l zeros so the output has the same
    length and z[t] only sees x[t - (d-1)*l .. t].
    """
    theta, x = ad._t(theta), ad._t(x)
    if theta.ndim != 1 or x.ndim != 1:
        raise ShapeError("causal_conv1d works on 1-D kernels and series")
    d, T = theta.shape[0], x.shape[0]
    xp = ad.pad(x, [((d - 1) * l, 0)])
    z = None
    for k in range(d):
        term = theta[k] * xp[k * l:k * l + T]
        z = term if z is None else z + term
    return z


def _conditioning(h, T):
    if h is None:
        return Tensor(np.zeros(T))
    h = ad._t(h)
    if h.ndim == 0 or h.shape == (1,):
        return h * np.ones(T)
    if h.shape != (T,):
        raise ShapeError(f"conditioning series has shape {h.shape}, expected ({T},)")
    return h


def causal_tcn_forward(theta_f, theta_g, phi_f, phi_g, x, h_cond=None, l=1):
    """tanh(Tf *l x + Pf *l h) . sigmoid(Tg *l x + Pg *l h), all causal.

    ``h_cond`` is a per-step series or a scalar broadcast over time; ``None``
    means no conditioning. ``phi_*`` may be ``None`` for the same effect.
    """
    x = ad._t(x)
    T = x.shape[0]
    h = _conditioning(h_cond, T)

    def branch(theta, phi):
        out = causal_conv1d(theta, x, l)
        if phi is not None:
            out = out + causal_conv1d(phi, h, l)
        return out

    return ad.tanh(branch(theta_f, phi_f)) * ad.sigmoid(branch(theta_g, phi_g))


def temporal_conv(x, W, l=1, causal=True):
    """Multi-channel 1-D convolution along axis -2 of ``x`` (..., T, c_in).

    ``W`` has shape (d, c_in, c_out); the result is (..., T', c_out) with
    T' = T when causal (left zero padding) and T - (d-1)*l otherwise.
    """
    x, W = ad._t(x), ad._t(W)
    d = W.shape[0]
    if x.shape[-1] != W.shape[1]:
        raise ShapeError(f"input has {x.shape[-1]} channels, kernel expects {W.shape[1]}")
    span = (d - 1) * l
    if causal:
        pw = [(0, 0)] * x.ndim
        pw[-2] = (span, 0)
        x = ad.pad(x, pw)
    T_out = x.shape[-2] - span
    if T_out < 1:
        raise ShapeError("kernel span exceeds series length")
    z = None
    for k in range(d):
        term = x[..., k * l:k * l + T_out, :] @ W[k]
        z = term if z is None else z + term
    return z


# ---------------------------------------------------------------- attention

def sdpa(Q, K, V, return_weights=False):
    """softmax(Q K^T / sqrt(d_k)) V."""
    Q, K, V = ad._t(Q), ad._t(K), ad._t(V)
    if Q.shape[-1] != K.shape[-1]:
        raise ShapeError(f"query width {Q.shape[-1]} != key width {K.shape[-1]}")
    if K.shape[-2] != V.shape[-2]:
        raise ShapeError("keys and values must have the same number of rows")
    scores = (Q @ ad.transpose(K)) * (1.0 / np.sqrt(K.shape[-1]))
    Wt = ad.softmax(scores, axis=-1)
    O = Wt @ V
    return (O, Wt) if return_weights else O


def mha(Q, K, V, theta_q, theta_k, theta_v, theta_o):
    """concat_j sdpa(Q Tq_j, K Tk_j, V Tv_j) @ To; one projection per head."""
    heads = len(theta_q)
    if not heads or len(theta_k) != heads or len(theta_v) != heads:
        raise ShapeError("need the same positive number of Q/K/V projections")
    outs = [sdpa(ad.matmul(Q, tq), ad.matmul(K, tk), ad.matmul(V, tv))
            for tq, tk, tv in zip(theta_q, theta_k, theta_v)]
    return ad.matmul(ad.concat(outs, axis=-1), theta_o)


class MultiHeadAttention(Module):
    def __init__(self, d_model, heads, rng=None):
        if d_model % heads:
            raise ShapeError(f"model width {d_model} is not divisible by {heads} heads")
        rng = as_rng(rng)
        dh = d_model // heads
        mk = lambda r, c: Tensor(glorot(rng, r, c), requires_grad=True)  # noqa: E731
        self.theta_q = [mk(d_model, dh) for _ in range(heads)]
        self.theta_k = [mk(d_model, dh) for _ in range(heads)]
        self.theta_v = [mk(d_model, dh) for _ in range(heads)]
        self.theta_o = mk(d_model, d_model)

    def __call__(self, Q, K=None, V=None):
        K = Q if K is None else K
        V = K if V is None else V
        return mha(Q, K, V, self.theta_q, self.theta_k, self.theta_v, self.theta_o)


def positional_encoding(T, dim, base=10000.0):
    """Sinusoidal encoding: row t holds sin/cos pairs at geometric frequencies."""
    if dim % 2:
        raise ValueError("positional encoding width must be even")
    t = np.arange(T)[:, None]
    freq = base ** (-np.arange(0, dim, 2) / dim)
    P = np.zeros((T, dim))
    P[:, 0::2] = np.sin(t * freq)
    P[:, 1::2] = np.cos(t * freq)
    return P
