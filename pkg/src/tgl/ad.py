"""Dense float64 tensors with a minimal reverse-mode autodiff tape.

A :class:`Tensor` created with ``requires_grad=True`` is a tracked leaf. Every
operation whose inputs include a tracked tensor returns a tracked result that
remembers its parents and a closure mapping the upstream gradient to one
gradient per parent. :func:`backward` walks that graph once in reverse
topological order and returns the gradient of every tracked leaf.

The graph hangs off the tensors themselves, so there is no global state: two
forward passes on separate parameter copies may run on separate threads.
"""
from __future__ import annotations

import numpy as np

from .errors import ShapeError

__all__ = [
    "Tensor", "tensor", "backward", "matmul", "add", "sub", "hadamard",
    "hadamard_div", "concat", "stack", "transpose", "reshape", "sum", "mean",
    "exp", "log", "sqrt", "square", "tanh", "sigmoid", "relu", "leaky_relu",
    "softplus", "softmax", "log_softmax", "amax", "clip", "where", "pad",
    "numerical_grad", "gradcheck",
]


class Tensor:
    # makes ndarray (op) Tensor defer to our reflected operators
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def T(self):
        return transpose(self)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        tag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{tag})"

    def __len__(self):
        return len(self.data)

    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return hadamard(self, o)

    def __rmul__(self, o):
        return hadamard(o, self)

    def __truediv__(self, o):
        return hadamard_div(self, o)

    def __rtruediv__(self, o):
        return hadamard_div(o, self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __neg__(self):
        return _unary(self, -self.data, lambda g: -g)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def tensor(data, requires_grad=False, name=None):
    return Tensor(data, requires_grad=requires_grad, name=name)


def _t(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward_fn):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unary(a, data, grad_fn):
    return _result(data, (a,), lambda g: (grad_fn(g),))


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------- backward

def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Reverse sweep from a scalar ``loss``.

    Returns a dict mapping each tracked leaf tensor to its gradient array and
    also stores that array on ``leaf.grad``. Intermediate accumulators live
    only for the duration of the call.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any tracked tensor")
    acc = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    for node in reversed(_topological(loss)):
        g = acc.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            leaves[node] = g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            acc[key] = acc[key] + pg if key in acc else pg
    for leaf, g in leaves.items():
        leaf.grad = g
    return leaves


# ---------------------------------------------------------------- arithmetic

def add(a, b):
    a, b = _t(a), _t(b)
    sa, sb = a.shape, b.shape
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = _t(a), _t(b)
    sa, sb = a.shape, b.shape
    return _result(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def hadamard(a, b):
    a, b = _t(a), _t(b)
    A, B = a.data, b.data
    return _result(A * B, (a, b),
                   lambda g: (_unbroadcast(g * B, A.shape), _unbroadcast(g * A, B.shape)))


def hadamard_div(a, b):
    a, b = _t(a), _t(b)
    A, B = a.data, b.data
    if np.any(B == 0):
        raise ZeroDivisionError("hadamard division by a zero entry")
    out = A / B
    return _result(out, (a, b),
                   lambda g: (_unbroadcast(g / B, A.shape),
                              _unbroadcast(-g * out / B, B.shape)))


def power(a, p):
    a = _t(a)
    A = a.data
    return _unary(a, A ** p, lambda g: g * p * A ** (p - 1))


def square(a):
    return power(a, 2)


def matmul(a, b):
    a, b = _t(a), _t(b)
    A, B = a.data, b.data
    if A.ndim == 0 or B.ndim == 0:
        raise ShapeError("matmul needs at least 1-D operands")
    inner_b = B.shape[-2] if B.ndim > 1 else B.shape[0]
    if A.shape[-1] != inner_b:
        raise ShapeError(f"matmul shape mismatch {A.shape} @ {B.shape}")
    out = A @ B

    def bw(g):
        A2 = A if A.ndim > 1 else A[None, :]
        B2 = B if B.ndim > 1 else B[:, None]
        if A.ndim == 1 and B.ndim == 1:
            g2 = np.reshape(g, (1, 1))
        elif A.ndim == 1:
            g2 = np.expand_dims(g, -2)
        elif B.ndim == 1:
            g2 = g[..., None]
        else:
            g2 = g
        ga = _unbroadcast(g2 @ np.swapaxes(B2, -1, -2), A2.shape).reshape(A.shape)
        gb = _unbroadcast(np.swapaxes(A2, -1, -2) @ g2, B2.shape).reshape(B.shape)
        return ga, gb

    return _result(out, (a, b), bw)


def transpose(a, axes=None):
    """Swap the last two axes, or permute by ``axes``."""
    a = _t(a)
    if axes is None:
        if a.ndim < 2:
            return a
        axes = list(range(a.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
    inv = np.argsort(axes)
    return _unary(a, np.transpose(a.data, axes), lambda g: np.transpose(g, inv))


def reshape(a, shape):
    a = _t(a)
    old = a.shape
    return _unary(a, a.data.reshape(shape), lambda g: g.reshape(old))


def getitem(a, idx):
    a = _t(a)
    if isinstance(idx, Tensor):
        idx = idx.data.astype(int)
    shape = a.shape

    def bw(g):
        z = np.zeros(shape)
        np.add.at(z, idx, g)
        return (z,)

    return _result(a.data[idx], (a,), bw)


def concat(tensors, axis=-1):
    ts = [_t(x) for x in tensors]
    sizes = [t.shape[axis] for t in ts]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _result(np.concatenate([t.data for t in ts], axis=axis), ts, bw)


def stack(tensors, axis=0):
    ts = [_t(x) for x in tensors]

    def bw(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _result(np.stack([t.data for t in ts], axis=axis), ts, bw)


def pad(a, pad_width):
    """Zero padding, ``pad_width`` as for :func:`numpy.pad`."""
    a = _t(a)
    pw = [tuple(p) for p in pad_width]
    sl = tuple(slice(lo, lo + n) for (lo, _), n in zip(pw, a.shape))
    return _unary(a, np.pad(a.data, pw), lambda g: g[sl])


def where(cond, a, b):
    a, b = _t(a), _t(b)
    c = np.asarray(cond, dtype=bool)
    return _result(np.where(c, a.data, b.data), (a, b),
                   lambda g: (_unbroadcast(np.where(c, g, 0.0), a.shape),
                              _unbroadcast(np.where(c, 0.0, g), b.shape)))


# ---------------------------------------------------------------- reductions

def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    a = _t(a)
    shape = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _result(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)


def mean(a, axis=None, keepdims=False):
    a = _t(a)
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return sum(a, axis, keepdims) * (1.0 / count)


def amax(a, axis=None, keepdims=False):
    """Maximum; the gradient is shared equally among tied maxima."""
    a = _t(a)
    A = a.data
    m = A.max(axis=axis, keepdims=True)
    mask = (A == m).astype(float)
    mask /= mask.sum(axis=axis, keepdims=True)
    out = m if keepdims else (m.reshape(()) if axis is None else np.squeeze(m, axis))

    def bw(g):
        if not keepdims:
            g = np.reshape(g, m.shape)
        return (mask * g,)

    return _result(out, (a,), bw)


# ---------------------------------------------------------------- elementwise

def exp(a):
    a = _t(a)
    out = np.exp(a.data)
    return _unary(a, out, lambda g: g * out)


def log(a):
    a = _t(a)
    A = a.data
    return _unary(a, np.log(A), lambda g: g / A)


def sqrt(a):
    a = _t(a)
    out = np.sqrt(a.data)
    return _unary(a, out, lambda g: 0.5 * g / out)


def tanh(a):
    a = _t(a)
    out = np.tanh(a.data)
    return _unary(a, out, lambda g: g * (1.0 - out * out))


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(a):
    a = _t(a)
    out = _sigmoid(a.data)
    return _unary(a, out, lambda g: g * out * (1.0 - out))


def relu(a):
    a = _t(a)
    A = a.data
    return _unary(a, np.maximum(A, 0.0), lambda g: g * (A > 0))


def leaky_relu(a, slope=0.2):
    a = _t(a)
    A = a.data
    return _unary(a, np.where(A > 0, A, slope * A), lambda g: g * np.where(A > 0, 1.0, slope))


def softplus(a):
    """log(1 + e^a), overflow-safe."""
    a = _t(a)
    A = a.data
    return _unary(a, np.logaddexp(0.0, A), lambda g: g * _sigmoid(A))


def clip(a, lo, hi):
    a = _t(a)
    A = a.data
    inside = (A >= lo) & (A <= hi)
    return _unary(a, np.clip(A, lo, hi), lambda g: g * inside)


def softmax(a, axis=-1):
    a = _t(a)
    A = a.data
    z = A - A.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    return _unary(a, s, lambda g: s * (g - (g * s).sum(axis=axis, keepdims=True)))


def log_softmax(a, axis=-1):
    a = _t(a)
    A = a.data
    z = A - A.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    s = np.exp(out)
    return _unary(a, out, lambda g: g - s * g.sum(axis=axis, keepdims=True))


# ---------------------------------------------------------------- checking

def numerical_grad(fn, x, eps=1e-5):
    """Central finite differences of scalar ``fn()`` with respect to ``x.data``."""
    g = np.zeros_like(x.data)
    flat, gflat = x.data.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(fn().data)
        flat[i] = orig - eps
        fm = float(fn().data)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return g


def gradcheck(fn, params, eps=1e-5):
    """Largest relative error between tape and finite-difference gradients.

    ``fn`` takes no arguments and rebuilds the loss from ``params`` each call.
    The error for one parameter is ||g_ad - g_fd|| / max(||g_ad||, ||g_fd||),
    with the denominator floored at 1e-8 so all-zero gradients compare as 0.
    """
    for p in params:
        p.requires_grad = True
    grads = backward(fn())
    worst = 0.0
    for p in params:
        ga = grads.get(p, np.zeros_like(p.data))
        gn = numerical_grad(fn, p, eps)
        denom = max(np.linalg.norm(ga), np.linalg.norm(gn), 1e-8)
        worst = max(worst, float(np.linalg.norm(ga - gn) / denom))
    return worst
