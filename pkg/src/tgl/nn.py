"""Parameter containers shared by every trainable layer."""
import numpy as np

from . import ad
from .ad import Tensor


def glorot(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def as_rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


class Module:
    """Base class; parameters are discovered from attributes.

    Any attribute holding a tracked :class:`Tensor`, a :class:`Module`, or a
    list of either contributes to :meth:`named_parameters` under a dotted name.
    """

    def named_parameters(self, prefix=""):
        out = {}
        for key, val in vars(self).items():
            if key.startswith("_"):
                continue
            items = val if isinstance(val, (list, tuple)) else [val]
            for i, item in enumerate(items):
                name = f"{prefix}{key}" if len(items) == 1 and not isinstance(val, (list, tuple)) \
                    else f"{prefix}{key}.{i}"
                if isinstance(item, Tensor) and item.requires_grad:
                    out[name] = item
                elif isinstance(item, Module):
                    out.update(item.named_parameters(name + "."))
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def state_dict(self):
        return {n: p.data.copy() for n, p in self.named_parameters().items()}

    def load_state_dict(self, state):
        params = self.named_parameters()
        missing = set(params) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for n, p in params.items():
            arr = np.asarray(state[n], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{n}: shape {arr.shape} != {p.shape}")
            p.data[...] = arr


class Linear(Module):
    def __init__(self, n_in, n_out, rng=None, bias=True):
        rng = as_rng(rng)
        self.W = Tensor(glorot(rng, n_in, n_out), requires_grad=True)
        self.b = Tensor(np.zeros(n_out), requires_grad=True) if bias else None

    def __call__(self, x):
        y = ad.matmul(x, self.W)
        return y + self.b if self.b is not None else y


ACTIVATIONS = {
    "linear": lambda x: x,
    "identity": lambda x: x,
    "tanh": ad.tanh,
    "sigmoid": ad.sigmoid,
    "relu": ad.relu,
    "leaky_relu": ad.leaky_relu,
}


def activation(name):
    if callable(name):
        return name
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}") from None


class MLP(Module):
    """One hidden layer perceptron: Linear -> act -> Linear."""

    def __init__(self, n_in, n_hidden, n_out, rng=None, act="tanh"):
        rng = as_rng(rng)
        self.l1 = Linear(n_in, n_hidden, rng)
        self.l2 = Linear(n_hidden, n_out, rng)
        self._act = activation(act)
        self.n_in, self.n_out = n_in, n_out

    def __call__(self, x):
        return self.l2(self._act(self.l1(x)))
