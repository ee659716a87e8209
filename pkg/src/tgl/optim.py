"""Adam, as a pure step function and as a small stateful wrapper."""
import numpy as np

from .errors import ShapeError


def adam_step(params, grads, state, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
    """One Adam update.

    ``params`` and ``grads`` map names to arrays; a name missing from
    ``grads`` is treated as a zero gradient. ``state`` holds the step count
    and both moment estimates and is updated in place. Returns a new dict of
    parameter arrays; the inputs are not modified.
    """
    b1, b2 = betas
    t = state.get("t", 0) + 1
    state["t"] = t
    m = state.setdefault("m", {})
    v = state.setdefault("v", {})
    out = {}
    for name, p in params.items():
        p = np.asarray(p, dtype=np.float64)
        g = grads.get(name)
        g = np.zeros_like(p) if g is None else np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, param {p.shape}")
        m[name] = b1 * m.get(name, 0.0) + (1 - b1) * g
        v[name] = b2 * v.get(name, 0.0) + (1 - b2) * g * g
        m_hat = m[name] / (1 - b1 ** t)
        v_hat = v[name] / (1 - b2 ** t)
        out[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return out


class Adam:
    def __init__(self, named_params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = dict(named_params)
        self.lr, self.betas, self.eps = lr, betas, eps
        self.state = {}

    def step(self, grads):
        """Apply gradients keyed by the parameter tensors themselves."""
        by_name = {n: grads[p] for n, p in self.params.items() if p in grads}
        new = adam_step({n: p.data for n, p in self.params.items()}, by_name,
                        self.state, self.lr, self.betas, self.eps)
        for n, p in self.params.items():
            p.data[...] = new[n]
