"""Variational graph autoencoder: reparameterization, Gaussian KL and a
GCN-encoder / perceptron-decoder model over graphs padded to ``n_max`` nodes.

The objective minimized is the negative evidence lower bound,
``E_q[-log p(G | z)] + KL(q(z | G) || N(0, I))``.
"""
import numpy as np

from . import ad
from .ad import Tensor
from .errors import ConfigError, ShapeError
from .gnn import gcn_layer
from .graph import adjacency
from .nn import MLP, Linear, Module, as_rng, glorot
from .optim import Adam
from .seq import GRUCell

LOGVAR_RANGE = (-30.0, 20.0)


def reparameterize(mu, logvar, eps=None, seed=None):
    """z = mu + exp(logvar / 2) * eps with eps ~ N(0, I).

    ``eps`` may be given explicitly; otherwise it is drawn from ``seed``.
    ``logvar`` is clamped to a finite range so a vanishing variance yields
    ``z == mu`` up to rounding.
    """
    mu, logvar = ad._t(mu), ad._t(logvar)
    if mu.shape != logvar.shape:
        raise ShapeError(f"mean {mu.shape} and log-variance {logvar.shape} differ")
    if eps is None:
        eps = as_rng(seed).standard_normal(mu.shape)
    sigma = ad.exp(0.5 * ad.clip(logvar, *LOGVAR_RANGE))
    return mu + sigma * ad._t(eps)


def kl_diag_gaussian(mu, logvar):
    """KL(N(mu, diag exp(logvar)) || N(0, I)) summed over the last axis(es)."""
    mu, logvar = ad._t(mu), ad._t(logvar)
    if mu.shape != logvar.shape:
        raise ShapeError(f"mean {mu.shape} and log-variance {logvar.shape} differ")
    return 0.5 * ad.sum(ad.exp(logvar) + ad.square(mu) - 1.0 - logvar)


def bernoulli_nll(logits, target, mask=None):
    """Sum of -log Bernoulli(target | sigmoid(logits)), computed stably."""
    logits = ad._t(logits)
    target = np.asarray(target, dtype=np.float64)
    per = ad.softplus(logits) - target * logits
    if mask is not None:
        per = per * np.asarray(mask, dtype=np.float64)
    return ad.sum(per)


def pair_mask(n_max, n, directed=False):
    """Entries of the adjacency that carry a Bernoulli likelihood term.

    Undirected graphs use the strict upper triangle (each edge once); directed
    graphs use all off-diagonal pairs. Padded nodes are excluded.
    """
    m = np.zeros((n_max, n_max))
    m[:n, :n] = 1.0 if directed else np.triu(np.ones((n, n)), 1)
    if directed:
        np.fill_diagonal(m, 0.0)
    return m


def reconstruction_nll(edge_logits, x_hat, A, X, mask):
    """Bernoulli adjacency term plus half the squared feature error."""
    feat = 0.5 * ad.sum(ad.square(ad._t(x_hat) - np.asarray(X, dtype=np.float64)))
    return bernoulli_nll(edge_logits, A, mask) + feat


def latent_bound(n, d, n_edges, c):
    """Largest admissible latent width |V|(d+1) + |E|(c+2)."""
    return n * (d + 1) + n_edges * (c + 2)


class GaeModel(Module):
    """Encoder: GCN stack, sum readout, linear maps to (mu, logvar).
    Decoder: perceptron from z to symmetric edge logits and node features.
    """

    def __init__(self, n_max, n_feat, latent, hidden=16, layers=2, rng=None):
        rng = as_rng(rng)
        self.n_max, self.n_feat, self.latent = n_max, n_feat, latent
        widths = [n_feat] + [hidden] * layers
        self.gcn = [Tensor(glorot(rng, a, b), requires_grad=True) for a, b in zip(widths, widths[1:])]
        self.to_mu = Linear(hidden, latent, rng)
        self.to_logvar = Linear(hidden, latent, rng)
        self.decoder = MLP(latent, hidden * 2, n_max * n_max + n_max * n_feat, rng)
        self.seq_gru = GRUCell(latent, latent, rng)

    def pad(self, g):
        if g.n > self.n_max:
            raise ShapeError(f"graph has {g.n} nodes, model holds at most {self.n_max}")
        if g.n and (g.x is None or g.x.shape[1] != self.n_feat):
            got = None if g.x is None else g.x.shape[1]
            raise ShapeError(f"model expects {self.n_feat} node features, graph has {got}")
        A = np.zeros((self.n_max, self.n_max))
        X = np.zeros((self.n_max, self.n_feat))
        A[:g.n, :g.n] = adjacency(g)
        if g.n:
            X[:g.n] = g.x
        return A, X

    def encode(self, A, X):
        """(mu, logvar); ``A``/``X`` may carry a leading batch axis."""
        H = ad._t(X)
        for Theta in self.gcn:
            H = gcn_layer(A, H, Theta, "tanh")
        hG = ad.sum(H, axis=-2)
        return self.to_mu(hG), self.to_logvar(hG)

    def decode(self, z):
        out = self.decoder(z)
        nn2 = self.n_max * self.n_max
        lead = out.shape[:-1]
        E = ad.reshape(out[..., :nn2], (*lead, self.n_max, self.n_max))
        E = 0.5 * (E + ad.transpose(E))
        x_hat = ad.reshape(out[..., nn2:], (*lead, self.n_max, self.n_feat))
        return E, x_hat


def _stack(model, graphs):
    pads = [model.pad(g) for g in graphs]
    A = np.stack([p[0] for p in pads])
    X = np.stack([p[1] for p in pads])
    M = np.stack([pair_mask(model.n_max, g.n, g.directed) for g in graphs])
    return A, X, M


def gae_loss(model, g, z=None, eps=None, seed=None):
    """Negative ELBO for one snapshot or a list of snapshots (summed).

    Returns ``(total, reconstruction, kl)`` as tensors. If ``z`` is given it
    replaces the reparameterized sample; otherwise ``eps``/``seed`` drive it.
    """
    graphs = g if isinstance(g, (list, tuple)) else [g]
    A, X, M = _stack(model, graphs)
    mu, logvar = model.encode(A, X)
    if z is None:
        z = reparameterize(mu, logvar, eps, seed)
    elif np.shape(ad._t(z).data)[-1] != model.latent:
        raise ShapeError(f"latent sample width {np.shape(z)[-1]} != {model.latent}")
    else:
        z = ad.reshape(ad._t(z), mu.shape)
    E, x_hat = model.decode(z)
    recon = reconstruction_nll(E, x_hat, A, X, M)
    kl = kl_diag_gaussian(mu, logvar)
    return recon + kl, recon, kl


def train_gae(model, graphs, epochs=200, lr=1e-2, seed=0):
    """Full-batch Adam on the summed negative ELBO; returns per-epoch
    reconstruction losses."""
    rng = as_rng(seed)
    opt = Adam(model.named_parameters(), lr=lr)
    history = []
    for _ in range(epochs):
        total, recon, _ = gae_loss(model, graphs, seed=rng)
        history.append(recon.item())
        opt.step(ad.backward(total))
    return history


def _check_bound(model, g):
    c = 0 if g.w is None else g.w.shape[1]
    d = 0 if g.x is None else g.x.shape[1]
    bound = latent_bound(g.n, d, len(g.edges), c)
    if model.latent > bound:
        raise ConfigError(f"latent width {model.latent} exceeds the bound {bound} for this graph")


def embed_graph(model, g):
    """Deterministic embedding: the posterior mean."""
    _check_bound(model, g)
    A, X = model.pad(g)
    mu, _ = model.encode(A, X)
    return mu.numpy()


def embed_sequence(model, tg, temporal="gru"):
    """Run the model's GRU over per-snapshot posterior means; final state."""
    if temporal != "gru":
        raise ValueError(f"unsupported temporal encoder {temporal!r}")
    if len(tg) == 0:
        raise ValueError("empty graph sequence")
    h = model.seq_gru.zero_state()
    for g in tg:
        h = model.seq_gru(h, Tensor(embed_graph(model, g)))
    return h.numpy()
