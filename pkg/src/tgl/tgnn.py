"""Temporal GNNs: a spatial GNN stack feeding a temporal encoder (embedding
evolution) or a GCN whose weights are themselves evolved by a GRU (model
evolution), followed by a task head.

Windows are dense arrays ``A`` of shape (B, W, n, n) and ``X`` of shape
(B, W, n, d): batch of windows, W consecutive snapshots, aligned node rows.
Unbatched (W, n, n) / (W, n, d) inputs are accepted and returned unbatched.
"""
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import ad
from .ad import Tensor
from .errors import ConfigError, NumericError, ShapeError
from .gnn import GNNLayerSpec, GraphReadout, build_layer, gcn_layer
from .graph import align
from .nn import Linear, Module, as_rng
from .optim import Adam
from .seq import GRUCell, LSTMCell, MultiHeadAttention, gru_cell, positional_encoding, temporal_conv

TEMPORAL_KINDS = ("gru", "lstm", "tcn", "attention")
HEAD_KINDS = ("regression", "classification", "link", "graph", "gaussian", "edge_regression")


@dataclass
class TgnnConfig:
    n_feat: int
    spatial: list = field(default_factory=lambda: [GNNLayerSpec("gcn", 16), GNNLayerSpec("gcn", 16)])
    temporal: str = "gru"
    hidden: int = 16
    head: str = "regression"
    out_dim: int = 0            # 0 means "same as n_feat" for regression heads
    n_classes: int = 2
    evolution: str = "embedding"
    skip: bool = True           # feed [X, layer outputs...] to the temporal encoder
    tcn_kernel: int = 2
    heads: int = 2
    seed: int = 0

    def __post_init__(self):
        self.spatial = [s if isinstance(s, GNNLayerSpec) else GNNLayerSpec(**s) for s in self.spatial]
        if self.temporal not in TEMPORAL_KINDS:
            raise ConfigError(f"temporal encoder must be one of {TEMPORAL_KINDS}, got {self.temporal!r}")
        if self.head not in HEAD_KINDS:
            raise ConfigError(f"head must be one of {HEAD_KINDS}, got {self.head!r}")
        if self.evolution not in ("embedding", "model"):
            raise ConfigError(f"unknown evolution mode {self.evolution!r}")
        if not self.spatial:
            raise ConfigError("need at least one spatial layer")
        if self.evolution == "model" and any(s.kind != "gcn" for s in self.spatial):
            raise ConfigError("model evolution is implemented for GCN stacks only")
        if self.temporal == "attention" and self.hidden % 2:
            raise ConfigError("attention encoder needs an even hidden width")

    def to_dict(self):
        d = asdict(self)
        d["spatial"] = [asdict(s) for s in self.spatial]
        return d

    def hash(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def _as_batch(A, X):
    A = np.asarray(A, dtype=np.float64)
    X = X.data if isinstance(X, Tensor) else np.asarray(X, dtype=np.float64)
    if A.ndim == 3:
        return A[None], X[None], True
    if A.ndim != 4 or X.ndim != 4:
        raise ShapeError(f"expected (B, W, n, n) and (B, W, n, d) windows, got {A.shape} and {X.shape}")
    return A, X, False


def _check_window(A, X):
    if A.shape[1] < 1:
        raise ValueError("window must contain at least one snapshot")
    if A.shape[:2] != X.shape[:2] or A.shape[2] != A.shape[3] or A.shape[2] != X.shape[2]:
        raise ShapeError(f"window arrays disagree: A {A.shape}, X {X.shape}")


class TgnnModel(Module):
    def __init__(self, config: TgnnConfig):
        self.config = cfg = config
        rng = as_rng(cfg.seed)
        width = cfg.n_feat
        self.spatial = []
        for spec in cfg.spatial:
            self.spatial.append(build_layer(spec, width, rng))
            width = spec.width
        s = (cfg.n_feat if cfg.skip else 0) + (sum(sp.width for sp in cfg.spatial) if cfg.skip else width)
        self.embed_width = s
        h = cfg.hidden
        if cfg.temporal == "gru":
            self.cell = GRUCell(s, h, rng)
        elif cfg.temporal == "lstm":
            self.cell = LSTMCell(s, h, rng)
        elif cfg.temporal == "tcn":
            lim = np.sqrt(6.0 / (cfg.tcn_kernel * s + h))
            self.tcn_W = Tensor(rng.uniform(-lim, lim, (cfg.tcn_kernel, s, h)), requires_grad=True)
            self.tcn_b = Tensor(np.zeros(h), requires_grad=True)
        else:
            self.att_in = Linear(s, h, rng)
            self.att = MultiHeadAttention(h, cfg.heads, rng)
        if cfg.evolution == "model":
            # one shared GRU per layer acting on the rows of that layer's weight
            self.param_gru = [GRUCell(sp.width, sp.width, rng) for sp in cfg.spatial]
        out = cfg.out_dim or cfg.n_feat
        if cfg.head == "regression":
            self.head = Linear(h, out, rng)
        elif cfg.head == "gaussian":
            self.head = Linear(h, 2 * out, rng)
        elif cfg.head == "classification":
            self.head = Linear(h, cfg.n_classes, rng)
        elif cfg.head == "link":
            self.head = Linear(h, h, rng, bias=False)
        elif cfg.head == "edge_regression":
            self.head = Linear(2 * h, out, rng)
        elif cfg.head == "graph":
            self.readout = GraphReadout(h, cfg.n_feat, h, rng)
            self.head = Linear(h, cfg.n_classes, rng)

    # ---------------------------------------------------------- building blocks

    def spatial_embed(self, A, X, thetas=None):
        """f_S on one time slice: A (B, n, n), X (B, n, d) -> (B, n, s)."""
        Z = ad._t(X)
        outs = [Z]
        for i, layer in enumerate(self.spatial):
            if thetas is None:
                Z = layer(A, Z)
            else:
                Z = gcn_layer(A, Z, thetas[i], layer._act)
            outs.append(Z)
        return ad.concat(outs, axis=-1) if self.config.skip else Z

    def temporal_encode(self, seq, state=None):
        """f_T over a list of (B, n, s) embeddings; returns (H, final state)."""
        cfg = self.config
        B, n = seq[0].shape[:2]
        if cfg.temporal in ("gru", "lstm"):
            h = self.cell.zero_state(B, n) if state is None else state
            for z in seq:
                h = self.cell(h, z)
            return (h[0] if cfg.temporal == "lstm" else h), h
        S = ad.stack(seq, axis=2)  # (B, n, W, s)
        if cfg.temporal == "tcn":
            Y = ad.tanh(temporal_conv(S, self.tcn_W, l=1, causal=True) + self.tcn_b)
            return Y[:, :, -1, :], None
        Z = self.att_in(S) + positional_encoding(len(seq), cfg.hidden)
        Y = self.att(Z)
        return Y[:, :, -1, :], None

    # ---------------------------------------------------------- forward passes

    def forward(self, A, X, state=None):
        """(H_t, h_G or None) for a window; dispatches on the evolution mode."""
        if self.config.evolution == "model":
            return model_evolution_forward(self, A, X)
        return embedding_evolution_forward(self, A, X, state)

    def predict(self, A, X):
        """Head output for the window(s); link heads return probabilities."""
        H, hG = self.forward(A, X)
        out = self.head_output(H, hG)
        return ad.sigmoid(out) if self.config.head == "link" else out

    def head_output(self, H, hG=None, pairs=None):
        cfg = self.config
        if cfg.head in ("regression", "classification"):
            return self.head(H)
        if cfg.head == "gaussian":
            out = self.head(H)
            k = out.shape[-1] // 2
            return out[..., :k], out[..., k:]
        if cfg.head == "link":
            P = self.head(H)
            return ad.matmul(P, ad.transpose(P))
        if cfg.head == "edge_regression":
            if pairs is None:
                raise ValueError("edge head needs endpoint index pairs")
            u, v = pairs
            return self.head(ad.concat([H[..., u, :], H[..., v, :]], axis=-1))
        return self.head(hG)


def embedding_evolution_forward(model, A, X, state=None):
    """h_t = f_T(f_S(G_t), ..., f_S(G_{t-tau})) with a shared spatial stack."""
    A, X, single = _as_batch(A, X)
    _check_window(A, X)
    seq = [model.spatial_embed(A[:, w], X[:, w]) for w in range(A.shape[1])]
    H, _ = model.temporal_encode(seq, state)
    hG = model.readout(H, X[:, -1]) if model.config.head == "graph" else None
    if single:
        H = H[0]
        hG = None if hG is None else hG[0]
    return H, hG


def model_evolution_forward(model, A, X):
    """h_t = f_S(G_t; Theta_t) with Theta_t = GRU(Theta_{t-1}, Theta_{t-1}).

    The parameter GRU of each layer treats the rows of that layer's weight
    matrix as a batch. Theta at the first window step is the learned initial
    weight; the spatial stack is applied to the last snapshot only.
    """
    A, X, single = _as_batch(A, X)
    _check_window(A, X)
    thetas = [layer.Theta for layer in model.spatial]
    for _ in range(A.shape[1] - 1):
        thetas = [gru_cell(cell.params(), th, th) for cell, th in zip(model.param_gru, thetas)]
    Z = model.spatial_embed(A[:, -1], X[:, -1], thetas)
    # no temporal encoder runs over embeddings here; one encoder step from a
    # zero state maps the spatial width onto the hidden width
    H, _ = model.temporal_encode([Z])
    hG = model.readout(H, X[:, -1]) if model.config.head == "graph" else None
    if single:
        H = H[0]
        hG = None if hG is None else hG[0]
    return H, hG


def evolve_parameters(model, steps):
    """Theta after ``steps`` parameter-GRU updates (detached arrays)."""
    thetas = [layer.Theta for layer in model.spatial]
    for _ in range(steps):
        thetas = [gru_cell(cell.params(), th, th) for cell, th in zip(model.param_gru, thetas)]
    return [ad._t(t).numpy() for t in thetas]


# ---------------------------------------------------------------- parameter vectors

def flatten_params(named):
    """Concatenate named arrays into one vector plus the layout to undo it."""
    layout = [(k, tuple(np.shape(v))) for k, v in named.items()]
    flat = np.concatenate([np.ravel(np.asarray(ad._t(v).data)) for v in named.values()]) \
        if named else np.zeros(0)
    return flat, layout


def unflatten_params(flat, layout):
    out, i = {}, 0
    for name, shape in layout:
        size = int(np.prod(shape, dtype=int))
        out[name] = np.asarray(flat[i:i + size]).reshape(shape)
        i += size
    if i != len(flat):
        raise ShapeError(f"vector has {len(flat)} entries, layout needs {i}")
    return out


# ---------------------------------------------------------------- heads and losses

def link_probabilities(H):
    """P(u, v) = sigmoid(h_u . h_v)."""
    H = ad._t(H)
    return ad.sigmoid(ad.matmul(H, ad.transpose(H)))


def gaussian_nll(mu, logvar, target):
    """Mean per-entry negative log-likelihood of ``target`` under N(mu, exp(logvar))."""
    mu, logvar = ad._t(mu), ad._t(logvar)
    r = ad._t(target) - mu
    per = 0.5 * (np.log(2 * np.pi) + logvar + ad.square(r) * ad.exp(-logvar))
    return ad.mean(per)


def mse_loss(pred, target):
    return ad.mean(ad.square(ad._t(pred) - np.asarray(target, dtype=np.float64)))


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy with integer labels on the last axis."""
    logits = ad._t(logits)
    labels = np.asarray(labels, dtype=int)
    onehot = np.zeros(logits.shape)
    np.put_along_axis(onehot, labels[..., None], 1.0, axis=-1)
    return -ad.sum(ad.log_softmax(logits, axis=-1) * onehot) * (1.0 / labels.size)


def bce_with_logits(logits, targets):
    logits = ad._t(logits)
    t = np.asarray(targets, dtype=np.float64)
    return ad.mean(ad.softplus(logits) - t * logits)


def sample_link_pairs(A, rng):
    """Positive pairs (u < v) plus an equal number of uniform non-edges."""
    A = np.asarray(A)
    iu, ju = np.triu_indices(A.shape[0], 1)
    pos = A[iu, ju] != 0
    neg_idx = np.flatnonzero(~pos)
    k = min(int(pos.sum()), len(neg_idx))
    chosen = np.sort(rng.choice(neg_idx, size=k, replace=False)) if k else np.zeros(0, int)
    keep = np.concatenate([np.flatnonzero(pos), chosen])
    labels = np.concatenate([np.ones(int(pos.sum())), np.zeros(k)])
    return iu[keep], ju[keep], labels


# ---------------------------------------------------------------- training and forecasting

def window_arrays(tg, window, horizon, ids=None):
    """Aligned arrays plus every valid (end index, target index) pair.

    Window ending at position ``i`` covers positions i-window+1..i and
    predicts position i+horizon.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    ids, A, X = align(list(tg), ids)
    ends = list(range(window - 1, len(tg) - horizon))
    if not ends:
        raise ValueError(f"need at least window + horizon = {window + horizon} snapshots, have {len(tg)}")
    return ids, A, X, ends


def stack_windows(A, X, ends, window):
    return (np.stack([A[i - window + 1:i + 1] for i in ends]),
            np.stack([X[i - window + 1:i + 1] for i in ends]))


def train_model(model, A_win, X_win, loss_fn, epochs=200, lr=1e-2):
    """Full-batch Adam; ``loss_fn(model, A_win, X_win)`` returns a scalar tensor.

    Each window is an independent truncated sequence: no gradient or state
    crosses window boundaries. Returns the per-epoch losses.
    """
    opt = Adam(model.named_parameters(), lr=lr)
    history = []
    for _ in range(epochs):
        loss = loss_fn(model, A_win, X_win)
        history.append(loss.item())
        if not np.isfinite(history[-1]):
            raise NumericError("training loss became non-finite")
        opt.step(ad.backward(loss))
    return history


def rolling_forecast(model, tg, horizon, window):
    """Predictions for position i+horizon from snapshots at positions <= i.

    Returns ``(target_times, predictions)``; predictions are stacked head
    outputs, one per valid window position.
    """
    _, A, X, ends = window_arrays(tg, window, horizon)
    preds = []
    for i in ends:
        out = model.predict(A[i - window + 1:i + 1], X[i - window + 1:i + 1])
        out = tuple(o.numpy() for o in out) if isinstance(out, tuple) else out.numpy()
        preds.append(out)
    times = [tg[i + horizon].t for i in ends]
    return times, preds


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(model, path, seed=None):
    """``<path>.bin`` holds little-endian float64 arrays back to back;
    ``<path>.json`` lists their names and shapes."""
    path = Path(path)
    state = model.state_dict()
    manifest = {
        "dtype": "<f8",
        "seed": model.config.seed if seed is None else seed,
        "config_hash": model.config.hash(),
        "config": model.config.to_dict(),
        "params": [{"name": k, "shape": list(v.shape)} for k, v in state.items()],
    }
    with open(path.with_suffix(".bin"), "wb") as fh:
        for v in state.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def load_checkpoint(path):
    """Rebuild the model stored at ``path`` and return it with its manifest."""
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    cfg = TgnnConfig(**manifest["config"])
    if cfg.hash() != manifest["config_hash"]:
        raise ConfigError("checkpoint config hash mismatch")
    raw = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
    layout = [(p["name"], tuple(p["shape"])) for p in manifest["params"]]
    model = TgnnModel(cfg)
    model.load_state_dict(unflatten_params(raw, layout))
    return model, manifest
