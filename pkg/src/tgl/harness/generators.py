"""Seeded synthetic temporal graphs."""
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..errors import ConfigError
from ..gnn import gcn_propagation
from ..graph import GraphSnapshot, TemporalGraph
from ..linalg import symmetric_eig


def worker_count():
    """Thread cap for per-snapshot generation, from ``TGL_THREADS``."""
    try:
        return max(1, int(os.environ.get("TGL_THREADS", "1")))
    except ValueError:
        raise ConfigError("TGL_THREADS must be an integer") from None


def _edge_list(A):
    iu, ju = np.nonzero(np.triu(A, 1))
    return [(int(u), int(v)) for u, v in zip(iu, ju)]


def random_graph(n, p_edge, rng, communities=None):
    """Undirected Erdos-Renyi graph, or a planted-partition graph when
    ``communities`` is given (within-block probability 2p, across p/4)."""
    if communities:
        labels = np.arange(n) % communities
        same = labels[:, None] == labels[None, :]
        P = np.where(same, min(1.0, 2 * p_edge), p_edge / 4)
    else:
        labels = np.zeros(n, dtype=int)
        P = np.full((n, n), p_edge)
    A = np.triu((rng.random((n, n)) < P).astype(float), 1)
    return A + A.T, labels


def _noise(seeds, shape, sigma):
    def draw(ss):
        return sigma * np.random.default_rng(ss).standard_normal(shape)

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        return list(pool.map(draw, seeds))


def gen_graph_var(n, T, p_edge=0.1, phi_scale=0.95, sigma=1.0, seed=0, d=1, communities=None):
    """Fixed graph, node signals X_{t+1} = Phi X_t + (I - Phi) mu + eps.

    Phi = phi_scale * A~ / lambda_max(A~) with A~ = I + D^-1/2 A D^-1/2, so
    its spectral radius equals ``phi_scale``. ``mu`` is a per-community
    offset (zero without communities). Labels: ``y`` community, ``z`` 1 for
    edges across communities, ``g`` whether the mean signal is positive.
    Edge feature ``w`` is the mean of the endpoint signals (channel 0).
    """
    if not 0.0 <= phi_scale < 1.0:
        raise ConfigError("phi_scale must lie in [0, 1) for a stable process")
    if n < 1 or T < 1 or sigma < 0 or not 0.0 <= p_edge <= 1.0:
        raise ConfigError("n, T must be positive, sigma nonnegative, p_edge in [0, 1]")
    root = np.random.SeedSequence(seed)
    graph_ss, init_ss, noise_ss = root.spawn(3)
    rng = np.random.default_rng(graph_ss)
    A, labels = random_graph(n, p_edge, rng, communities)
    At = gcn_propagation(A)
    lam = symmetric_eig(At)[0][-1]
    Phi = phi_scale * At / lam
    mu = np.zeros((n, d))
    if communities:
        mu += np.where(labels % 2 == 0, 1.0, -1.0)[:, None] * (1 + labels[:, None] // 2)
    drift = (np.eye(n) - Phi) @ mu
    eps = _noise(noise_ss.spawn(T), (n, d), sigma)
    X = np.empty((T, n, d))
    X[0] = mu + np.random.default_rng(init_ss).standard_normal((n, d))
    for t in range(1, T):
        X[t] = Phi @ X[t - 1] + drift + eps[t]
    edges = _edge_list(A)
    eu = np.array([e[0] for e in edges], dtype=int)
    ev = np.array([e[1] for e in edges], dtype=int)
    z = (labels[eu] != labels[ev]).astype(int) if edges else None
    snaps = []
    for t in range(T):
        w = 0.5 * (X[t][eu, :1] + X[t][ev, :1]) if edges else None
        snaps.append(GraphSnapshot(t=t, nodes=list(range(n)), edges=edges, x=X[t], w=w,
                                   y=labels.copy(), z=z, g=int(X[t].mean() > 0)))
    return TemporalGraph(snaps, meta={"Phi": Phi, "A": A, "communities": labels})


def gen_dynamic_edges(n, T, flip_rate=0.05, seed=0, p_edge=0.3):
    """Edges toggle independently per step with probability ``flip_rate``.

    Node features are the previous-step degree fraction and a seeded
    per-node constant.
    """
    if not 0.0 <= flip_rate <= 1.0:
        raise ConfigError("flip_rate must lie in [0, 1]")
    root = np.random.SeedSequence(seed)
    graph_ss, feat_ss, flip_ss = root.spawn(3)
    A, _ = random_graph(n, p_edge, np.random.default_rng(graph_ss))
    ident = np.random.default_rng(feat_ss).standard_normal(n)
    iu = np.triu_indices(n, 1)

    def flips(ss):
        return np.random.default_rng(ss).random(len(iu[0])) < flip_rate

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        masks = list(pool.map(flips, flip_ss.spawn(T)))
    snaps, prev_deg = [], A.sum(1)
    for t in range(T):
        if t:
            upper = A[iu] != 0
            upper ^= masks[t]
            A = np.zeros((n, n))
            A[iu] = upper
            A = A + A.T
        x = np.stack([prev_deg / max(n - 1, 1), ident], axis=1)
        snaps.append(GraphSnapshot(t=t, nodes=list(range(n)), edges=_edge_list(A), x=x))
        prev_deg = A.sum(1)
    return TemporalGraph(snaps)


def two_cluster_graphs(count, n, flip=0.03, seed=0, d=2):
    """Graphs drawn around two random templates (for autoencoder training).

    Sample i uses template i % 2 with each pair toggled with probability
    ``flip``; features are the template id plus small noise. ``g`` holds the
    template id.
    """
    rng = np.random.default_rng(seed)
    templates = [random_graph(n, 0.5, rng)[0] for _ in range(2)]
    iu = np.triu_indices(n, 1)
    out = []
    for i in range(count):
        k = i % 2
        upper = (templates[k][iu] != 0) ^ (rng.random(len(iu[0])) < flip)
        A = np.zeros((n, n))
        A[iu] = upper
        x = np.full((n, d), float(k)) + 0.1 * rng.standard_normal((n, d))
        out.append(GraphSnapshot(t=i, nodes=list(range(n)), edges=_edge_list(A + A.T), x=x, g=k))
    return out
