"""Lloyd's k-means with deterministic seeding."""
import numpy as np

from ..errors import ConfigError


def kmeans(points, k, seed=0, max_iter=300, return_history=False):
    """Cluster rows of ``points``; returns integer assignments.

    Centers start at ``k`` distinct rows drawn with ``seed``. An empty
    cluster is reseeded at the point farthest from its current center.
    With ``return_history`` the within-cluster sum of squares after every
    iteration is returned as well.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if k < 1:
        raise ConfigError("k must be at least 1")
    if k > len(X):
        raise ConfigError(f"k={k} exceeds the number of points ({len(X)})")
    rng = np.random.default_rng(seed)
    centers = X[rng.choice(len(X), size=k, replace=False)].copy()
    labels = None
    history = []
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centers[None]) ** 2).sum(-1)
        new = np.argmin(d2, axis=1)
        dist = d2[np.arange(len(X)), new]
        for c in range(k):
            if not np.any(new == c):
                far = int(np.argmax(dist))
                new[far] = c
                dist[far] = -1.0
        for c in range(k):
            centers[c] = X[new == c].mean(axis=0)
        history.append(float(((X - centers[new]) ** 2).sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
    return (labels, history) if return_history else labels
