"""Evaluation metrics."""
import numpy as np

from ..errors import ShapeError


def _pair(preds, targets):
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"predictions {p.shape} and targets {t.shape} differ")
    if p.size == 0:
        raise ValueError("no predictions")
    return p, t


def mse(preds, targets):
    p, t = _pair(preds, targets)
    return float(np.mean((p - t) ** 2))


def accuracy(preds, targets):
    """Fraction of equal labels; ``preds`` may be labels or logits (last axis)."""
    p = np.asarray(preds)
    t = np.asarray(targets)
    if p.ndim == t.ndim + 1:
        p = np.argmax(p, axis=-1)
    p, t = _pair(p, t)
    return float(np.mean(p == t))


def auc(scores, labels):
    """ROC-AUC via average ranks (Mann-Whitney U); ties count one half."""
    s, y = _pair(np.ravel(scores), np.ravel(labels))
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC is undefined with a single class")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s))
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1
        i = j + 1
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def gaussian_nll(mu, logvar, targets):
    """Mean per-entry negative log-likelihood under N(mu, exp(logvar))."""
    m, t = _pair(mu, targets)
    lv, _ = _pair(logvar, targets)
    return float(np.mean(0.5 * (np.log(2 * np.pi) + lv + (t - m) ** 2 * np.exp(-lv))))


def adjusted_rand_index(a, b):
    """Chance-corrected agreement of two labelings (1 = identical partitions)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError("labelings differ in length")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1)

    def comb2(x):
        return x * (x - 1) / 2

    index = comb2(table).sum()
    rows, cols = comb2(table.sum(1)).sum(), comb2(table.sum(0)).sum()
    total = comb2(len(a))
    expected = rows * cols / total if total else 0.0
    max_index = 0.5 * (rows + cols)
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


METRICS = {"mse": mse, "accuracy": accuracy, "auc": auc}


def metrics(preds, targets, kind):
    try:
        return METRICS[kind](preds, targets)
    except KeyError:
        raise ValueError(f"unknown metric {kind!r}") from None
