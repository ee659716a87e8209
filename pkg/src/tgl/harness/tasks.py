"""Experiment configs, chronological splits and the task registry."""
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import ad, classical, gae, tgnn
from ..errors import ConfigError, NumericError
from ..graph import align, read_jsonl
from .cluster import kmeans
from .generators import gen_dynamic_edges, gen_graph_var
from .metrics import accuracy, adjusted_rand_index, auc, gaussian_nll, mse

TASKS = {
    # task name: (TGNN head, primary metric)
    "node_regression": ("regression", "mse"),
    "edge_regression": ("edge_regression", "mse"),
    "node_classification": ("classification", "accuracy"),
    "graph_classification": ("graph", "accuracy"),
    "link_prediction": ("link", "auc"),
    "node_clustering": ("regression", "ari"),
    "graph_clustering": ("gae", "ari"),
    "lde": ("gae", "reconstruction_nll"),
}
MODEL_KINDS = ("tgnn", "gae", "arima", "var")
DATA_DEFAULTS = {
    "var": {"n": 20, "t": 300, "p_edge": 0.1, "phi_scale": 0.95, "sigma": 1.0, "d": 1},
    "dyn-edges": {"n": 20, "t": 120, "flip_rate": 0.05, "p_edge": 0.3},
}


@dataclass
class ExperimentConfig:
    task: str
    model: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    window: int = 4
    horizon: int = 1
    split: tuple = (0.7, 0.1, 0.2)
    seed: int = 0
    optimizer: dict = field(default_factory=lambda: {"lr": 0.01, "epochs": 200})
    baselines: list = field(default_factory=list)
    output: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {sorted(TASKS)}")
        self.model = dict(self.model)
        kind = self.model.setdefault("kind", "gae" if TASKS[self.task][0] == "gae" else "tgnn")
        if kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {kind!r}")
        if TASKS[self.task][0] == "gae" and kind != "gae":
            raise ConfigError(f"task {self.task} needs a gae model")
        if kind in ("arima", "var") and self.task != "node_regression":
            raise ConfigError(f"classical model {kind} only supports node_regression")
        if kind == "gae" and TASKS[self.task][0] != "gae":
            raise ConfigError(f"gae model does not support task {self.task}")
        self.split = tuple(float(s) for s in self.split)
        if len(self.split) != 3 or min(self.split) < 0 or abs(sum(self.split) - 1) > 1e-9:
            raise ConfigError("split must be three nonnegative fractions summing to 1")
        if self.split[0] == 0 or self.split[2] == 0:
            raise ConfigError("train and test fractions must be positive")
        if self.window < 1 or self.horizon < 1:
            raise ConfigError("window and horizon must be at least 1")
        for b in self.baselines:
            if b not in ("arima", "var"):
                raise ConfigError(f"unknown baseline {b!r}")
        self.data = dict(self.data)
        if "path" not in self.data:
            kind = self.data.setdefault("kind", "dyn-edges" if self.task == "link_prediction" else "var")
            if kind not in DATA_DEFAULTS:
                raise ConfigError(f"unknown generator {kind!r}")
            for k, v in DATA_DEFAULTS[kind].items():
                self.data.setdefault(k, v)
            self.data.setdefault("seed", self.seed)
            if kind == "var" and self.task in ("node_classification", "node_clustering"):
                self.data.setdefault("communities", 2)

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "task" not in d:
            raise ConfigError("config needs a task")
        return cls(**d)

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
        cfg = cls.from_dict(d)
        cfg.output = {k: str((path.parent / v)) for k, v in cfg.output.items()}
        if "path" in cfg.data:
            cfg.data["path"] = str(path.parent / cfg.data["path"])
        return cfg

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in self.__dict__.items() if k != "output"}

    def hash(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class MetricsReport:
    task: str
    metrics: dict
    losses: list
    config_hash: str
    wall_clock: float = 0.0

    def csv(self):
        """``metric,value`` rows; wall-clock time is left out so reruns are
        byte-identical."""
        rows = ["metric,value", f"config_hash,{self.config_hash}", f"task,{self.task}"]
        rows += [f"{k},{float(v)!r}" for k, v in sorted(self.metrics.items())]
        return "\n".join(rows) + "\n"

    def write_csv(self, path):
        Path(path).write_text(self.csv())


# ---------------------------------------------------------------- data and splits

def load_data(cfg: ExperimentConfig):
    d = cfg.data
    if "path" in d:
        return read_jsonl(d["path"])
    if d["kind"] == "var":
        return gen_graph_var(d["n"], d["t"], d["p_edge"], d["phi_scale"], d["sigma"], d["seed"],
                             d.get("d", 1), d.get("communities"))
    return gen_dynamic_edges(d["n"], d["t"], d["flip_rate"], d["seed"], d["p_edge"])


@dataclass
class Split:
    train: list
    val: list
    test: list


def chronological_split(n_snapshots, window, horizon, fractions):
    """Window end positions grouped by where their target position falls.

    Targets in the first ``train`` fraction of the timeline train the model,
    the next block validates, the last block tests.
    """
    ends = list(range(window - 1, n_snapshots - horizon))
    if not ends:
        raise ConfigError(f"need at least window + horizon = {window + horizon} snapshots")
    n_train = int(round(fractions[0] * n_snapshots))
    n_val = int(round(fractions[1] * n_snapshots))
    split = Split([], [], [])
    for i in ends:
        tgt = i + horizon
        (split.train if tgt < n_train else split.val if tgt < n_train + n_val else split.test).append(i)
    if not split.train or not split.test:
        raise ConfigError("split leaves no training or no test windows")
    return split


def assert_chronological(tg, split, horizon):
    train_t = max(tg[i + horizon].t for i in split.train)
    test_t = min(tg[i + horizon].t for i in split.test)
    if not train_t < test_t:
        raise AssertionError("training targets overlap the test period")


# ---------------------------------------------------------------- task runners

def _tgnn_config(cfg, n_feat, head, **extra):
    spec = {k: v for k, v in cfg.model.items() if k not in ("kind", "clusters")}
    spec.setdefault("seed", cfg.seed)
    spec.update(extra)
    spec["head"] = head
    try:
        return tgnn.TgnnConfig(n_feat=n_feat, **spec)
    except TypeError as exc:
        raise ConfigError(f"bad tgnn model spec: {exc}") from None


def _opt(cfg):
    return cfg.optimizer.get("epochs", 200), cfg.optimizer.get("lr", 0.01)


def _fit_tgnn(cfg, model, A, X, ends, loss_fn):
    epochs, lr = _opt(cfg)
    Aw, Xw = tgnn.stack_windows(A, X, ends, cfg.window)
    return tgnn.train_model(model, Aw, Xw, loss_fn, epochs, lr)


def _predict(model, A, X, ends, window):
    Aw, Xw = tgnn.stack_windows(A, X, ends, window)
    return model.forward(Aw, Xw), Aw, Xw


def _classical_baselines(cfg, X, split, results, kinds=None):
    """Per-node ARIMA and stacked VAR fitted on everything before the test period."""
    h = cfg.horizon
    cutoff = split.test[0] + 1        # history available to the first test window
    T, n, d = X.shape
    targets = np.stack([X[i + h] for i in split.test])
    for kind in cfg.baselines if kinds is None else kinds:
        if kind == "arima":
            order = cfg.model.get("order", (1, 0, 0)) if cfg.model["kind"] == "arima" else (1, 0, 0)
            models = [[classical.arima_fit(X[:cutoff, v, c], *order) for c in range(d)] for v in range(n)]
            preds = np.stack([[[classical.arima_forecast(models[v][c], X[:i + 1, v, c], h)[-1]
                                for c in range(d)] for v in range(n)] for i in split.test])
        else:
            p = cfg.model.get("p", 1) if cfg.model["kind"] == "var" else 1
            vm = classical.var_fit(X[:cutoff].reshape(cutoff, n * d), p)
            preds = np.stack([classical.var_forecast(vm, X[:i + 1].reshape(i + 1, n * d), h)[-1]
                              .reshape(n, d) for i in split.test])
        results[f"{kind}_test_mse"] = mse(preds, targets)


def _run_regression(cfg, tg, split):
    ids, A, X = align(list(tg))
    h, W = cfg.horizon, cfg.window
    res, losses = {}, []
    kind = cfg.model["kind"]
    if kind in ("arima", "var"):
        _classical_baselines(cfg, X, split, res, sorted(set(cfg.baselines) | {kind}))
        res["test_mse"] = res[f"{kind}_test_mse"]
        return res, losses, None
    head = "gaussian" if cfg.model.get("head") == "gaussian" else "regression"
    model = tgnn.TgnnModel(_tgnn_config(cfg, X.shape[-1], head))
    Y = np.stack([X[i + h] for i in split.train])

    def loss(m, Aw, Xw):
        H, _ = m.forward(Aw, Xw)
        out = m.head_output(H)
        return tgnn.gaussian_nll(*out, Y) if head == "gaussian" else tgnn.mse_loss(out, Y)

    losses = _fit_tgnn(cfg, model, A, X, split.train, loss)
    for name, ends in (("val", split.val), ("test", split.test)):
        if not ends:
            continue
        (H, _), _, _ = _predict(model, A, X, ends, W)
        out = model.head_output(H)
        tgt = np.stack([X[i + h] for i in ends])
        if head == "gaussian":
            res[f"{name}_nll"] = gaussian_nll(out[0].numpy(), out[1].numpy(), tgt)
            out = out[0]
        res[f"{name}_mse"] = mse(out.numpy(), tgt)
    _classical_baselines(cfg, X, split, res)
    return res, losses, model


def _run_edge_regression(cfg, tg, split):
    ids, A, X = align(list(tg))
    h = cfg.horizon
    pos = {v: i for i, v in enumerate(ids)}

    def targets(i):
        g = tg[i + h]
        if g.w is None:
            raise ConfigError("edge regression needs edge features")
        u = np.array([pos[a] for a, _ in g.edges], dtype=int)
        v = np.array([pos[b] for _, b in g.edges], dtype=int)
        return (u, v), g.w

    model = tgnn.TgnnModel(_tgnn_config(cfg, X.shape[-1], "edge_regression",
                                        out_dim=tg[split.train[0] + h].w.shape[1]))

    def window_loss(m, ends):
        H, _ = m.forward(*tgnn.stack_windows(A, X, ends, cfg.window))
        preds, tgts = [], []
        for b, i in enumerate(ends):
            pairs, w = targets(i)
            preds.append(m.head_output(H[b], pairs=pairs))
            tgts.append(w)
        return ad.concat(preds, axis=0), np.concatenate(tgts)

    epochs, lr = _opt(cfg)
    losses = tgnn.train_model(model, None, None,
                              lambda m, *_: tgnn.mse_loss(*window_loss(m, split.train)), epochs, lr)
    res = {}
    for name, ends in (("val", split.val), ("test", split.test)):
        if ends:
            p, t = window_loss(model, ends)
            res[f"{name}_mse"] = mse(p.numpy(), t)
    return res, losses, model


def _run_node_classification(cfg, tg, split):
    ids, A, X = align(list(tg))
    h = cfg.horizon
    labels = lambda ends: np.stack([tg[i + h].y for i in ends])  # noqa: E731
    n_classes = int(max(np.max(s.y) for s in tg if s.y is not None)) + 1
    model = tgnn.TgnnModel(_tgnn_config(cfg, X.shape[-1], "classification", n_classes=n_classes))
    Y = labels(split.train)
    losses = _fit_tgnn(cfg, model, A, X, split.train,
                       lambda m, Aw, Xw: tgnn.cross_entropy(m.head_output(m.forward(Aw, Xw)[0]), Y))
    res = {}
    for name, ends in (("val", split.val), ("test", split.test)):
        if ends:
            (H, _), _, _ = _predict(model, A, X, ends, cfg.window)
            res[f"{name}_accuracy"] = accuracy(model.head_output(H).numpy(), labels(ends))
    return res, losses, model


def _run_graph_classification(cfg, tg, split):
    ids, A, X = align(list(tg))
    h = cfg.horizon
    labels = lambda ends: np.array([tg[i + h].g for i in ends])  # noqa: E731
    n_classes = int(max(s.g for s in tg if s.g is not None)) + 1
    model = tgnn.TgnnModel(_tgnn_config(cfg, X.shape[-1], "graph", n_classes=max(n_classes, 2)))
    Y = labels(split.train)

    def loss(m, Aw, Xw):
        H, hG = m.forward(Aw, Xw)
        return tgnn.cross_entropy(m.head_output(H, hG), Y)

    losses = _fit_tgnn(cfg, model, A, X, split.train, loss)
    res = {}
    for name, ends in (("val", split.val), ("test", split.test)):
        if ends:
            (H, hG), _, _ = _predict(model, A, X, ends, cfg.window)
            res[f"{name}_accuracy"] = accuracy(model.head_output(H, hG).numpy(), labels(ends))
    return res, losses, model


def _run_link_prediction(cfg, tg, split):
    ids, A, X = align(list(tg))
    h = cfg.horizon
    model = tgnn.TgnnModel(_tgnn_config(cfg, X.shape[-1], "link"))
    rng = np.random.default_rng(cfg.seed)
    samples = [tgnn.sample_link_pairs(A[i + h], rng) for i in split.train]
    b_idx = np.concatenate([np.full(len(s[0]), b) for b, s in enumerate(samples)])
    u_idx = np.concatenate([s[0] for s in samples])
    v_idx = np.concatenate([s[1] for s in samples])
    y = np.concatenate([s[2] for s in samples])

    def loss(m, Aw, Xw):
        logits = m.head_output(m.forward(Aw, Xw)[0])
        return tgnn.bce_with_logits(logits[b_idx, u_idx, v_idx], y)

    losses = _fit_tgnn(cfg, model, A, X, split.train, loss)
    res = {}
    iu = np.triu_indices(A.shape[1], 1)
    for name, ends in (("val", split.val), ("test", split.test)):
        if ends:
            (H, _), _, _ = _predict(model, A, X, ends, cfg.window)
            P = ad.sigmoid(model.head_output(H)).numpy()
            scores = np.concatenate([P[b][iu] for b in range(len(ends))])
            truth = np.concatenate([(A[i + h][iu] != 0).astype(float) for i in ends])
            res[f"{name}_auc"] = auc(scores, truth)
    return res, losses, model


def _run_node_clustering(cfg, tg, split):
    """Self-supervised forecasting, then k-means on test-period node states."""
    res, losses, model = _run_regression(cfg, tg, split)
    ids, A, X = align(list(tg))
    (H, _), _, _ = _predict(model, A, X, split.test, cfg.window)
    emb = H.numpy().mean(axis=0)
    planted = tg[split.test[-1] + cfg.horizon].y
    k = int(cfg.model.get("clusters", len(np.unique(planted))))
    res = {f"forecast_{k_}": v for k_, v in res.items()}
    res["test_ari"] = adjusted_rand_index(kmeans(emb, k, cfg.seed), planted)
    return res, losses, model


def build_gae(cfg, tg):
    n_max = max(g.n for g in tg)
    d = max(g.x.shape[1] for g in tg if g.x is not None)
    spec = cfg.model
    return gae.GaeModel(n_max, d, spec.get("latent", 4), spec.get("hidden", 16),
                        spec.get("layers", 2), rng=cfg.seed)


def _run_gae(cfg, tg, split):
    """Unsupervised: train on training snapshots, evaluate on test snapshots."""
    n = len(tg)
    n_train = int(round(cfg.split[0] * n))
    n_test_start = n_train + int(round(cfg.split[1] * n))
    train = [tg[i] for i in range(n_train)]
    test = [tg[i] for i in range(n_test_start, n)]
    if not train or not test:
        raise ConfigError("split leaves no training or no test snapshots")
    if not max(g.t for g in train) < min(g.t for g in test):
        raise AssertionError("training snapshots overlap the test period")
    model = build_gae(cfg, tg)
    epochs, lr = _opt(cfg)
    losses = gae.train_gae(model, train, epochs, lr, seed=cfg.seed)
    A, Xp, M = gae._stack(model, test)
    mu, logvar = model.encode(A, Xp)
    E, x_hat = model.decode(mu)
    res = {"test_reconstruction_nll": gae.reconstruction_nll(E, x_hat, A, Xp, M).item() / len(test),
           "test_kl": gae.kl_diag_gaussian(mu, logvar).item() / len(test),
           "latent_dim": float(model.latent)}
    if cfg.task == "graph_clustering":
        labels = np.array([g.g for g in test])
        if any(v is None for v in labels):
            raise ConfigError("graph clustering needs planted graph labels g")
        k = int(cfg.model.get("clusters", max(2, len(np.unique(labels)))))
        res["test_ari"] = adjusted_rand_index(kmeans(mu.numpy(), k, cfg.seed), labels)
    return res, losses, model


RUNNERS = {
    "node_regression": _run_regression,
    "edge_regression": _run_edge_regression,
    "node_classification": _run_node_classification,
    "graph_classification": _run_graph_classification,
    "link_prediction": _run_link_prediction,
    "node_clustering": _run_node_clustering,
    "graph_clustering": _run_gae,
    "lde": _run_gae,
}


def run_task(cfg, tg=None, return_model=False):
    """Train and evaluate one configured experiment."""
    if isinstance(cfg, dict):
        cfg = ExperimentConfig.from_dict(cfg)
    start = time.perf_counter()
    tg = load_data(cfg) if tg is None else tg
    split = chronological_split(len(tg), cfg.window, cfg.horizon, cfg.split)
    assert_chronological(tg, split, cfg.horizon)
    res, losses, model = RUNNERS[cfg.task](cfg, tg, split)
    if losses:
        res["final_train_loss"] = losses[-1]
    bad = [k for k, v in res.items() if not np.isfinite(v)]
    if bad:
        raise NumericError(f"non-finite metrics: {bad}")
    report = MetricsReport(cfg.task, res, losses, cfg.hash(), time.perf_counter() - start)
    return (report, model) if return_model else report


def evaluate_checkpoint(cfg, model, tg=None):
    """Test-split metrics of a trained TGNN for the configured task."""
    tg = load_data(cfg) if tg is None else tg
    split = chronological_split(len(tg), cfg.window, cfg.horizon, cfg.split)
    assert_chronological(tg, split, cfg.horizon)
    ids, A, X = align(list(tg))
    h = cfg.horizon
    (H, hG), _, _ = _predict(model, A, X, split.test, cfg.window)
    head = model.config.head
    if head == "regression":
        res = {"test_mse": mse(model.head_output(H).numpy(), np.stack([X[i + h] for i in split.test]))}
    elif head == "gaussian":
        mu, lv = model.head_output(H)
        tgt = np.stack([X[i + h] for i in split.test])
        res = {"test_mse": mse(mu.numpy(), tgt), "test_nll": gaussian_nll(mu.numpy(), lv.numpy(), tgt)}
    elif head == "classification":
        res = {"test_accuracy": accuracy(model.head_output(H).numpy(),
                                         np.stack([tg[i + h].y for i in split.test]))}
    elif head == "graph":
        res = {"test_accuracy": accuracy(model.head_output(H, hG).numpy(),
                                         np.array([tg[i + h].g for i in split.test]))}
    elif head == "link":
        iu = np.triu_indices(A.shape[1], 1)
        P = ad.sigmoid(model.head_output(H)).numpy()
        res = {"test_auc": auc(np.concatenate([P[b][iu] for b in range(len(split.test))]),
                               np.concatenate([(A[i + h][iu] != 0) for i in split.test]).astype(float))}
    else:
        raise ConfigError(f"evaluation of {head} heads from a checkpoint is not supported")
    return MetricsReport(cfg.task, res, [], cfg.hash())
