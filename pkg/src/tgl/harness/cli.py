"""Command-line entry point: ``tgl <subcommand> ...``.

Exit status is 0 on success, 2 for configuration or input errors and 3 for
numeric failures.
"""
import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .. import classical, gae, gsp, tgnn
from ..errors import ConfigError, NumericError
from ..graph import adjacency, align, read_jsonl, write_jsonl
from .generators import gen_dynamic_edges, gen_graph_var
from .tasks import ExperimentConfig, build_gae, evaluate_checkpoint, load_data, run_task

EXIT_CONFIG, EXIT_NUMERIC = 2, 3


def _generate(args):
    p_edge = args.p_edge
    if args.kind == "var":
        tg = gen_graph_var(args.n, args.t, 0.1 if p_edge is None else p_edge, args.phi_scale,
                           args.sigma, args.seed, args.d, args.communities)
    else:
        tg = gen_dynamic_edges(args.n, args.t, args.flip_rate, args.seed, 0.3 if p_edge is None else p_edge)
    write_jsonl(tg, args.out)


def _metrics_path(cfg, override, default="metrics.csv"):
    return Path(override or cfg.output.get("metrics", default))


def _train(args):
    cfg = ExperimentConfig.load(args.config)
    report, model = run_task(cfg, return_model=True)
    report.write_csv(_metrics_path(cfg, args.out))
    ckpt = args.checkpoint or cfg.output.get("checkpoint")
    if ckpt and isinstance(model, tgnn.TgnnModel):
        tgnn.save_checkpoint(model, ckpt)


def _eval(args):
    cfg = ExperimentConfig.load(args.config)
    model, _ = tgnn.load_checkpoint(args.checkpoint)
    report = evaluate_checkpoint(cfg, model)
    report.write_csv(_metrics_path(cfg, args.out, "eval_metrics.csv"))


def _forecast(args):
    tg = read_jsonl(args.input)
    ids, A, X = align(list(tg))
    T, n, d = X.shape
    tau = args.tau
    if args.model == "arima":
        paths = np.stack([[classical.arima_forecast(classical.arima_fit(X[:, v, c], *args.order),
                                                    X[:, v, c], tau) for c in range(d)] for v in range(n)])
        paths = paths.transpose(2, 0, 1)
    elif args.model == "var":
        vm = classical.var_fit(X.reshape(T, n * d), args.p)
        paths = classical.var_forecast(vm, X.reshape(T, n * d), tau).reshape(tau, n, d)
    elif args.model == "kalman":
        # local-level model per series: random-walk state observed with noise
        paths = np.empty((tau, n, d))
        for v in range(n):
            for c in range(d):
                km = classical.KalmanModel(F=1.0, H=1.0, Q=args.q, R=args.r, m=X[0, v, c], P=1.0)
                means, _ = classical.kalman_filter(km, X[:, v, c])
                paths[:, v, c] = means[-1, 0]
    else:
        if not args.checkpoint:
            raise ConfigError("--checkpoint is required for tgnn forecasts")
        model, _ = tgnn.load_checkpoint(args.checkpoint)
        if model.config.head != "regression" or tau != 1:
            raise ConfigError("tgnn forecasts need a regression checkpoint and --tau 1")
        w = min(args.window, T)
        paths = model.predict(A[T - w:], X[T - w:]).numpy()[None]
    with open(args.out, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["step", "node", "channel", "value"])
        for s in range(paths.shape[0]):
            for v in range(n):
                for c in range(d):
                    out.writerow([s + 1, ids[v], c, repr(float(paths[s, v, c]))])


def _spectrum(args):
    tg = read_jsonl(args.input)
    if not -len(tg) <= args.snapshot < len(tg):
        raise ConfigError(f"snapshot index {args.snapshot} out of range")
    g = tg[args.snapshot]
    basis = gsp.build_basis(adjacency(g, weighted=args.weighted), args.shift)
    # row k: k-th eigenvalue followed by its eigenvector, one column per node
    with open(args.out, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["index", "eigenvalue"] + [f"v_{v}" for v in g.nodes])
        for i, lam in enumerate(basis.eigenvalues):
            out.writerow([i, repr(float(lam))] + [repr(float(c)) for c in basis.eigenvectors[:, i]])


def _embed(args):
    cfg = ExperimentConfig.load(args.config)
    if cfg.model.get("kind") != "gae":
        raise ConfigError("embed needs a config with a gae model")
    tg = load_data(cfg)
    model = build_gae(cfg, tg)
    epochs, lr = cfg.optimizer.get("epochs", 200), cfg.optimizer.get("lr", 0.01)
    gae.train_gae(model, list(tg), epochs, lr, seed=cfg.seed)
    with open(args.out, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["t"] + [f"z{i}" for i in range(model.latent)])
        for g in tg:
            out.writerow([g.t] + [repr(float(v)) for v in gae.embed_graph(model, g)])


def build_parser():
    p = argparse.ArgumentParser(prog="tgl", description="Temporal graph learning toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic temporal graph as JSONL")
    g.add_argument("--kind", choices=["var", "dyn-edges"], required=True)
    g.add_argument("--n", type=int, default=20)
    g.add_argument("--t", type=int, default=300)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--p-edge", type=float, help="edge probability (default 0.1 for var, 0.3 for dyn-edges)")
    g.add_argument("--phi-scale", type=float, default=0.95)
    g.add_argument("--sigma", type=float, default=1.0)
    g.add_argument("--d", type=int, default=1)
    g.add_argument("--communities", type=int, default=None)
    g.add_argument("--flip-rate", type=float, default=0.05)
    g.set_defaults(func=_generate)

    t = sub.add_parser("train", help="run an experiment config and write metrics")
    t.add_argument("--config", required=True)
    t.add_argument("--out", help="metrics CSV (overrides the config)")
    t.add_argument("--checkpoint", help="checkpoint path stem (overrides the config)")
    t.set_defaults(func=_train)

    e = sub.add_parser("eval", help="evaluate a saved TGNN checkpoint on the test split")
    e.add_argument("--config", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--out")
    e.set_defaults(func=_eval)

    f = sub.add_parser("forecast", help="forecast every node series tau steps ahead")
    f.add_argument("--model", choices=["arima", "var", "kalman", "tgnn"], required=True)
    f.add_argument("--tau", type=int, default=1)
    f.add_argument("--input", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--order", type=int, nargs=3, default=[1, 0, 0], metavar=("P", "D", "Q"))
    f.add_argument("--p", type=int, default=1, help="VAR order")
    f.add_argument("--q", type=float, default=0.1, help="Kalman process noise")
    f.add_argument("--r", type=float, default=1.0, help="Kalman observation noise")
    f.add_argument("--checkpoint")
    f.add_argument("--window", type=int, default=4)
    f.set_defaults(func=_forecast)

    s = sub.add_parser("spectrum", help="eigenvalues of a snapshot's shift operator")
    s.add_argument("--input", required=True)
    s.add_argument("--shift", choices=["adj", "lap", "nlap"], default="nlap")
    s.add_argument("--snapshot", type=int, default=0)
    s.add_argument("--weighted", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_spectrum)

    m = sub.add_parser("embed", help="train a graph autoencoder and embed every snapshot")
    m.add_argument("--config", required=True)
    m.add_argument("--out", required=True)
    m.set_defaults(func=_embed)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "tau", 1) < 1:
            raise ConfigError("--tau must be at least 1")
        args.func(args)
    except (NumericError, ArithmeticError) as exc:
        print(f"tgl: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"tgl: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
