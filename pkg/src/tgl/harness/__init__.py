"""Synthetic data, task registry, metrics and the command-line interface."""
from .cluster import kmeans
from .generators import gen_dynamic_edges, gen_graph_var, two_cluster_graphs
from .metrics import accuracy, adjusted_rand_index, auc, gaussian_nll, metrics, mse
from .tasks import TASKS, ExperimentConfig, MetricsReport, run_task

__all__ = [
    "kmeans", "gen_dynamic_edges", "gen_graph_var", "two_cluster_graphs", "accuracy",
    "adjusted_rand_index", "auc", "gaussian_nll", "metrics", "mse", "TASKS",
    "ExperimentConfig", "MetricsReport", "run_task",
]
