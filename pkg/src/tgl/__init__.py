"""Temporal graph learning from first principles: graph data structures,
graph signal processing, a small autodiff engine, spatial and temporal
neural layers, graph autoencoders and classical forecasting baselines."""
from .ad import Tensor, backward, gradcheck
from .errors import ConfigError, ConvergenceError, GraphError, NumericError, ShapeError
from .graph import GraphSnapshot, TemporalGraph

__all__ = [
    "Tensor", "backward", "gradcheck", "ConfigError", "ConvergenceError", "GraphError",
    "NumericError", "ShapeError", "GraphSnapshot", "TemporalGraph",
]
__version__ = "0.1.0"
