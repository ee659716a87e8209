"""Exception types shared across the package."""


class GraphError(ValueError):
    """Malformed graph data: unknown nodes, duplicate edges, bad features."""


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class ConfigError(ValueError):
    """Invalid experiment configuration or CLI arguments."""


class NumericError(ArithmeticError):
    """A numerical routine failed (singular system, non-convergence, NaN)."""


class ConvergenceError(NumericError):
    pass
