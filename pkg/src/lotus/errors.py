"""Exception hierarchy shared by every lotus module."""


class LotusError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(LotusError, ValueError):
    """Operand shapes are incompatible."""

    def __init__(self, message, *shapes):
        self.shapes = shapes
        super().__init__(message)


class NonFiniteError(LotusError, ValueError):
    """An input matrix contains NaN or Inf."""


class RankDeficiencyError(LotusError, ValueError):
    """A column collapsed during orthonormalization."""

    def __init__(self, column, magnitude, threshold):
        self.column = column
        self.magnitude = magnitude
        self.threshold = threshold
        super().__init__(
            f"rank deficiency at column {column}: |r_jj|={magnitude:.3e} "
            f"below threshold {threshold:.3e}"
        )


class ConvergenceError(LotusError, RuntimeError):
    def __init__(self, message, residual):
        self.residual = residual
        super().__init__(f"{message} (residual {residual:.3e})")


class RankTooLargeError(LotusError, ValueError):
    def __init__(self, rank, shape):
        self.rank = rank
        self.shape = shape
        super().__init__(f"rank {rank} exceeds min dimension of shape {shape}")


class ZeroGradientError(LotusError, ValueError):
    """Gradient has zero norm, so it defines no direction or subspace."""


class NonFiniteGradientError(LotusError, ValueError):
    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message)


class ConfigError(LotusError, ValueError):
    """Invalid or unknown configuration key/value."""
