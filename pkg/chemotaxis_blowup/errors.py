"""Exception types shared by the simulator, the bound calculator and the CLI."""

from typing import Optional


class ChemotaxisError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ChemotaxisError, ValueError):
    """Invalid run configuration; ``key_path`` names the offending entry."""

    def __init__(self, message: str, key_path: str = ""):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}" if key_path else message)


class GeometryError(ChemotaxisError, ValueError):
    """The domain violates a geometric hypothesis (e.g. origin not interior)."""


class SolverError(ChemotaxisError, RuntimeError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message: str, residual: float = float("nan"),
                 iterations: int = 0, step: Optional[int] = None):
        self.residual = residual
        self.iterations = iterations
        self.step = step
        super().__init__(message)

    def at_step(self, step: int) -> "SolverError":
        """Return a copy tagged with the time-step index where it happened."""
        err = SolverError(f"step {step}: {self.args[0]}", self.residual, self.iterations, step)
        err.__cause__ = self
        return err


class NonFiniteFieldError(ChemotaxisError, ArithmeticError):
    """A field or explicit right-hand side contains NaN or inf."""

    def __init__(self, message: str, field_name: str = ""):
        self.field_name = field_name
        super().__init__(message)
