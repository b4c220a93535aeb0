"""Exception types shared across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """Evaluation time outside the segment domain [-r, 0]."""


class GridMismatchError(ValueError):
    """Segments living on different grids were mixed in one operation."""


class OutsideDomainError(ValueError):
    """A point left an admissible set (W, V, U, or a frame coverage box)."""

    def __init__(self, where: str, message: str | None = None):
        self.where = where
        super().__init__(message or f"outside_{where}")


class BumpInfeasibleError(RuntimeError):
    """Bump construction failed.

    ``reason`` is ``"infeasible_rank"`` (the constraint system has no
    solution at this resolution) or ``"grid_too_coarse"`` (not enough
    candidate basis functions fit between z and 0).  Both are fixed by
    refining the grid.
    """

    def __init__(self, reason: str, message: str):
        self.reason = reason
        super().__init__(message)


class NoConvergenceError(RuntimeError):
    """An iterative solve did not reach tolerance."""

    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        self.iterations = iterations
        self.residual = residual
        super().__init__(message)


class NoChartForStratumError(LookupError):
    """The atlas has no chart covering the requested stratum."""


class ModelValidationError(ValueError):
    """Model registration self-checks failed (bad gradients, ranges, witness)."""
