"""Exceptions raised by gbdsde_lab."""

from __future__ import annotations


class GbdsdeLabError(Exception):
    """Base class for all laboratory errors."""


class InvalidMeasureError(GbdsdeLabError, ValueError):
    """The jump measure violates its invariants."""


class NearSingularError(GbdsdeLabError, ValueError):
    """The Gram matrix is too badly conditioned to orthonormalize."""

    def __init__(self, msg: str, condition_number: float) -> None:
        """Store the offending condition number."""
        super().__init__(msg)
        self.condition_number = condition_number


class BasisIndexError(GbdsdeLabError, IndexError):
    """Polynomial index outside 1..m."""


class GridError(GbdsdeLabError, ValueError):
    """Invalid time grid or mismatched grids."""


class ClockProfileError(GbdsdeLabError, ValueError):
    """Clock profile is not continuous and nondecreasing."""


class LatticeError(GbdsdeLabError, ValueError):
    """The jump lattice cannot be built for the given grid."""

    def __init__(self, msg: str, min_steps: int | None = None) -> None:
        """Store the minimal admissible number of steps, if known."""
        super().__init__(msg)
        self.min_steps = min_steps


class DriverError(GbdsdeLabError, ValueError):
    """A user driver returned invalid values."""


class FixedPointError(GbdsdeLabError, ArithmeticError):
    """The implicit step did not converge."""

    def __init__(self, msg: str, step: int, node: int, residual: float) -> None:
        """Store where the iteration failed."""
        super().__init__(msg)
        self.step = step
        self.node = node
        self.residual = residual


class NonContractionError(GbdsdeLabError, ArithmeticError):
    """Picard distances kept growing."""


class ComparisonViolation(GbdsdeLabError, AssertionError):
    """Ordered data produced unordered solutions although the jump condition held."""

    def __init__(self, msg: str, step: int, node: int, gap: float) -> None:
        """Store the offending node."""
        super().__init__(msg)
        self.step = step
        self.node = node
        self.gap = gap


class ConfigInvalid(GbdsdeLabError, ValueError):
    """An experiment config violates a precondition."""

    def __init__(self, msg: str, location: str) -> None:
        """Store the config location that failed."""
        super().__init__(f"{location}: {msg}")
        self.location = location


class ExperimentFailed(GbdsdeLabError, RuntimeError):
    """A coordinated job failed."""


class ApproximationError(GbdsdeLabError, ValueError):
    """Invalid penalty, search grid or rung schedule for the Lipschitz approximations."""
