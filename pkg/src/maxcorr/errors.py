"""Semantic exceptions shared across the package."""


class MaxcorrError(ValueError):
    """Base class for all validation and feasibility failures."""


class AlphabetMismatchError(MaxcorrError):
    """Labels or dimensions of two objects do not line up."""


class ValidationError(MaxcorrError):
    """An object violates one of its declared invariants."""


class FeasibilityError(MaxcorrError):
    """A scalar knob (eta, epsilon) exceeds its exact feasibility bound.

    Carries the maximal feasible value so callers can report or retry.
    """

    def __init__(self, message: str, max_feasible: float):
        super().__init__(f"{message} (max feasible: {max_feasible:.12g})")
        self.max_feasible = max_feasible


class RankDeficiencyError(MaxcorrError):
    """A column set is linearly dependent under the weighted inner product."""

    def __init__(self, message: str, column: int):
        super().__init__(message)
        self.column = column
