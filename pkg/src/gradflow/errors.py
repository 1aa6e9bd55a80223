"""Exception types raised across the package."""

from __future__ import annotations


class GradflowError(Exception):
    """Base class for every error raised by gradflow."""


class InputError(GradflowError, ValueError):
    """Malformed or out-of-domain input (bad shapes, non-monotone curves, tau >= tau_star)."""


class IntegrationError(GradflowError):
    """Adaptive integration could not continue.

    Attributes
    ----------
    last_time : float
        Largest time reached with an accepted step.
    """

    def __init__(self, message: str, last_time: float):
        super().__init__(f"{message} (last valid time {last_time:.6g})")
        self.last_time = float(last_time)


class SearchRadiusError(GradflowError):
    """The best proximal candidate sits on the boundary of the search ball."""


class InfeasibleError(GradflowError):
    """No admissible parameter exists (for instance lambda would have to reach 1/4)."""


class HorizonError(GradflowError):
    """A curve is too short to find the requested horizon."""


class RangeError(GradflowError):
    """Two curves do not share the range needed for a time change."""


class ConsistencyError(GradflowError):
    """Derived quantities disagree beyond the grid error (e.g. a negative singular part)."""


class ResolutionError(GradflowError):
    """A grid is too coarse for the structure it has to resolve."""


class DegenerateError(GradflowError):
    """The object has no length or no motion where motion is required."""
