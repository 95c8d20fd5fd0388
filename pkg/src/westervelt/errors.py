"""Exception hierarchy shared by every module."""

from __future__ import annotations


class WesterveltError(Exception):
    """Base class for all package errors."""


class InvalidArgument(WesterveltError, ValueError):
    """An argument violates a documented precondition."""


class ScenarioError(InvalidArgument):
    """A scenario file or configuration is malformed or inadmissible."""


class DegeneracyError(WesterveltError):
    """A coefficient multiplying the acceleration dropped below the admissible margin.

    ``node`` and ``step`` locate the offending value; ``value`` is the coefficient there.
    """

    def __init__(self, message: str, *, node: int | None = None, step: int | None = None,
                 value: float | None = None):
        super().__init__(message)
        self.node = node
        self.step = step
        self.value = value

    def record(self) -> dict:
        return {"error": "degeneracy", "message": str(self), "node": self.node,
                "step": self.step, "value": self.value}


class StepFailure(WesterveltError):
    """Newton iteration inside a time step did not converge."""

    def __init__(self, message: str, *, step: int | None = None,
                 residual_history: list[float] | None = None):
        super().__init__(message)
        self.step = step
        self.residual_history = list(residual_history or [])

    def record(self) -> dict:
        return {"error": "step_failure", "message": str(self), "step": self.step,
                "residual_history": self.residual_history}


class NonConvergence(WesterveltError):
    """The fixed-point iteration exhausted its iteration budget."""

    def __init__(self, message: str, *, distances: list[float] | None = None,
                 ratios: list[float] | None = None):
        super().__init__(message)
        self.distances = list(distances or [])
        self.ratios = list(ratios or [])

    def record(self) -> dict:
        return {"error": "non_convergence", "message": str(self),
                "distances": self.distances, "ratios": self.ratios}


class EstimationFailure(WesterveltError):
    """A constant-estimation ascent failed; ``last_iterate`` holds the final candidate."""

    def __init__(self, message: str, *, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate
