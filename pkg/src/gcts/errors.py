"""Exception hierarchy.  Each family maps onto one CLI exit code."""

from __future__ import annotations


class GctsError(Exception):
    exit_code = 4


class ValidationError(GctsError):
    """Malformed or inconsistent case data."""

    exit_code = 1

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NetworkStructureError(ValidationError):
    """Disconnected graph or an area whose interior does not reach its boundary."""

    def __init__(self, message: str, components: list[list[int]] | None = None):
        self.components = components or []
        super().__init__(message)


class ReductionError(NetworkStructureError):
    pass


class ModelError(ValidationError):
    """The case violates a precondition of the market model."""


class InfeasibleError(GctsError):
    exit_code = 2

    def __init__(self, message: str, details: dict | None = None):
        self.details = details or {}
        super().__init__(message)


class DegeneracyError(GctsError):
    """Multipliers are not unique; prices cannot be certified."""

    exit_code = 3

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class ConvergenceError(GctsError):
    def __init__(self, message: str, residual: float, rounds: int):
        self.residual = residual
        self.rounds = rounds
        super().__init__(message)


class SolverFailure(GctsError):
    pass
