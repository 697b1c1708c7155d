"""Exception types raised by the airfoil inverse design library.

Every failure kind of the pipeline has its own class so callers can recover
selectively (for example the optimizer turns decode and repair failures into
penalised evaluations). Invalid arguments raise plain ``ValueError``.

Classes:
    AirfoilDesignError: Base class, renders itself as a JSON-able dict.
"""

from __future__ import annotations

from typing import Any


class AirfoilDesignError(Exception):
    """Base class for all library failures.

    Attributes:
        kind (str): Short machine-readable error kind.
        details (dict[str, Any]): Extra diagnostics included in ``to_dict``.
    """

    kind = "error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        """Render the error for machine-readable output.

        Returns:
            dict[str, Any]: ``{"error": kind, "message": ..., "details": {...}}``.
        """
        return {"error": self.kind, "message": str(self), "details": self.details}


class FitError(AirfoilDesignError):
    kind = "fit-failure"


class RepairError(AirfoilDesignError):
    kind = "repair-failure"


class SolverError(AirfoilDesignError):
    kind = "solver-failure"


class OutOfDomainError(AirfoilDesignError, ValueError):
    kind = "out-of-domain"


class DecodeError(AirfoilDesignError):
    """Raised when a grid cannot be read back into a CP distribution."""

    kind = "decode-failure"

    def __init__(self, message: str, column: int | None = None, **details: Any):
        super().__init__(message, column=column, **details)
        self.column = column


class ShapeError(AirfoilDesignError, ValueError):
    kind = "shape-error"


class GraphError(AirfoilDesignError):
    kind = "graph-error"


class NonFiniteError(AirfoilDesignError, ArithmeticError):
    kind = "non-finite"


class TrainingError(AirfoilDesignError):
    kind = "training-failure"


class EvaluationError(AirfoilDesignError):
    kind = "evaluation-failure"


class OptimizationError(AirfoilDesignError):
    kind = "optimization-failure"


class BuildError(AirfoilDesignError):
    kind = "build-failure"


class LockError(AirfoilDesignError):
    kind = "lock-held"
