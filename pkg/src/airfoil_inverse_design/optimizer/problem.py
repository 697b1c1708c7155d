"""Design space, constraints and penalty scoring of the feature optimisation."""

from __future__ import annotations

import math

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from airfoil_inverse_design.utils.constants import DEFAULT_PENALTY, FEATURE_COUNT, FEATURE_NAMES

DEFAULT_LOWER = (-1.6, 0.35, 0.0, -0.8, -0.5, 0.001)
DEFAULT_UPPER = (-0.9, 0.70, 0.9, 0.6, -0.1, 0.15)


class Constraint(BaseModel):
    """Open interval on one verified feature; ``None`` leaves a side free."""

    feature: str
    lower: float | None = None
    upper: float | None = None

    @field_validator("feature")
    @classmethod
    def _known_feature(cls, value: str) -> str:
        if value not in FEATURE_NAMES:
            raise ValueError(f"Unknown feature {value!r}; expected one of {FEATURE_NAMES}")
        return value

    def satisfied(self, vector: np.ndarray) -> bool:
        value = float(vector[FEATURE_NAMES.index(self.feature)])
        if self.lower is not None and not value > self.lower:
            return False
        return not (self.upper is not None and not value < self.upper)


def default_constraints() -> list[Constraint]:
    return [
        Constraint(feature="f_sp", lower=-1.5, upper=-1.0),
        Constraint(feature="f_sw", lower=0.45, upper=0.55),
        Constraint(feature="f_ss", upper=0.7),
        Constraint(feature="f_pg", lower=0.0, upper=0.2),
        Constraint(feature="f_lm", lower=-0.35),
    ]


class OptimizationProblem(BaseModel):
    """Feature-space box, constraints and the penalty rule.

    Attributes:
        lower (list[float]): Lower bound per feature.
        upper (list[float]): Upper bound per feature.
        constraints (list[Constraint]): Applied to verified features in constrained mode.
        penalty (float): Subtracted from the objective of infeasible or failed designs.
        constrained (bool): ``True`` for the constrained design, ``False`` for the free one.
    """

    lower: list[float] = Field(default_factory=lambda: list(DEFAULT_LOWER))
    upper: list[float] = Field(default_factory=lambda: list(DEFAULT_UPPER))
    constraints: list[Constraint] = Field(default_factory=default_constraints)
    penalty: float = Field(default=DEFAULT_PENALTY, ge=0.0)
    constrained: bool = True

    @model_validator(mode="after")
    def _check_bounds(self) -> OptimizationProblem:
        if len(self.lower) != FEATURE_COUNT or len(self.upper) != FEATURE_COUNT:
            raise ValueError(f"Bounds need {FEATURE_COUNT} values per side")
        for name, low, high in zip(FEATURE_NAMES, self.lower, self.upper, strict=True):
            if not (math.isfinite(low) and math.isfinite(high)) or low >= high:
                raise ValueError(f"Invalid bounds for {name}: [{low}, {high}]")
        return self

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.lower, dtype=np.float64), np.asarray(self.upper, dtype=np.float64)

    def is_feasible(self, verified: np.ndarray | None) -> bool:
        if verified is None:
            return False
        if not self.constrained:
            return True
        return all(constraint.satisfied(verified) for constraint in self.constraints)

    def score(self, raw_objective: float, verified: np.ndarray | None, failed: bool = False) -> float:
        """Penalised objective: failures score ``-penalty``; infeasible designs lose ``penalty``."""
        if failed:
            return -self.penalty
        if self.constrained and not self.is_feasible(verified):
            return raw_objective - self.penalty
        return raw_objective
