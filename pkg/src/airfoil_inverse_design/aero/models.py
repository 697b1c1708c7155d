"""Value types of the aerodynamic surrogate.

Classes:
    FlowConditions: Freestream state (defaults: RAE2822 case 9).
    AeroConfig: Frozen surrogate constants (shock shape and drag model).
    CpDistribution: Upper/lower CP curves on the shared surface stations.
"""

from __future__ import annotations

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from airfoil_inverse_design.utils.constants import (
    CP_DOMAIN_CP,
    DEFAULT_ALPHA,
    DEFAULT_GAMMA,
    DEFAULT_MACH,
    DEFAULT_REYNOLDS,
)


class FlowConditions(BaseModel):
    mach: float = Field(default=DEFAULT_MACH, gt=0.0, lt=1.0, description="Freestream Mach number.")
    alpha: float = Field(default=DEFAULT_ALPHA, gt=-15.0, lt=15.0, description="Angle of attack in degrees.")
    gamma: float = Field(default=DEFAULT_GAMMA, gt=1.0, description="Ratio of specific heats.")
    reynolds: float = Field(default=DEFAULT_REYNOLDS, gt=0.0, description="Informational only.")


class AeroConfig(BaseModel):
    """Surrogate constants.

    Attributes:
        shock_width (float): Half-width of the tanh recovery ramp (chord units).
        blend_fraction (float): Share of the supersonic interval over which the
            rooftop blends from the pocket entry value to the plateau level.
        cd0 (float): Zero-lift drag coefficient.
        k_w (float): Wave-drag factor on the shock strength squared.
        k_i (float): Induced-drag factor on the lift coefficient squared.
    """

    shock_width: float = Field(default=0.02, gt=0.0, le=0.1)
    blend_fraction: float = Field(default=0.2, gt=0.0, le=1.0)
    cd0: float = Field(default=0.008, gt=0.0)
    k_w: float = Field(default=0.02, ge=0.0)
    k_i: float = Field(default=0.005, ge=0.0)


class CpDistribution(BaseModel):
    """Pressure coefficient curves of one airfoil.

    Attributes:
        xs (np.ndarray): Surface stations, leading to trailing edge (65 by default).
        cp_upper (np.ndarray): Upper-surface CP at ``xs``.
        cp_lower (np.ndarray): Lower-surface CP at ``xs``.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    xs: np.ndarray
    cp_upper: np.ndarray
    cp_lower: np.ndarray

    @field_validator("xs", "cp_upper", "cp_lower", mode="before")
    @classmethod
    def _as_float_array(cls, value) -> np.ndarray:
        return np.asarray(value, dtype=np.float64)

    @model_validator(mode="after")
    def _check_curves(self) -> CpDistribution:
        if self.xs.ndim != 1 or self.xs.size < 3:
            raise ValueError(f"CP stations must be a 1-D array of at least 3 values, got {self.xs.shape}")
        if self.cp_upper.shape != self.xs.shape or self.cp_lower.shape != self.xs.shape:
            raise ValueError(
                f"CP curve shapes {self.cp_upper.shape}/{self.cp_lower.shape} do not match stations {self.xs.shape}"
            )
        if np.any(np.diff(self.xs) <= 0) or self.xs[0] < 0.0 or self.xs[-1] > 1.0:
            raise ValueError("CP stations must increase strictly within [0, 1]")
        if not (np.all(np.isfinite(self.cp_upper)) and np.all(np.isfinite(self.cp_lower))):
            raise ValueError("CP values must be finite")
        return self

    @property
    def out_of_domain(self) -> bool:
        """True when any value leaves the SDF plotting window."""
        low, high = CP_DOMAIN_CP
        values = np.concatenate((self.cp_upper, self.cp_lower))
        return bool(np.any(values < low) or np.any(values > high))

    def shifted(self, offset: float) -> CpDistribution:
        return CpDistribution(xs=self.xs, cp_upper=self.cp_upper + offset, cp_lower=self.cp_lower + offset)
