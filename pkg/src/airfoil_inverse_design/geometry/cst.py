"""Class Shape Transformation (CST) parameterisation.

Each surface is ``y(x) = sqrt(x)(1 - x) * sum_i a_i B_i^n(x) + x z_te`` with
Bernstein polynomials ``B_i^n``. Fitting is linear least squares on the
design matrix of class-weighted Bernstein columns plus the ``x`` column that
carries the trailing-edge thickness.
"""

from __future__ import annotations

import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator
from scipy.special import comb

from airfoil_inverse_design.geometry.airfoil import AirfoilCoords, SurfaceSource, cosine_x_grid
from airfoil_inverse_design.utils.constants import AIRFOIL_POINT_COUNT, CST_ORDER
from airfoil_inverse_design.utils.exceptions import FitError

Side = Literal["upper", "lower"]


class CstParams(BaseModel):
    """CST coefficients of an airfoil surface pair.

    Attributes:
        upper (list[float]): ``order + 1`` upper-surface Bernstein coefficients.
        lower (list[float]): ``order + 1`` lower-surface Bernstein coefficients.
        zte_upper (float): Upper trailing-edge ordinate (chord units).
        zte_lower (float): Lower trailing-edge ordinate (chord units).
    """

    upper: list[float] = Field(description="Upper-surface Bernstein coefficients.")
    lower: list[float] = Field(description="Lower-surface Bernstein coefficients.")
    zte_upper: float = Field(default=0.0, description="Upper trailing-edge ordinate.")
    zte_lower: float = Field(default=0.0, description="Lower trailing-edge ordinate.")

    @field_validator("upper", "lower")
    @classmethod
    def _finite_coefficients(cls, value: list[float]) -> list[float]:
        if len(value) < 3:
            raise ValueError(f"CST needs at least 3 coefficients per surface, got {len(value)}")
        if not all(math.isfinite(v) for v in value):
            raise ValueError("CST coefficients must be finite")
        return [float(v) for v in value]

    @model_validator(mode="after")
    def _matching_orders(self) -> CstParams:
        if len(self.upper) != len(self.lower):
            raise ValueError(f"Surface orders differ: {len(self.upper)} vs {len(self.lower)} coefficients")
        if not (math.isfinite(self.zte_upper) and math.isfinite(self.zte_lower)):
            raise ValueError("Trailing-edge ordinates must be finite")
        return self

    @property
    def order(self) -> int:
        return len(self.upper) - 1

    def coefficients(self, side: Side) -> np.ndarray:
        return np.asarray(self.upper if side == "upper" else self.lower, dtype=np.float64)

    def trailing_edge(self, side: Side) -> float:
        return self.zte_upper if side == "upper" else self.zte_lower

    def as_vector(self) -> np.ndarray:
        """Upper then lower coefficients; trailing-edge ordinates excluded."""
        return np.concatenate((self.coefficients("upper"), self.coefficients("lower")))

    @classmethod
    def from_vector(cls, vector: np.ndarray, zte_upper: float = 0.0, zte_lower: float = 0.0) -> CstParams:
        values = np.asarray(vector, dtype=np.float64)
        half = values.size // 2
        return cls(
            upper=values[:half].tolist(),
            lower=values[half:].tolist(),
            zte_upper=zte_upper,
            zte_lower=zte_lower,
        )


class CstFitResult(BaseModel):
    params: CstParams
    max_residual: float = Field(description="Largest absolute ordinate residual over both surfaces.")


def _check_abscissae(xs: np.ndarray) -> np.ndarray:
    values = np.asarray(xs, dtype=np.float64)
    if not np.all(np.isfinite(values)) or np.any(values < 0.0) or np.any(values > 1.0):
        raise ValueError("CST abscissae must lie in [0, 1]")
    return values


def _shape_columns(xs: np.ndarray, order: int) -> np.ndarray:
    index = np.arange(order + 1)
    bernstein = comb(order, index) * xs[:, None] ** index * (1.0 - xs[:, None]) ** (order - index)
    class_function = np.sqrt(xs) * (1.0 - xs)
    return class_function[:, None] * bernstein


def cst_evaluate(params: CstParams, side: Side, xs: np.ndarray) -> np.ndarray:
    """Evaluate one CST surface.

    Args:
        params (CstParams): Coefficients.
        side (Side): ``"upper"`` or ``"lower"``.
        xs (np.ndarray): Abscissae in [0, 1].

    Returns:
        np.ndarray: Ordinates at ``xs``.

    Raises:
        ValueError: If any abscissa is outside [0, 1].
    """
    values = _check_abscissae(xs)
    shape = _shape_columns(values, params.order) @ params.coefficients(side)
    return shape + values * params.trailing_edge(side)


def _fit_surface(xs: np.ndarray, ys: np.ndarray, order: int, side: str) -> tuple[np.ndarray, float, float]:
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise FitError(f"Non-finite {side} surface coordinates", side=side)
    if np.any(xs < 0.0) or np.any(xs > 1.0):
        raise FitError(f"{side} surface abscissae outside [0, 1]", side=side)
    design = np.column_stack((_shape_columns(xs, order), xs))
    rank = np.linalg.matrix_rank(design)
    if rank < design.shape[1]:
        raise FitError(f"Rank-deficient {side} design matrix", side=side, rank=int(rank), columns=design.shape[1])
    solution, *_ = np.linalg.lstsq(design, ys, rcond=None)
    residual = float(np.max(np.abs(design @ solution - ys)))
    return solution[:-1], float(solution[-1]), residual


def cst_fit(coords: SurfaceSource, order: int = CST_ORDER) -> CstFitResult:
    """Least-squares CST fit of both surfaces.

    Args:
        coords (SurfaceSource): An ``AirfoilCoords`` or ``AirfoilProfile``.
        order (int): Bernstein order ``n``; at least 2.

    Returns:
        CstFitResult: Fitted parameters and the largest absolute residual.

    Raises:
        ValueError: If ``order`` is below 2.
        FitError: On non-finite input or a rank-deficient design matrix.
    """
    if order < 2:
        raise ValueError(f"CST order must be >= 2, got {order}")
    scale = getattr(coords, "y_scale", 1.0)
    x_upper, y_upper = coords.upper_surface()
    x_lower, y_lower = coords.lower_surface()
    upper, zte_upper, res_upper = _fit_surface(x_upper, y_upper / scale, order, "upper")
    lower, zte_lower, res_lower = _fit_surface(x_lower, y_lower / scale, order, "lower")
    params = CstParams(upper=upper.tolist(), lower=lower.tolist(), zte_upper=zte_upper, zte_lower=zte_lower)
    return CstFitResult(params=params, max_residual=max(res_upper, res_lower))


def airfoil_from_cst(params: CstParams, name: str = "") -> AirfoilCoords:
    """Place a CST airfoil on the shared 131-point grid."""
    grid = cosine_x_grid(AIRFOIL_POINT_COUNT)
    le = AIRFOIL_POINT_COUNT // 2
    y = np.empty_like(grid)
    y[: le + 1] = cst_evaluate(params, "upper", grid[: le + 1])
    y[le:] = cst_evaluate(params, "lower", grid[le:])
    return AirfoilCoords(x=grid, y=y, name=name)
