"""Airfoil representations on the shared cosine grid.

Two shapes of airfoil data flow through the library:

* ``AirfoilCoords``: 131 points on the fixed cosine grid (the form every
  generated, repaired and solved airfoil takes).
* ``AirfoilProfile``: a raw table with arbitrary abscissae, as read from an
  airfoil text file (the embedded RAE2822 ordinates are one).

Both expose ``upper_surface()`` / ``lower_surface()`` ordered from leading to
trailing edge, which is all the CST fitter needs.

Usage:

    grid = cosine_x_grid(130)
    coords = repair(raw_ordinates)
"""

from __future__ import annotations

import logging
from functools import lru_cache
from typing import Protocol

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.interpolate import make_smoothing_spline

from airfoil_inverse_design.utils.constants import AIRFOIL_POINT_COUNT, SURFACE_POINT_COUNT
from airfoil_inverse_design.utils.exceptions import RepairError

logger = logging.getLogger(__name__)

REPAIR_TOLERANCE = 8e-6
MAX_CROSSING_SPAN = 0.1

# Smoothing weights tried from heaviest to lightest, in cosine-angle units
_SMOOTHING_WEIGHTS = np.logspace(-3.0, -9.0, 13)
_LEADING_EDGE_WEIGHT = 1e6


class SurfaceSource(Protocol):
    """Anything that can hand out its two surfaces, leading edge first."""

    def upper_surface(self) -> tuple[np.ndarray, np.ndarray]: ...

    def lower_surface(self) -> tuple[np.ndarray, np.ndarray]: ...


@lru_cache(maxsize=8)
def _cached_grid(count: int) -> np.ndarray:
    half = count // 2
    index = np.arange(half + 1)
    first_half = (np.cos(2.0 * np.pi * index / count) + 1.0) / 2.0
    grid = np.concatenate((first_half, first_half[-2::-1]))
    grid.setflags(write=False)
    return grid


def cosine_x_grid(count: int) -> np.ndarray:
    """Abscissae of the shared airfoil grid.

    ``x_i = (cos(2*pi*(i-1)/count) + 1)/2`` for ``i = 1..count+1``. The first
    half is computed and mirrored so the grid is exactly symmetric.

    Args:
        count (int): Number of unique points; even and at least 4.

    Returns:
        np.ndarray: ``count + 1`` abscissae running 1 -> 0 -> 1.

    Raises:
        ValueError: If ``count`` is odd or smaller than 4.
    """
    if count < 4 or count % 2:
        raise ValueError(f"Grid count must be even and >= 4, got {count}")
    return _cached_grid(count).copy()


def surface_abscissae(count: int = SURFACE_POINT_COUNT) -> np.ndarray:
    """Half-cosine stations from leading to trailing edge, used by CP curves."""
    if count < 3:
        raise ValueError(f"Surface station count must be >= 3, got {count}")
    stations = (1.0 - np.cos(np.pi * np.arange(count) / (count - 1))) / 2.0
    stations[0], stations[-1] = 0.0, 1.0
    return stations


def _leading_edge_index() -> int:
    return AIRFOIL_POINT_COUNT // 2


class AirfoilCoords(BaseModel):
    """Airfoil on the shared 131-point cosine grid.

    Points run counterclockwise from the trailing edge: upper surface from
    x=1 to the leading edge (index 65, zero based), then lower surface back
    to x=1. Index 0 and index 130 share the trailing-edge abscissa.

    Attributes:
        x (np.ndarray): Abscissae, always identical to ``cosine_x_grid(130)``.
        y (np.ndarray): Ordinates in chord units times ``y_scale``.
        y_scale (float): 1.0 for raw ordinates, 1000.0 for mapping-model units.
        name (str): Optional label written to airfoil text files.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    x: np.ndarray = Field(description="Shared cosine-grid abscissae (131 values).")
    y: np.ndarray = Field(description="Ordinates, counterclockwise from the trailing edge.")
    y_scale: float = Field(default=1.0, description="Scale factor applied to the stored ordinates.")
    name: str = Field(default="", description="Optional airfoil label.")

    @field_validator("x", "y", mode="before")
    @classmethod
    def _as_float_array(cls, value) -> np.ndarray:
        return np.asarray(value, dtype=np.float64)

    @model_validator(mode="after")
    def _check_grid(self) -> AirfoilCoords:
        expected = (AIRFOIL_POINT_COUNT + 1,)
        if self.x.shape != expected or self.y.shape != expected:
            raise ValueError(f"Airfoil needs {expected[0]} points, got x{self.x.shape} y{self.y.shape}")
        if not np.array_equal(self.x, _cached_grid(AIRFOIL_POINT_COUNT)):
            raise ValueError("Airfoil abscissae must equal cosine_x_grid(130)")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("Airfoil ordinates must be finite")
        if self.y_scale <= 0:
            raise ValueError(f"y_scale must be positive, got {self.y_scale}")
        return self

    @property
    def points(self) -> np.ndarray:
        return np.column_stack((self.x, self.y))

    def upper_surface(self) -> tuple[np.ndarray, np.ndarray]:
        le = _leading_edge_index()
        return self.x[le::-1].copy(), self.y[le::-1].copy()

    def lower_surface(self) -> tuple[np.ndarray, np.ndarray]:
        le = _leading_edge_index()
        return self.x[le:].copy(), self.y[le:].copy()

    def ordinates(self) -> np.ndarray:
        """The 130 mapping-model ordinates: upper TE->LE then lower LE->TE, leading edge excluded."""
        le = _leading_edge_index()
        return np.concatenate((self.y[:le], self.y[le + 1 :]))

    @classmethod
    def from_ordinates(cls, ordinates: np.ndarray, y_scale: float = 1.0, name: str = "") -> AirfoilCoords:
        """Inverse of ``ordinates``; the leading-edge point is pinned at y=0."""
        values = np.asarray(ordinates, dtype=np.float64)
        if values.shape != (AIRFOIL_POINT_COUNT,):
            raise ValueError(f"Expected {AIRFOIL_POINT_COUNT} ordinates, got shape {values.shape}")
        le = _leading_edge_index()
        y = np.concatenate((values[:le], [0.0], values[le:]))
        return cls(x=cosine_x_grid(AIRFOIL_POINT_COUNT), y=y, y_scale=y_scale, name=name)

    def scaled(self, factor: float) -> AirfoilCoords:
        return self.model_copy(update={"y": self.y * factor, "y_scale": self.y_scale * factor})

    def unscaled(self) -> AirfoilCoords:
        return self.model_copy(update={"y": self.y / self.y_scale, "y_scale": 1.0})

    def max_thickness(self) -> float:
        _, upper = self.upper_surface()
        _, lower = self.lower_surface()
        return float(np.max(upper - lower) / self.y_scale)


class AirfoilProfile(BaseModel):
    """Raw airfoil table split into its two surfaces.

    Attributes:
        upper (np.ndarray): ``(n, 2)`` upper-surface points, leading edge first.
        lower (np.ndarray): ``(m, 2)`` lower-surface points, leading edge first.
        name (str): Label from the ``#`` header line, if any.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    upper: np.ndarray
    lower: np.ndarray
    name: str = ""

    @field_validator("upper", "lower", mode="before")
    @classmethod
    def _as_point_array(cls, value) -> np.ndarray:
        array = np.asarray(value, dtype=np.float64)
        if array.ndim != 2 or array.shape[1] != 2 or array.shape[0] < 3:
            raise ValueError(f"Surface must be an (n>=3, 2) point array, got shape {array.shape}")
        return array

    @classmethod
    def from_points(cls, points: np.ndarray, name: str = "") -> AirfoilProfile:
        """Split a counterclockwise contour (trailing edge first) at its leading edge.

        Args:
            points (np.ndarray): ``(n, 2)`` contour points.
            name (str): Optional label.

        Returns:
            AirfoilProfile: Both surfaces, sharing the leading-edge point.
        """
        contour = np.asarray(points, dtype=np.float64)
        le = int(np.argmin(contour[:, 0]))
        return cls(upper=contour[le::-1], lower=contour[le:], name=name)

    def upper_surface(self) -> tuple[np.ndarray, np.ndarray]:
        return self.upper[:, 0].copy(), self.upper[:, 1].copy()

    def lower_surface(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lower[:, 0].copy(), self.lower[:, 1].copy()

    def contour(self) -> np.ndarray:
        """Counterclockwise contour from the trailing edge, leading edge stored once."""
        return np.vstack((self.upper[::-1], self.lower[1:]))


def _smooth_surface(theta: np.ndarray, values: np.ndarray, tolerance: float) -> np.ndarray:
    weights = np.ones_like(values)
    weights[0] = _LEADING_EDGE_WEIGHT
    for lam in _SMOOTHING_WEIGHTS:
        fitted = make_smoothing_spline(theta, values, w=weights, lam=lam)(theta)
        if np.max(np.abs(fitted - values)) <= tolerance:
            fitted[0] = 0.0
            return fitted
    # the natural interpolating spline passes through the nodes
    return values.copy()


def _longest_run_span(mask: np.ndarray, x: np.ndarray) -> float:
    longest, start = 0.0, None
    for index, flag in enumerate(mask):
        if flag and start is None:
            start = index
        if start is not None and (not flag or index == len(mask) - 1):
            end = index if flag else index - 1
            longest = max(longest, float(x[end] - x[start]))
            start = None
    return longest


def repair(
    raw_y: np.ndarray,
    tolerance: float = REPAIR_TOLERANCE,
    max_crossing_span: float = MAX_CROSSING_SPAN,
) -> AirfoilCoords:
    """Smooth raw mapping-model ordinates into a valid airfoil.

    Each surface is fitted with a natural cubic smoothing spline over the
    cosine angle (the heaviest smoothing whose residual stays within
    ``tolerance``). Where the upper surface then falls below the lower one,
    both are moved to their midpoint.

    Args:
        raw_y (np.ndarray): 130 ordinates in chord units (see ``AirfoilCoords.ordinates``).
        tolerance (float): Largest allowed per-point smoothing change.
        max_crossing_span (float): Chordwise extent above which a surface
            crossing is not repairable.

    Returns:
        AirfoilCoords: Repaired airfoil on the shared grid.

    Raises:
        ValueError: If the input does not hold 130 values.
        RepairError: On non-finite input or a crossing wider than ``max_crossing_span``.
    """
    values = np.asarray(raw_y, dtype=np.float64)
    if values.shape != (AIRFOIL_POINT_COUNT,):
        raise ValueError(f"Expected {AIRFOIL_POINT_COUNT} ordinates, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise RepairError(
            "Raw ordinates contain non-finite values",
            non_finite=int(np.count_nonzero(~np.isfinite(values))),
        )

    le = _leading_edge_index()
    theta = np.linspace(0.0, np.pi, le + 1)
    x_surface = (1.0 - np.cos(theta)) / 2.0

    upper = _smooth_surface(theta, np.concatenate(([0.0], values[le - 1 :: -1])), tolerance)
    lower = _smooth_surface(theta, np.concatenate(([0.0], values[le:])), tolerance)

    crossing = upper < lower
    if crossing.any():
        span = _longest_run_span(crossing, x_surface)
        if span > max_crossing_span:
            raise RepairError(f"Surface crossing spans {span:.3f} chord", span=span)
        logger.debug("Repairing %d crossing stations", int(np.count_nonzero(crossing)))
        midpoint = 0.5 * (upper + lower)
        upper = np.where(crossing, midpoint, upper)
        lower = np.where(crossing, midpoint, lower)

    y = np.concatenate((upper[::-1], lower[1:]))
    return AirfoilCoords(x=cosine_x_grid(AIRFOIL_POINT_COUNT), y=y)
