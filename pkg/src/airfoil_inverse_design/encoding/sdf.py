"""Signed distance field rasterisation of CP distributions.

A CP distribution is drawn as a closed loop in the ``(x, cp)`` window
``[0, 1] x [-1.5, 1.15]``: the upper curve from leading to trailing edge, a
vertical segment at ``x = 1``, the lower curve back to the leading edge and a
vertical segment at ``x = 0``. Each cell of an ``R x R`` grid stores the
distance from its centre to that loop, in cell units, positive inside.

Row ``j`` of ``values`` holds cells with centre ``cp`` ascending with ``j``;
column ``i`` holds cells with centre ``x = (i + 0.5)/R``.

Usage:

    grid = encode(cp, 64)
    cp_back = decode(grid)
"""

from __future__ import annotations

import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import ndimage
from scipy.interpolate import interp1d

from airfoil_inverse_design.aero.models import CpDistribution
from airfoil_inverse_design.geometry.airfoil import surface_abscissae
from airfoil_inverse_design.utils.constants import CP_DOMAIN_CP, CP_DOMAIN_X
from airfoil_inverse_design.utils.exceptions import DecodeError, OutOfDomainError

logger = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 128
MIN_BLOB_CELLS = 4
_POINT_CHUNK = 4096


class SdfGrid(BaseModel):
    """Signed distance grid of one CP loop.

    Attributes:
        resolution (int): ``R``; cells per axis.
        values (np.ndarray): ``(R, R)`` distances in cell units, positive inside
            (all non-negative when ``sdf_abs``).
        sdf_abs (bool): Whether the sign was dropped.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    resolution: int = Field(description="Cells per axis.")
    values: np.ndarray = Field(description="Row-major (cp, x) distance values in cell units.")
    sdf_abs: bool = Field(default=False, description="True when distances are unsigned.")

    @field_validator("resolution")
    @classmethod
    def _check_resolution(cls, value: int) -> int:
        return check_resolution(value)

    @field_validator("values", mode="before")
    @classmethod
    def _as_float_array(cls, value) -> np.ndarray:
        return np.asarray(value, dtype=np.float64)

    @model_validator(mode="after")
    def _check_values(self) -> SdfGrid:
        expected = (self.resolution, self.resolution)
        if self.values.shape != expected:
            raise ValueError(f"Grid values must have shape {expected}, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("Grid values must be finite")
        return self

    @property
    def domain(self) -> dict[str, tuple[float, float]]:
        return {"x": CP_DOMAIN_X, "cp": CP_DOMAIN_CP}

    @property
    def cp_cell_size(self) -> float:
        """Height of one cell in CP units."""
        return (CP_DOMAIN_CP[1] - CP_DOMAIN_CP[0]) / self.resolution

    @property
    def diagonal(self) -> float:
        return self.resolution * math.sqrt(2.0)

    def normalized(self) -> np.ndarray:
        """Values divided by the domain diagonal, in [-1, 1]."""
        return self.values / self.diagonal

    @classmethod
    def from_normalized(cls, values: np.ndarray, sdf_abs: bool = False) -> SdfGrid:
        array = np.asarray(values, dtype=np.float64)
        resolution = array.shape[-1]
        return cls(resolution=resolution, values=array * resolution * math.sqrt(2.0), sdf_abs=sdf_abs)


def check_resolution(resolution: int) -> int:
    """Validate a grid resolution (a multiple of 8, at least 8).

    Raises:
        ValueError: On any other value.
    """
    if resolution < 8 or resolution % 8:
        raise ValueError(f"Grid resolution must be a positive multiple of 8, got {resolution}")
    return resolution


def _to_cells(x: np.ndarray, cp: np.ndarray, resolution: int) -> np.ndarray:
    low, high = CP_DOMAIN_CP
    return np.column_stack((x * resolution, (cp - low) / (high - low) * resolution))


def _loop_segments(cp: CpDistribution, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    upper = _to_cells(cp.xs, cp.cp_upper, resolution)
    lower = _to_cells(cp.xs, cp.cp_lower, resolution)
    vertices = np.vstack((upper, lower[::-1]))
    return vertices, np.roll(vertices, -1, axis=0)


def _segment_distance(points: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    direction = ends - starts
    length_sq = np.einsum("ij,ij->i", direction, direction)
    length_sq = np.where(length_sq > 0, length_sq, 1.0)
    rel = points[:, None, :] - starts[None, :, :]
    t = np.clip(np.einsum("psk,sk->ps", rel, direction) / length_sq, 0.0, 1.0)
    offset = rel - t[..., None] * direction[None, :, :]
    return np.sqrt(np.min(np.einsum("psk,psk->ps", offset, offset), axis=1))


def _inside(points: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    # even-odd rule, ray towards +x
    px, py = points[:, 0:1], points[:, 1:2]
    ax, ay = starts[None, :, 0], starts[None, :, 1]
    bx, by = ends[None, :, 0], ends[None, :, 1]
    straddles = (ay > py) != (by > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        crossing_x = ax + (py - ay) * (bx - ax) / (by - ay)
    crossings = straddles & (px < crossing_x)
    return np.count_nonzero(crossings, axis=1) % 2 == 1


def encode(cp: CpDistribution, resolution: int = DEFAULT_RESOLUTION, sdf_abs: bool = False) -> SdfGrid:
    """Rasterise ``cp`` as a signed distance field.

    Args:
        cp (CpDistribution): Curves to encode.
        resolution (int): Cells per axis.
        sdf_abs (bool): Store unsigned distances.

    Returns:
        SdfGrid: The encoded grid.

    Raises:
        OutOfDomainError: If any CP value lies outside [-1.5, 1.15].
        ValueError: On an unsupported resolution.
    """
    check_resolution(resolution)
    if cp.out_of_domain:
        low, high = CP_DOMAIN_CP
        values = np.concatenate((cp.cp_upper, cp.cp_lower))
        raise OutOfDomainError(
            f"CP values outside [{low}, {high}]",
            min_cp=float(values.min()),
            max_cp=float(values.max()),
        )

    starts, ends = _loop_segments(cp, resolution)
    centres = np.arange(resolution) + 0.5
    cell_x, cell_y = np.meshgrid(centres, centres)
    points = np.column_stack((cell_x.ravel(), cell_y.ravel()))

    distance = np.empty(points.shape[0])
    inside = np.empty(points.shape[0], dtype=bool)
    for first in range(0, points.shape[0], _POINT_CHUNK):
        chunk = points[first : first + _POINT_CHUNK]
        distance[first : first + _POINT_CHUNK] = _segment_distance(chunk, starts, ends)
        inside[first : first + _POINT_CHUNK] = _inside(chunk, starts, ends)

    signed = distance if sdf_abs else np.where(inside, distance, -distance)
    return SdfGrid(resolution=resolution, values=signed.reshape(resolution, resolution), sdf_abs=sdf_abs)


def _clean_mask(inside: np.ndarray) -> np.ndarray:
    """Drop positive specks and fill enclosed negative specks smaller than ``MIN_BLOB_CELLS``."""
    mask = inside.copy()
    labels, count = ndimage.label(mask)
    if count:
        sizes = ndimage.sum_labels(mask, labels, index=np.arange(1, count + 1))
        for label, size in enumerate(sizes, start=1):
            if size < MIN_BLOB_CELLS:
                mask[labels == label] = False

    holes, count = ndimage.label(~mask)
    if count:
        border = np.unique(np.concatenate((holes[0], holes[-1], holes[:, 0], holes[:, -1])))
        sizes = ndimage.sum_labels(~mask, holes, index=np.arange(1, count + 1))
        for label, size in enumerate(sizes, start=1):
            if label not in border and size < MIN_BLOB_CELLS:
                mask[holes == label] = True
    return mask


def _column_crossings(column: np.ndarray) -> list[float]:
    positive = column > 0
    crossings = []
    if positive[0]:
        crossings.append(0.5 - column[0])
    for k in np.flatnonzero(positive[:-1] != positive[1:]):
        crossings.append(k + 0.5 + column[k] / (column[k] - column[k + 1]))
    if positive[-1]:
        crossings.append(column.size - 0.5 + column[-1])
    return crossings


def _column_minima(column: np.ndarray) -> list[float]:
    padded = np.concatenate(([np.inf], column, [np.inf]))
    is_minimum = (column <= padded[:-2]) & (column <= padded[2:]) & (column < 1.0)
    indices = np.flatnonzero(is_minimum)
    if indices.size > 2:
        indices = np.sort(indices[np.argsort(column[indices], kind="stable")[:2]])
    return [index + 0.5 for index in indices]


def _cells_to_cp(position: np.ndarray, resolution: int) -> np.ndarray:
    low, high = CP_DOMAIN_CP
    return low + position / resolution * (high - low)


def decode(grid: SdfGrid, stations: np.ndarray | None = None) -> CpDistribution:
    """Read the CP curves back out of ``grid``.

    Signed grids are cleaned morphologically, then each column's two zero
    crossings are located by linear interpolation; the lower-CP crossing is
    ``cp_upper``. A column whose loop is pinched (no crossing, but the field
    comes within one cell of zero) yields one value for both curves. Unsigned
    grids use each column's one or two local minima below one cell.

    Args:
        grid (SdfGrid): Grid to decode.
        stations (np.ndarray | None): Output stations; the 65 surface stations by default.

    Returns:
        CpDistribution: Curves resampled onto ``stations``.

    Raises:
        DecodeError: If a column does not hold exactly one loop crossing pair.
    """
    resolution = grid.resolution
    values = grid.values
    if not grid.sdf_abs:
        mask = _clean_mask(values > 0)
        values = np.where(mask, np.abs(values), -np.abs(values))

    upper = np.empty(resolution)
    lower = np.empty(resolution)
    for column_index in range(resolution):
        column = values[:, column_index]
        found = _column_minima(column) if grid.sdf_abs else _column_crossings(column)
        if len(found) == 2:
            upper[column_index], lower[column_index] = min(found), max(found)
        elif len(found) == 1 and grid.sdf_abs:
            upper[column_index] = lower[column_index] = found[0]
        elif not found and not grid.sdf_abs and np.min(np.abs(column)) < 1.0:
            upper[column_index] = lower[column_index] = float(np.argmin(np.abs(column))) + 0.5
        else:
            raise DecodeError(
                f"Column {column_index} holds {len(found)} curve crossings",
                column=column_index,
                crossings=len(found),
            )

    column_x = (np.arange(resolution) + 0.5) / resolution
    xs = surface_abscissae() if stations is None else np.asarray(stations, dtype=np.float64)
    resample = interp1d(
        column_x,
        np.vstack((_cells_to_cp(upper, resolution), _cells_to_cp(lower, resolution))),
        kind="linear",
        axis=1,
        fill_value="extrapolate",
        assume_sorted=True,
    )
    cp_upper, cp_lower = resample(xs)
    logger.debug("Decoded %dx%d grid", resolution, resolution)
    return CpDistribution(xs=xs, cp_upper=cp_upper, cp_lower=cp_lower)
