"""Extraction of the six pressure features from a CP distribution.

Features:

* ``f_sp``: suction peak, the lowest upper-surface CP over ``x <= 0.15``.
* ``f_sw``: shock location (or the steepest smoothed slope in slope mode).
* ``f_ss``: shock strength, the CP rise across the steep region ``[x2, x3]``.
* ``f_pg``: mean pressure gradient from the anchor to the shock foot ``x2``.
* ``f_lm``: lower-surface minimum CP.
* ``f_area``: area between the upper curve and the anchor-to-foot chord line.

Usage:

    features = extract(cp)
    errors = feature_error(target, features)
"""

from __future__ import annotations

import logging
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, model_validator

from airfoil_inverse_design.aero.models import CpDistribution
from airfoil_inverse_design.utils.constants import (
    FEATURE_NAMES,
    SLOPE_THRESHOLD,
    SMOOTHING_WINDOW,
    SUCTION_WINDOW,
)

logger = logging.getLogger(__name__)

FswMode = Literal["position", "slope"]
AnchorMode = Literal["suction_peak", "window_edge"]

# Smoothed slopes within this share of the maximum count as the same rise
_PLATEAU_SHARE = 0.9


class PressureFeatures(BaseModel):
    """The six scalar descriptors of a CP distribution.

    Attributes:
        f_sp (float): Suction peak.
        f_sw (float): Shock location in [0, 1] (position mode) or max slope.
        f_ss (float): Shock strength, non-negative.
        f_pg (float): Pre-shock pressure gradient (CP per chord).
        f_lm (float): Lower-surface minimum.
        f_area (float): Pre-shock area, non-negative.
        degenerate (bool): True when no positive-slope rise exists on the upper surface.
        fsw_mode (FswMode): How ``f_sw`` was measured.
    """

    f_sp: float
    f_sw: float
    f_ss: float
    f_pg: float
    f_lm: float
    f_area: float
    degenerate: bool = Field(default=False)
    fsw_mode: FswMode = Field(default="position")

    @model_validator(mode="after")
    def _check_ranges(self) -> PressureFeatures:
        vector = self.to_vector()
        if not np.all(np.isfinite(vector)):
            raise ValueError("Pressure features must be finite")
        if self.fsw_mode == "position" and not 0.0 <= self.f_sw <= 1.0:
            raise ValueError(f"Shock location must lie in [0, 1], got {self.f_sw}")
        if self.f_ss < 0:
            raise ValueError(f"Shock strength must be >= 0, got {self.f_ss}")
        if self.f_area < 0:
            raise ValueError(f"Pre-shock area must be >= 0, got {self.f_area}")
        return self

    def to_vector(self) -> np.ndarray:
        """Features in the order of ``FEATURE_NAMES``."""
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=np.float64)

    @classmethod
    def from_vector(
        cls, vector: np.ndarray, degenerate: bool = False, fsw_mode: FswMode = "position"
    ) -> PressureFeatures:
        values = np.asarray(vector, dtype=np.float64)
        if values.shape != (len(FEATURE_NAMES),):
            raise ValueError(f"Feature vector must hold {len(FEATURE_NAMES)} values, got shape {values.shape}")
        return cls(**dict(zip(FEATURE_NAMES, values.tolist(), strict=True)), degenerate=degenerate, fsw_mode=fsw_mode)


class ShockAnchors(BaseModel):
    """Stations that define the shock and the pre-shock region."""

    suction_index: int
    foot_index: int = Field(description="Station index of x2.")
    end_index: int = Field(description="Station index of x3.")
    x_sp: float
    x2: float
    x3: float
    x_sw: float
    max_slope: float = Field(description="Largest smoothed forward-difference slope past the suction window.")
    degenerate: bool


def moving_average(values: np.ndarray, window: int = SMOOTHING_WINDOW) -> np.ndarray:
    """Centred moving average with edge values repeated at both ends."""
    if window < 1 or window % 2 == 0:
        raise ValueError(f"Smoothing window must be a positive odd number, got {window}")
    half = window // 2
    padded = np.pad(np.asarray(values, dtype=np.float64), half, mode="edge")
    return np.convolve(padded, np.ones(window) / window, mode="valid")


def _contiguous_run(mask: np.ndarray, index: int) -> tuple[int, int]:
    start = index
    while start - 1 >= 0 and mask[start - 1]:
        start -= 1
    end = index
    while end + 1 < mask.size and mask[end + 1]:
        end += 1
    return start, end


def detect_anchors(cp: CpDistribution) -> ShockAnchors:
    """Locate the suction peak, the shock and its steep region on the upper surface.

    The shock is found on the smoothed curve: ``x_sw`` is the slope-weighted
    centre of the run of intervals whose smoothed slope is within 90% of the
    largest one, ``max_slope``. The steep region ``[x2, x3]`` is then walked
    outward from ``x_sw`` on the raw curve until its slope drops below
    ``0.1 * max_slope``. Smoothing spreads a sharp rise over the averaging
    window, so the walk uses raw slopes to keep ``x2`` and ``x3`` on the rise.
    """
    xs, upper = cp.xs, cp.cp_upper
    in_window = xs <= SUCTION_WINDOW
    suction_index = int(np.argmin(np.where(in_window, upper, np.inf)))

    dx = np.diff(xs)
    smoothed_slope = np.diff(moving_average(upper)) / dx
    raw_slope = np.diff(upper) / dx
    candidates = np.flatnonzero(xs[:-1] > SUCTION_WINDOW)

    peak = int(candidates[np.argmax(smoothed_slope[candidates])])
    max_slope = float(smoothed_slope[peak])
    midpoints = 0.5 * (xs[:-1] + xs[1:])

    if max_slope <= 0:
        x_sw = float(midpoints[peak])
        return ShockAnchors(
            suction_index=suction_index,
            foot_index=peak,
            end_index=peak,
            x_sp=float(xs[suction_index]),
            x2=x_sw,
            x3=x_sw,
            x_sw=x_sw,
            max_slope=max_slope,
            degenerate=True,
        )

    in_search = np.zeros(dx.size, dtype=bool)
    in_search[candidates] = True
    near_peak = in_search & (smoothed_slope >= _PLATEAU_SHARE * max_slope)
    first, last = _contiguous_run(near_peak, peak)
    run = np.arange(first, last + 1)
    x_sw = float(np.average(midpoints[run], weights=smoothed_slope[run]))

    threshold = SLOPE_THRESHOLD * max_slope
    steep = in_search & (raw_slope >= threshold)
    centre = int(np.clip(np.searchsorted(xs, x_sw, side="right") - 1, candidates[0], candidates[-1]))
    if not steep[centre]:
        nearby = np.flatnonzero(steep[first : last + 1])
        if nearby.size:
            centre = int(first + nearby[np.argmin(np.abs(first + nearby - centre))])
    if steep[centre]:
        foot, end = _contiguous_run(steep, centre)
        foot_index, end_index = foot, end + 1
    else:
        foot_index, end_index = centre, centre + 1

    x2, x3 = float(xs[foot_index]), float(xs[end_index])
    return ShockAnchors(
        suction_index=suction_index,
        foot_index=foot_index,
        end_index=end_index,
        x_sp=float(xs[suction_index]),
        x2=x2,
        x3=x3,
        x_sw=float(np.clip(x_sw, x2, x3)),
        max_slope=max_slope,
        degenerate=False,
    )


def _pre_shock_area(xs: np.ndarray, upper: np.ndarray, start_x: float, start_cp: float, foot_index: int) -> float:
    inner = xs[: foot_index + 1] > start_x
    segment_x = np.concatenate(([start_x], xs[: foot_index + 1][inner]))
    segment_cp = np.concatenate(([start_cp], upper[: foot_index + 1][inner]))
    end_x, end_cp = segment_x[-1], segment_cp[-1]
    if end_x <= start_x:
        return 0.0
    chord_line = start_cp + (end_cp - start_cp) * (segment_x - start_x) / (end_x - start_x)
    return float(np.trapezoid(np.abs(segment_cp - chord_line), segment_x))


def extract(
    cp: CpDistribution,
    fsw_mode: FswMode = "position",
    anchor_mode: AnchorMode = "suction_peak",
) -> PressureFeatures:
    """Six pressure features of ``cp``.

    Args:
        cp (CpDistribution): Distribution on increasing stations.
        fsw_mode (FswMode): ``"position"`` reports the shock location,
            ``"slope"`` the largest smoothed slope.
        anchor_mode (AnchorMode): Start of the pre-shock region; the suction
            peak or the window edge ``x = 0.15``.

    Returns:
        PressureFeatures: Features, flagged degenerate when the upper surface
        has no positive-slope rise past the suction window.
    """
    anchors = detect_anchors(cp)
    xs, upper = cp.xs, cp.cp_upper
    f_sp = float(upper[anchors.suction_index])
    f_lm = float(np.min(cp.cp_lower))
    f_sw = anchors.x_sw if fsw_mode == "position" else anchors.max_slope

    if anchors.degenerate:
        logger.debug("Degenerate CP: no shock rise past x=%.2f", SUCTION_WINDOW)
        return PressureFeatures(
            f_sp=f_sp, f_sw=f_sw, f_ss=0.0, f_pg=0.0, f_lm=f_lm, f_area=0.0, degenerate=True, fsw_mode=fsw_mode
        )

    foot_cp = float(upper[anchors.foot_index])
    f_ss = max(0.0, float(upper[anchors.end_index]) - foot_cp)

    if anchor_mode == "suction_peak":
        start_x, start_cp = anchors.x_sp, f_sp
    else:
        start_x, start_cp = SUCTION_WINDOW, float(np.interp(SUCTION_WINDOW, xs, upper))

    if anchors.x2 > start_x:
        f_pg = (foot_cp - start_cp) / (anchors.x2 - start_x)
        f_area = _pre_shock_area(xs, upper, start_x, start_cp, anchors.foot_index)
    else:
        f_pg, f_area = 0.0, 0.0

    return PressureFeatures(
        f_sp=f_sp, f_sw=f_sw, f_ss=f_ss, f_pg=f_pg, f_lm=f_lm, f_area=f_area, degenerate=False, fsw_mode=fsw_mode
    )


def feature_error(target: PressureFeatures, observed: PressureFeatures) -> np.ndarray:
    """Componentwise absolute difference, ordered as ``FEATURE_NAMES``."""
    return np.abs(target.to_vector() - observed.to_vector())


def feature_mae(errors: np.ndarray) -> np.ndarray:
    """Mean absolute error per feature over an ``(m, 6)`` error matrix."""
    values = np.atleast_2d(np.asarray(errors, dtype=np.float64))
    return values.mean(axis=0)


def feature_mre(targets: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """Mean relative error per feature, ``|t - o| / max(|t|, |o|)``; pairs of zeros count as 0."""
    t = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    o = np.atleast_2d(np.asarray(observed, dtype=np.float64))
    scale = np.maximum(np.abs(t), np.abs(o))
    with np.errstate(divide="ignore", invalid="ignore"):
        relative = np.where(scale > 0, np.abs(t - o) / scale, 0.0)
    return relative.mean(axis=0)
