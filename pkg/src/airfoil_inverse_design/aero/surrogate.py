"""Compressible aerodynamic surrogate.

The incompressible panel solution is corrected with the Karman-Tsien rule,
then every supersonic pocket (CP below the critical value) is replaced by a
rooftop plateau that recovers through a tanh shock ramp. Lift comes from the
CP integral; drag from a zero-lift term plus wave and induced terms.

Usage:

    cp = solve(airfoil, FlowConditions())
    cl = lift_coefficient(cp)
    ratio = lift_to_drag(cp, extract(cp))
"""

from __future__ import annotations

import logging
import math
from typing import TYPE_CHECKING

import numpy as np

from airfoil_inverse_design.aero.models import AeroConfig, CpDistribution, FlowConditions
from airfoil_inverse_design.aero.panel import panel_solve
from airfoil_inverse_design.geometry.airfoil import AirfoilCoords
from airfoil_inverse_design.utils.exceptions import SolverError

if TYPE_CHECKING:
    from airfoil_inverse_design.features.extraction import PressureFeatures

logger = logging.getLogger(__name__)

_RECOVERY_SHARPNESS = 3.0


def critical_cp(mach: float, gamma: float = 1.4) -> float:
    """Pressure coefficient at which the local flow reaches Mach 1.

    Raises:
        ValueError: If ``mach <= 0``.
    """
    if mach <= 0:
        raise ValueError(f"Mach number must be positive, got {mach}")
    ratio = (2.0 + (gamma - 1.0) * mach**2) / (gamma + 1.0)
    return 2.0 / (gamma * mach**2) * (ratio ** (gamma / (gamma - 1.0)) - 1.0)


def stagnation_cp(mach: float, gamma: float = 1.4) -> float:
    """Isentropic stagnation pressure coefficient; the upper bound of any corrected CP."""
    if mach <= 0:
        raise ValueError(f"Mach number must be positive, got {mach}")
    rise = (1.0 + 0.5 * (gamma - 1.0) * mach**2) ** (gamma / (gamma - 1.0)) - 1.0
    return 2.0 / (gamma * mach**2) * rise


def karman_tsien(cp: np.ndarray, mach: float, gamma: float = 1.4) -> np.ndarray:
    """Karman-Tsien compressibility correction, capped at the stagnation value.

    Raises:
        SolverError: If a CP is so negative that the correction's denominator vanishes.
    """
    values = np.asarray(cp, dtype=np.float64)
    beta = math.sqrt(1.0 - mach**2)
    denominator = beta + values * mach**2 / (2.0 * (1.0 + beta))
    if np.any(denominator <= 0):
        raise SolverError("Karman-Tsien correction breaks down", min_cp=float(values.min()), mach=mach)
    corrected = values / denominator
    return np.minimum(corrected, stagnation_cp(mach, gamma))


def insert_shock(
    xs: np.ndarray,
    cp: np.ndarray,
    cp_star: float,
    shock_width: float,
    blend_fraction: float = 0.2,
) -> np.ndarray:
    """Replace the supersonic pocket of one surface with a rooftop and tanh recovery.

    The pocket runs from the first to the last station below ``cp_star``. On
    it CP ramps from its entry value to the plateau ``(min(cp) + cp_star)/2``
    over ``blend_fraction`` of the pocket, then recovers to the corrected curve
    through ``(1 + tanh(3s)/tanh(3))/2`` with ``s = (x - x_b)/shock_width``.

    Args:
        xs (np.ndarray): Stations, increasing.
        cp (np.ndarray): Compressible CP at ``xs``.
        cp_star (float): Critical pressure coefficient.
        shock_width (float): Recovery half-width in chord units.
        blend_fraction (float): Rooftop blend length as a share of the pocket.

    Returns:
        np.ndarray: New CP curve; a copy of ``cp`` when nothing is supersonic.
    """
    values = np.asarray(cp, dtype=np.float64)
    supersonic = np.flatnonzero(values < cp_star)
    if supersonic.size == 0:
        return values.copy()

    first, last = int(supersonic[0]), int(supersonic[-1])
    x_a, x_b = xs[first], xs[last]
    plateau = 0.5 * (float(values.min()) + cp_star)

    blend_length = blend_fraction * (x_b - x_a)
    if blend_length > 0:
        ramp_in = np.clip((xs - x_a) / blend_length, 0.0, 1.0)
    else:
        ramp_in = np.ones_like(xs)
    rooftop = values[first] + (plateau - values[first]) * ramp_in

    s = (xs - x_b) / shock_width
    sharpness = _RECOVERY_SHARPNESS
    recovery = 0.5 * (1.0 + np.tanh(sharpness * np.clip(s, -1.0, 1.0)) / np.tanh(sharpness))
    shocked = (1.0 - recovery) * rooftop + recovery * values

    result = values.copy()
    region = (xs >= x_a) & (xs <= x_b + shock_width)
    result[region] = shocked[region]
    return result


def solve(
    airfoil: AirfoilCoords,
    cond: FlowConditions,
    shock_width: float | None = None,
    config: AeroConfig | None = None,
) -> CpDistribution:
    """Compressible CP distribution with modelled shocks.

    Args:
        airfoil (AirfoilCoords): Airfoil on the shared grid.
        cond (FlowConditions): Freestream state.
        shock_width (float | None): Overrides ``config.shock_width`` when given.
        config (AeroConfig | None): Surrogate constants; defaults apply when omitted.

    Returns:
        CpDistribution: Upper and lower CP on the 65 surface stations.

    Raises:
        SolverError: Propagated from the panel solve or the correction.
    """
    settings = config or AeroConfig()
    width = settings.shock_width if shock_width is None else shock_width
    if not 0 < width <= 0.1:
        raise ValueError(f"Shock width must be in (0, 0.1], got {width}")

    incompressible = panel_solve(airfoil, cond.alpha)
    cp_star = critical_cp(cond.mach, cond.gamma)
    xs = incompressible.xs
    surfaces = []
    for surface in (incompressible.cp_upper, incompressible.cp_lower):
        corrected = karman_tsien(surface, cond.mach, cond.gamma)
        surfaces.append(insert_shock(xs, corrected, cp_star, width, settings.blend_fraction))

    logger.debug(
        "Solved %s at M=%.3f alpha=%.2f: min CP %.3f (CP* %.3f)",
        airfoil.name or "airfoil",
        cond.mach,
        cond.alpha,
        float(min(surfaces[0].min(), surfaces[1].min())),
        cp_star,
    )
    return CpDistribution(xs=xs, cp_upper=surfaces[0], cp_lower=surfaces[1])


def lift_coefficient(cp: CpDistribution) -> float:
    """Trapezoidal integral of ``cp_lower - cp_upper`` over the chord."""
    return float(np.trapezoid(cp.cp_lower - cp.cp_upper, cp.xs))


def drag_coefficient(cl: float, features: PressureFeatures, config: AeroConfig | None = None) -> float:
    settings = config or AeroConfig()
    return settings.cd0 + settings.k_w * features.f_ss**2 + settings.k_i * cl**2


def lift_to_drag(cp: CpDistribution, features: PressureFeatures, config: AeroConfig | None = None) -> float:
    """Lift-to-drag ratio of a solved distribution.

    Returns:
        float: ``cl / cd``; 0.0 when the lift is exactly zero.
    """
    cl = lift_coefficient(cp)
    if cl == 0.0:
        return 0.0
    return cl / drag_coefficient(cl, features, config)
