"""Incompressible constant-source / constant-vortex panel method.

Panels run between consecutive airfoil nodes (counterclockwise from the
trailing edge). Each panel carries its own source strength; one vortex
strength is shared by all panels and fixed by the Kutta condition (equal and
opposite tangential velocity on the two trailing-edge panels).
"""

from __future__ import annotations

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict

from airfoil_inverse_design.aero.models import CpDistribution
from airfoil_inverse_design.geometry.airfoil import AirfoilCoords, surface_abscissae
from airfoil_inverse_design.utils.exceptions import SolverError

logger = logging.getLogger(__name__)

_MIN_PANEL_LENGTH = 1e-12
_MAX_CONDITION = 1e12


class PanelSolution(BaseModel):
    """Raw panel-method result.

    Attributes:
        control_x (np.ndarray): Panel midpoint abscissae.
        cp (np.ndarray): Incompressible CP at the panel midpoints.
        vortex_strength (float): Shared vortex density, counterclockwise positive.
        perimeter (float): Total panel length.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    control_x: np.ndarray
    cp: np.ndarray
    vortex_strength: float
    perimeter: float

    @property
    def circulation(self) -> float:
        return self.vortex_strength * self.perimeter


def _influence(nodes: np.ndarray) -> tuple[np.ndarray, ...]:
    start, end = nodes[:-1], nodes[1:]
    delta = end - start
    length = np.hypot(delta[:, 0], delta[:, 1])
    if np.any(length < _MIN_PANEL_LENGTH):
        raise SolverError("Degenerate geometry: zero-length panel", panel=int(np.argmin(length)))

    tangent = delta / length[:, None]
    inward = np.column_stack((-tangent[:, 1], tangent[:, 0]))
    normal = -inward
    control = 0.5 * (start + end)

    # local panel frame of every (control point i, panel j) pair
    rel = control[:, None, :] - start[None, :, :]
    xi = np.einsum("ijk,jk->ij", rel, tangent)
    eta = np.einsum("ijk,jk->ij", rel, inward)
    r1_sq = xi**2 + eta**2
    r2_sq = (xi - length[None, :]) ** 2 + eta**2
    diagonal = np.eye(len(length), dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = np.where(diagonal, 0.0, 0.5 * np.log(r1_sq / r2_sq))
    subtended = np.where(diagonal, -np.pi, np.arctan2(eta * length[None, :], xi * (xi - length[None, :]) + eta**2))

    two_pi = 2.0 * np.pi
    source_x = (log_term * tangent[None, :, 0] + subtended * inward[None, :, 0]) / two_pi
    source_y = (log_term * tangent[None, :, 1] + subtended * inward[None, :, 1]) / two_pi
    vortex_x = (-subtended * tangent[None, :, 0] + log_term * inward[None, :, 0]) / two_pi
    vortex_y = (-subtended * tangent[None, :, 1] + log_term * inward[None, :, 1]) / two_pi

    source_n = source_x * normal[:, None, 0] + source_y * normal[:, None, 1]
    source_t = source_x * tangent[:, None, 0] + source_y * tangent[:, None, 1]
    vortex_n = (vortex_x * normal[:, None, 0] + vortex_y * normal[:, None, 1]).sum(axis=1)
    vortex_t = (vortex_x * tangent[:, None, 0] + vortex_y * tangent[:, None, 1]).sum(axis=1)
    return control, tangent, normal, length, source_n, source_t, vortex_n, vortex_t


def solve_panels(airfoil: AirfoilCoords, alpha: float) -> PanelSolution:
    """Solve the panel system for one airfoil.

    Args:
        airfoil (AirfoilCoords): Airfoil on the shared grid (any ``y_scale``).
        alpha (float): Angle of attack in degrees.

    Returns:
        PanelSolution: Midpoint CP and the vortex strength.

    Raises:
        SolverError: On degenerate panels or a singular influence matrix.
    """
    nodes = airfoil.unscaled().points
    control, tangent, normal, length, source_n, source_t, vortex_n, vortex_t = _influence(nodes)
    count = len(length)

    freestream = np.array([np.cos(np.radians(alpha)), np.sin(np.radians(alpha))])
    system = np.zeros((count + 1, count + 1))
    rhs = np.zeros(count + 1)
    system[:count, :count] = source_n
    system[:count, count] = vortex_n
    rhs[:count] = -normal @ freestream
    system[count, :count] = source_t[0] + source_t[-1]
    system[count, count] = vortex_t[0] + vortex_t[-1]
    rhs[count] = -(tangent[0] + tangent[-1]) @ freestream

    condition = np.linalg.cond(system)
    if not np.isfinite(condition) or condition > _MAX_CONDITION:
        raise SolverError("Singular panel influence matrix", condition=float(condition))
    try:
        strengths = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"Panel system solve failed: {exc}") from exc

    sources, vortex = strengths[:count], float(strengths[count])
    tangential = source_t @ sources + vortex * vortex_t + tangent @ freestream
    cp = 1.0 - tangential**2
    if not np.all(np.isfinite(cp)):
        raise SolverError("Panel solution produced non-finite CP")
    logger.debug("Panel solve alpha=%.3f: circulation %.5f", alpha, vortex * float(length.sum()))
    return PanelSolution(control_x=control[:, 0], cp=cp, vortex_strength=vortex, perimeter=float(length.sum()))


def circulation_lift(solution: PanelSolution) -> float:
    """Kutta-Joukowski lift coefficient (unit chord, unit freestream)."""
    return -2.0 * solution.circulation


def panel_cp(solution: PanelSolution, stations: np.ndarray | None = None) -> CpDistribution:
    """Interpolate midpoint CP onto the surface stations.

    The leading-edge value is the mean of the two panels meeting there; the
    trailing-edge value is the adjacent panel's value on each surface.
    """
    xs = surface_abscissae() if stations is None else np.asarray(stations, dtype=np.float64)
    half = solution.cp.size // 2
    leading_edge_cp = 0.5 * (solution.cp[half - 1] + solution.cp[half])

    upper_x = np.concatenate(([0.0], solution.control_x[half - 1 :: -1], [1.0]))
    upper_cp = np.concatenate(([leading_edge_cp], solution.cp[half - 1 :: -1], [solution.cp[0]]))
    lower_x = np.concatenate(([0.0], solution.control_x[half:], [1.0]))
    lower_cp = np.concatenate(([leading_edge_cp], solution.cp[half:], [solution.cp[-1]]))

    return CpDistribution(
        xs=xs,
        cp_upper=np.interp(xs, upper_x, upper_cp),
        cp_lower=np.interp(xs, lower_x, lower_cp),
    )


def panel_solve(airfoil: AirfoilCoords, alpha: float) -> CpDistribution:
    """Incompressible CP of ``airfoil`` at ``alpha`` degrees on the shared stations."""
    return panel_cp(solve_panels(airfoil, alpha))
