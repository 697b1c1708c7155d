"""Closed-loop evaluation of a commanded feature vector.

features -> diffusion sample -> decoded CP -> mapping -> repaired airfoil
-> aerodynamic surrogate -> verified features and L/D.

Usage:

    evaluator = DesignEvaluator(diffusion_model, mapping_model)
    result = evaluator.evaluate(target, seed=5)
    print(result.raw_objective, result.delta_p)
"""

from __future__ import annotations

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from airfoil_inverse_design.aero.models import AeroConfig, CpDistribution, FlowConditions
from airfoil_inverse_design.aero.surrogate import lift_to_drag, solve
from airfoil_inverse_design.diffusion.ddpm import DiffusionModel, sample_batch
from airfoil_inverse_design.encoding.sdf import SdfGrid, decode
from airfoil_inverse_design.features.extraction import AnchorMode, FswMode, PressureFeatures, extract
from airfoil_inverse_design.geometry.airfoil import AirfoilCoords
from airfoil_inverse_design.mapping.model import MappingModel, predict_airfoil
from airfoil_inverse_design.utils.exceptions import AirfoilDesignError, EvaluationError

logger = logging.getLogger(__name__)


class DesignEvaluation(BaseModel):
    """Outcome of one closed-loop evaluation.

    Attributes:
        target (list[float]): Commanded feature vector.
        raw_objective (float): L/D of the verified design; 0 when failed.
        failed (bool): True when any stage raised.
        error (dict | None): ``to_dict()`` of the failure.
        verified (list[float] | None): Features of the surrogate CP of the predicted airfoil.
        generated (list[float] | None): Features of the decoded generated CP.
        delta_cp (float | None): Mean absolute gap between generated and verified CP.
        delta_p (list[float] | None): Componentwise ``|target - verified|``.
        delta_p_max (float | None): Largest component of ``delta_p`` in training-set standard deviations.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    target: list[float]
    raw_objective: float = 0.0
    failed: bool = False
    error: dict | None = None
    verified: list[float] | None = None
    generated: list[float] | None = None
    delta_cp: float | None = None
    delta_p: list[float] | None = None
    delta_p_max: float | None = None
    grid: SdfGrid | None = Field(default=None, exclude=True)
    airfoil: AirfoilCoords | None = Field(default=None, exclude=True)
    generated_cp: CpDistribution | None = Field(default=None, exclude=True)
    verified_cp: CpDistribution | None = Field(default=None, exclude=True)
    verified_features: PressureFeatures | None = Field(default=None, exclude=True)

    @property
    def verified_vector(self) -> np.ndarray | None:
        return None if self.verified is None else np.asarray(self.verified, dtype=np.float64)


def delta_cp(generated: CpDistribution, verified: CpDistribution) -> float:
    """Mean absolute CP gap over both surfaces."""
    gap = np.concatenate((generated.cp_upper - verified.cp_upper, generated.cp_lower - verified.cp_lower))
    return float(np.mean(np.abs(gap)))


class DesignEvaluator:
    """Binds trained models and flow settings into a feature-to-design evaluator.

    Args:
        diffusion (DiffusionModel): Conditional generator of SDF grids.
        mapping (MappingModel): Grid-to-airfoil regressor.
        flow (FlowConditions | None): Freestream state of the surrogate solve.
        aero (AeroConfig | None): Surrogate constants.
        omega (float): Default guidance weight.
        fsw_mode (FswMode): Feature convention of the conditioning vectors.
        anchor_mode (AnchorMode): Pre-shock anchor convention.
    """

    def __init__(
        self,
        diffusion: DiffusionModel,
        mapping: MappingModel,
        flow: FlowConditions | None = None,
        aero: AeroConfig | None = None,
        omega: float = 1.0,
        fsw_mode: FswMode = "position",
        anchor_mode: AnchorMode = "suction_peak",
    ):
        self.diffusion = diffusion
        self.mapping = mapping
        self.flow = flow or FlowConditions()
        self.aero = aero or AeroConfig()
        self.omega = omega
        self.fsw_mode = fsw_mode
        self.anchor_mode = anchor_mode

    @property
    def feature_scale(self) -> np.ndarray:
        """Training-set standard deviation of each feature."""
        return np.asarray(self.diffusion.normalizer.std, dtype=np.float64)

    def verify_grid(self, grid: SdfGrid, target: np.ndarray) -> DesignEvaluation:
        """Run every stage after sampling on an existing grid."""
        result = DesignEvaluation(target=np.asarray(target, dtype=np.float64).tolist(), grid=grid)
        try:
            generated_cp = decode(grid)
            result.generated_cp = generated_cp
            result.generated = extract(generated_cp, self.fsw_mode, self.anchor_mode).to_vector().tolist()
            airfoil = predict_airfoil(grid, self.mapping)
            result.airfoil = airfoil
            verified_cp = solve(airfoil, self.flow, config=self.aero)
            features = extract(verified_cp, self.fsw_mode, self.anchor_mode)
            objective = lift_to_drag(verified_cp, features, self.aero)
        except (AirfoilDesignError, ValueError) as exc:
            error = exc if isinstance(exc, AirfoilDesignError) else EvaluationError(str(exc))
            logger.warning("Design evaluation failed: %s", error)
            result.failed = True
            result.error = error.to_dict()
            return result

        verified = features.to_vector()
        gap = np.abs(np.asarray(result.target) - verified)
        result.verified_cp = verified_cp
        result.verified_features = features
        result.verified = verified.tolist()
        result.raw_objective = float(objective)
        result.delta_cp = delta_cp(generated_cp, verified_cp)
        result.delta_p = gap.tolist()
        result.delta_p_max = float(np.max(gap / self.feature_scale))
        return result

    def evaluate_many(
        self,
        targets: np.ndarray,
        seeds: list[int],
        conditional: bool = True,
        omega: float | None = None,
    ) -> list[DesignEvaluation]:
        """Evaluate a batch; sample ``i`` depends only on ``seeds[i]``.

        With ``conditional=False`` the grids are drawn unconditionally and the
        targets serve only as the reference of ``delta_p``.
        """
        vectors = np.atleast_2d(np.asarray(targets, dtype=np.float64))
        weight = self.omega if omega is None else omega
        grids = sample_batch(self.diffusion, vectors if conditional else None, weight, list(seeds))
        return [self.verify_grid(grid, vector) for grid, vector in zip(grids, vectors, strict=True)]

    def evaluate(
        self,
        features: PressureFeatures | np.ndarray,
        seed: int,
        conditional: bool = True,
        omega: float | None = None,
    ) -> DesignEvaluation:
        vector = features.to_vector() if isinstance(features, PressureFeatures) else np.asarray(features)
        return self.evaluate_many(vector[None, :], [seed], conditional, omega)[0]


def evaluate_design(
    features: PressureFeatures | np.ndarray, evaluator: DesignEvaluator, seed: int = 0
) -> DesignEvaluation:
    """Evaluate one commanded feature vector with guidance weight ``evaluator.omega``."""
    return evaluator.evaluate(features, seed)
