"""EGO with retraining of the generative models on poorly reproduced designs.

After every evaluation the largest normalised feature gap ``delta_p_max`` is
compared with ``error_criteria``. Above it, the design is handed to a
``Retrainer`` that appends it to the dataset and fine-tunes the models. A
round whose fine-tune loss ends above five times its starting loss is rolled
back. Retraining stops after ``max_rounds``; the optimisation itself always
runs to its budget.
"""

from __future__ import annotations

import logging
import math
from typing import Protocol

from pydantic import BaseModel, Field

from airfoil_inverse_design.optimizer.ego import INITIAL_POINTS, EgoResult, EgoStep, Objective, run_ego
from airfoil_inverse_design.optimizer.evaluation import DesignEvaluation
from airfoil_inverse_design.optimizer.problem import OptimizationProblem

logger = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 5.0


class RetrainOutcome(BaseModel):
    """First and last fine-tune epoch loss of each retrained model, keyed by model name."""

    start_loss: dict[str, float]
    end_loss: dict[str, float]


class Retrainer(Protocol):
    def retrain(self, evaluation: DesignEvaluation, round_index: int) -> RetrainOutcome: ...

    def rollback(self) -> None: ...


class RoundLog(BaseModel):
    round_index: int
    iteration: int
    trigger_delta_p: float
    start_loss: dict[str, float]
    end_loss: dict[str, float]
    rolled_back: bool = False


class ActiveLearningResult(BaseModel):
    ego: EgoResult
    rounds: list[RoundLog] = Field(default_factory=list)


def diverged(outcome: RetrainOutcome) -> bool:
    """True when any model ends above five times its starting loss, or non-finite."""
    for name, start in outcome.start_loss.items():
        end = outcome.end_loss.get(name, math.inf)
        if not math.isfinite(end) or end > DIVERGENCE_FACTOR * start:
            return True
    return False


class ActiveLearningLoop:
    """Drive ``run_ego`` and retrain whenever a design misses its target features.

    Args:
        problem (OptimizationProblem): Optimisation problem.
        objective (Objective): Closed-loop design evaluation.
        retrainer (Retrainer): Extends the dataset and fine-tunes the models.
        error_criteria (float): Threshold on ``delta_p_max``; ``inf`` disables retraining.
        max_rounds (int): Upper bound on retraining rounds.
    """

    def __init__(
        self,
        problem: OptimizationProblem,
        objective: Objective,
        retrainer: Retrainer,
        error_criteria: float = 0.1,
        max_rounds: int = 10,
    ):
        if error_criteria < 0:
            raise ValueError(f"error_criteria must be >= 0, got {error_criteria}")
        self.problem = problem
        self.objective = objective
        self.retrainer = retrainer
        self.error_criteria = error_criteria
        self.max_rounds = max_rounds
        self.rounds: list[RoundLog] = []

    def _after_evaluation(self, step: EgoStep) -> None:
        if step.failed or step.delta_p_max is None or step.evaluation is None:
            return
        if step.delta_p_max <= self.error_criteria or len(self.rounds) >= self.max_rounds:
            return
        round_index = len(self.rounds) + 1
        outcome = self.retrainer.retrain(step.evaluation, round_index)
        rolled_back = diverged(outcome)
        if rolled_back:
            self.retrainer.rollback()
            logger.warning(
                "Round %d diverged (losses %s -> %s); rolled back", round_index, outcome.start_loss, outcome.end_loss
            )
        self.rounds.append(
            RoundLog(
                round_index=round_index,
                iteration=step.iteration,
                trigger_delta_p=step.delta_p_max,
                start_loss=outcome.start_loss,
                end_loss=outcome.end_loss,
                rolled_back=rolled_back,
            )
        )
        logger.info(
            "Active-learning round %d at evaluation %d: delta P %.4f, losses %s -> %s, rolled back %s",
            round_index,
            step.iteration,
            step.delta_p_max,
            outcome.start_loss,
            outcome.end_loss,
            rolled_back,
        )

    def run(self, budget: int, seed: int, initial_points: int = INITIAL_POINTS) -> ActiveLearningResult:
        self.rounds = []
        result = run_ego(self.problem, self.objective, budget, seed, initial_points, self._after_evaluation)
        return ActiveLearningResult(ego=result, rounds=list(self.rounds))
