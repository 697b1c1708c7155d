"""Efficient global optimisation over the feature box.

Each iteration fits a GP to the penalised objectives seen so far, picks the
maximiser of expected improvement and evaluates it. EI is maximised by
scoring a Latin hypercube of candidates and polishing the best few with
bounded coordinate ascent.

Usage:

    result = run_ego(OptimizationProblem(), objective, budget=60, seed=3)
    write_frame(out / "convergence.csv", result.history_frame())
"""

from __future__ import annotations

import logging
from collections.abc import Callable

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from scipy.optimize import minimize_scalar
from scipy.stats import qmc

from airfoil_inverse_design.optimizer.evaluation import DesignEvaluation
from airfoil_inverse_design.optimizer.gp import GpSurrogate, expected_improvement
from airfoil_inverse_design.optimizer.problem import OptimizationProblem
from airfoil_inverse_design.utils.exceptions import OptimizationError

logger = logging.getLogger(__name__)

INITIAL_POINTS = 12
EI_CANDIDATES = 256
EI_STARTS = 4
_ASCENT_SWEEPS = 3
_DUPLICATE_DISTANCE = 1e-9

Objective = Callable[[np.ndarray, int], DesignEvaluation]
HISTORY_COLUMNS = ["iteration", "raw_objective", "penalized_objective", "best_so_far", "feasible", "delta_p_max"]


class EgoStep(BaseModel):
    """One evaluated point of the optimisation history."""

    iteration: int
    features: list[float]
    raw_objective: float
    penalized_objective: float
    feasible: bool
    failed: bool = False
    delta_p_max: float | None = None
    evaluation: DesignEvaluation | None = Field(default=None, exclude=True)


class EgoResult(BaseModel):
    best: EgoStep
    history: list[EgoStep]

    def history_frame(self) -> pd.DataFrame:
        """Convergence table; ``best_so_far`` is the running maximum of the penalised objective."""
        penalized = np.array([step.penalized_objective for step in self.history])
        return pd.DataFrame(
            {
                "iteration": [step.iteration for step in self.history],
                "raw_objective": [step.raw_objective for step in self.history],
                "penalized_objective": penalized,
                "best_so_far": np.maximum.accumulate(penalized),
                "feasible": [int(step.feasible) for step in self.history],
                "delta_p_max": [np.nan if step.delta_p_max is None else step.delta_p_max for step in self.history],
            },
            columns=HISTORY_COLUMNS,
        )


def _record(problem: OptimizationProblem, x: np.ndarray, iteration: int, evaluation: DesignEvaluation) -> EgoStep:
    verified = evaluation.verified_vector
    return EgoStep(
        iteration=iteration,
        features=np.asarray(x, dtype=np.float64).tolist(),
        raw_objective=evaluation.raw_objective,
        penalized_objective=problem.score(evaluation.raw_objective, verified, evaluation.failed),
        feasible=not evaluation.failed and problem.is_feasible(verified),
        failed=evaluation.failed,
        delta_p_max=evaluation.delta_p_max,
        evaluation=evaluation,
    )


def _coordinate_ascent(
    surrogate: GpSurrogate,
    start: np.ndarray,
    start_value: float,
    lower: np.ndarray,
    upper: np.ndarray,
    best: float,
) -> tuple[np.ndarray, float]:
    x, value = start.copy(), start_value
    for _ in range(_ASCENT_SWEEPS):
        improved = False
        for dim in range(x.size):
            trial = x.copy()

            def negative_ei(v: float, dim: int = dim, trial: np.ndarray = trial) -> float:
                trial[dim] = v
                return -float(expected_improvement(surrogate, trial, best)[0])

            found = minimize_scalar(
                negative_ei,
                bounds=(lower[dim], upper[dim]),
                method="bounded",
                options={"xatol": 1e-4 * (upper[dim] - lower[dim])},
            )
            if -found.fun > value:
                x[dim], value, improved = found.x, -found.fun, True
        if not improved:
            break
    return x, value


def maximize_expected_improvement(
    surrogate: GpSurrogate,
    problem: OptimizationProblem,
    best: float,
    observed: np.ndarray,
    rng: np.random.Generator,
    candidates: int = EI_CANDIDATES,
    starts: int = EI_STARTS,
) -> tuple[np.ndarray, float]:
    """Next point to evaluate and its EI.

    When EI vanishes everywhere, or the maximiser repeats an observed point,
    the candidate with the largest predictive spread is returned instead.
    """
    lower, upper = problem.bounds
    pool = qmc.scale(qmc.LatinHypercube(d=lower.size, seed=rng).random(candidates), lower, upper)
    scores = expected_improvement(surrogate, pool, best)
    chosen, chosen_value = pool[int(np.argmax(scores))], float(np.max(scores))
    for index in np.argsort(-scores)[:starts]:
        x, value = _coordinate_ascent(surrogate, pool[index], float(scores[index]), lower, upper, best)
        if value > chosen_value:
            chosen, chosen_value = x, value

    span = upper - lower
    nearest = np.min(np.linalg.norm((observed - chosen) / span, axis=1))
    if chosen_value <= 0 or nearest < _DUPLICATE_DISTANCE:
        _, spread = surrogate.predict(pool)
        chosen, chosen_value = pool[int(np.argmax(spread))], 0.0
    return np.clip(chosen, lower, upper), chosen_value


def run_ego(
    problem: OptimizationProblem,
    objective: Objective,
    budget: int,
    seed: int,
    initial_points: int = INITIAL_POINTS,
    on_evaluation: Callable[[EgoStep], None] | None = None,
) -> EgoResult:
    """Maximise the penalised objective within ``budget`` evaluations.

    Args:
        problem (OptimizationProblem): Box, constraints and penalty.
        objective (Objective): Called as ``objective(features, iteration)``.
        budget (int): Total evaluations, initial design included.
        seed (int): Seed of the initial design and the EI candidate pools.
        initial_points (int): Latin hypercube size of the initial design.
        on_evaluation (Callable[[EgoStep], None] | None): Hook run after every evaluation.

    Returns:
        EgoResult: Best step (highest penalised objective) and the full history.

    Raises:
        ValueError: If ``budget`` is smaller than the initial design.
        OptimizationError: If every initial evaluation fails.
    """
    if initial_points < 1 or budget < initial_points:
        raise ValueError(f"Budget {budget} must cover the {initial_points}-point initial design")
    rng = np.random.default_rng(seed)
    lower, upper = problem.bounds
    design = qmc.scale(qmc.LatinHypercube(d=lower.size, seed=rng).random(initial_points), lower, upper)

    history: list[EgoStep] = []

    def evaluate(x: np.ndarray) -> None:
        iteration = len(history) + 1
        step = _record(problem, x, iteration, objective(x, iteration))
        history.append(step)
        logger.info(
            "EGO evaluation %d/%d: raw %.4f penalised %.4f feasible %s",
            iteration,
            budget,
            step.raw_objective,
            step.penalized_objective,
            step.feasible,
        )
        if on_evaluation is not None:
            on_evaluation(step)

    for x in design:
        evaluate(x)
    if all(step.failed for step in history):
        raise OptimizationError(f"All {initial_points} initial evaluations failed", budget=budget)

    while len(history) < budget:
        observed = np.array([step.features for step in history])
        scores = np.array([step.penalized_objective for step in history])
        surrogate = GpSurrogate(lower, upper).fit(observed, scores)
        x, ei = maximize_expected_improvement(surrogate, problem, float(scores.max()), observed, rng)
        logger.debug("EGO next point %s (EI %.3e)", np.round(x, 4), ei)
        evaluate(x)

    best = max(history, key=lambda step: step.penalized_objective)
    logger.info(
        "EGO finished: best penalised objective %.4f at evaluation %d", best.penalized_objective, best.iteration
    )
    return EgoResult(best=best, history=history)
