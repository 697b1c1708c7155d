"""Evaluation reports: feature errors, mapping accuracy, acceptance checks and coupling sweeps.

All error numbers come from ``feature_mae``/``feature_mre`` and
``mapping_metrics``; this module only arranges them into tables.
"""

from __future__ import annotations

import logging

import numpy as np
import pandas as pd

from airfoil_inverse_design.features.extraction import feature_mae, feature_mre
from airfoil_inverse_design.mapping.model import MappingModel, mapping_metrics, per_point_frame, predict_ordinates
from airfoil_inverse_design.optimizer.evaluation import DesignEvaluation, DesignEvaluator
from airfoil_inverse_design.optimizer.problem import OptimizationProblem
from airfoil_inverse_design.pipeline.dataset import TrainingArrays
from airfoil_inverse_design.utils.constants import FEATURE_COUNT, FEATURE_NAMES

logger = logging.getLogger(__name__)

# variant name -> (conditional, omega)
VARIANTS: dict[str, tuple[bool, float]] = {
    "conditional_w1": (True, 1.0),
    "unconditional": (False, 0.0),
    "conditional_w0": (True, 0.0),
    "conditional_w4": (True, 4.0),
}
EVAL_COUNT = 20
CLOSED_LOOP_TOLERANCE = 0.05
MIN_FEATURES_BEATEN = 5


def evaluate_variants(
    evaluator: DesignEvaluator,
    targets: np.ndarray,
    seeds: list[int],
    variants: dict[str, tuple[bool, float]] | None = None,
) -> dict[str, list[DesignEvaluation]]:
    """Closed-loop evaluation of every target under each sampling variant."""
    results = {}
    for name, (conditional, omega) in (variants or VARIANTS).items():
        logger.info("Evaluating variant %s on %d targets", name, len(seeds))
        results[name] = evaluator.evaluate_many(targets, seeds, conditional=conditional, omega=omega)
        failed = sum(item.failed for item in results[name])
        if failed:
            logger.warning("Variant %s: %d of %d evaluations failed", name, failed, len(seeds))
    return results


def _successful(evaluations: list[DesignEvaluation]) -> tuple[np.ndarray, np.ndarray]:
    ok = [item for item in evaluations if not item.failed]
    if not ok:
        empty = np.empty((0, FEATURE_COUNT))
        return empty, empty
    return np.array([item.target for item in ok]), np.array([item.verified for item in ok])


def error_summary_frame(results: dict[str, list[DesignEvaluation]]) -> pd.DataFrame:
    """MAE and MRE per feature for each variant over its successful evaluations."""
    rows = []
    for name, evaluations in results.items():
        targets, verified = _successful(evaluations)
        if targets.shape[0] == 0:
            mae = mre = np.full(FEATURE_COUNT, np.nan)
        else:
            mae = feature_mae(np.abs(targets - verified))
            mre = feature_mre(targets, verified)
        rows.append({"variant": name, "metric": "mae", **dict(zip(FEATURE_NAMES, mae, strict=True))})
        rows.append({"variant": name, "metric": "mre", **dict(zip(FEATURE_NAMES, mre, strict=True))})
    return pd.DataFrame(rows, columns=["variant", "metric", *FEATURE_NAMES])


def error_distribution_frame(ids: list[str], results: dict[str, list[DesignEvaluation]]) -> pd.DataFrame:
    """Absolute error per record and feature; failed evaluations hold NaN."""
    rows = []
    for name, evaluations in results.items():
        for record_id, item in zip(ids, evaluations, strict=True):
            errors = [np.nan] * FEATURE_COUNT if item.failed else item.delta_p
            rows.append(
                {
                    "variant": name,
                    "id": record_id,
                    "failed": int(item.failed),
                    **dict(zip(FEATURE_NAMES, errors, strict=True)),
                }
            )
    return pd.DataFrame(rows, columns=["variant", "id", "failed", *FEATURE_NAMES])


def _mae_row(summary: pd.DataFrame, variant: str) -> np.ndarray:
    row = summary[(summary["variant"] == variant) & (summary["metric"] == "mae")]
    return row[list(FEATURE_NAMES)].to_numpy(dtype=np.float64)[0]


def acceptance_checks(summary: pd.DataFrame, results: dict[str, list[DesignEvaluation]]) -> dict:
    """Closed-loop checks on the ``eval`` results.

    ``closed_loop`` and ``conditional_beats_unconditional`` are hard checks;
    ``guidance_u_shape`` only warns.
    """
    _, verified = _successful(results["conditional_w1"])
    targets, _ = _successful(results["conditional_w1"])
    if targets.shape[0]:
        gaps = np.abs(targets - verified)
        median_sp = float(np.median(gaps[:, FEATURE_NAMES.index("f_sp")]))
        median_lm = float(np.median(gaps[:, FEATURE_NAMES.index("f_lm")]))
    else:
        median_sp = median_lm = float("nan")
    closed_loop = bool(median_sp < CLOSED_LOOP_TOLERANCE and median_lm < CLOSED_LOOP_TOLERANCE)

    conditional = _mae_row(summary, "conditional_w1")
    unconditional = _mae_row(summary, "unconditional")
    beaten = [name for name, c, u in zip(FEATURE_NAMES, conditional, unconditional, strict=True) if c < u]

    weak = _mae_row(summary, "conditional_w0")
    strong = _mae_row(summary, "conditional_w4")
    u_shape = [
        name
        for name, w1, w0, w4 in zip(FEATURE_NAMES, conditional, weak, strong, strict=True)
        if w1 <= w0 and w1 <= w4
    ]
    if len(u_shape) < FEATURE_COUNT:
        missing = sorted(set(FEATURE_NAMES) - set(u_shape))
        logger.warning("Guidance sweep: omega=1 is not the best weight for %s", missing)

    return {
        "closed_loop": {
            "median_abs_error_f_sp": median_sp,
            "median_abs_error_f_lm": median_lm,
            "tolerance": CLOSED_LOOP_TOLERANCE,
            "passed": closed_loop,
        },
        "conditional_beats_unconditional": {
            "features": beaten,
            "required": MIN_FEATURES_BEATEN,
            "passed": len(beaten) >= MIN_FEATURES_BEATEN,
        },
        "guidance_u_shape": {
            "features": u_shape,
            "passed": len(u_shape) == FEATURE_COUNT,
            "warning_only": True,
        },
        "failures": {name: int(sum(item.failed for item in items)) for name, items in results.items()},
    }


def mapping_report(model: MappingModel, arrays: TrainingArrays) -> pd.DataFrame:
    """Per-ordinate MAE/MRE of the mapping model on ``arrays``."""
    predicted = predict_ordinates(model, arrays.grids)
    return per_point_frame(*mapping_metrics(predicted, arrays.ordinates))


def default_sweep(problem: OptimizationProblem, base: np.ndarray, feature_index: int, count: int = 4) -> np.ndarray:
    """``count`` values within ±10 % of the feature's range around ``base``, clipped to the bounds."""
    lower, upper = problem.bounds
    span = upper[feature_index] - lower[feature_index]
    values = base[feature_index] + span * np.linspace(-0.1, 0.1, count)
    return np.clip(values, lower[feature_index], upper[feature_index])


def coupling_analysis(
    evaluator: DesignEvaluator,
    base: np.ndarray,
    feature_index: int,
    values: np.ndarray,
    seed: int,
) -> pd.DataFrame:
    """Sweep one commanded feature with the other five held at ``base``.

    Every step samples with the same seed so only the command changes.

    Returns:
        pd.DataFrame: ``step, commanded, failed`` and the verified features (NaN on failure).
    """
    if not 0 <= feature_index < FEATURE_COUNT:
        raise ValueError(f"Feature index must be in [0, {FEATURE_COUNT}), got {feature_index}")
    columns = ["step", "commanded", "failed", *FEATURE_NAMES]
    rows = []
    for step, value in enumerate(np.asarray(values, dtype=np.float64), start=1):
        target = np.asarray(base, dtype=np.float64).copy()
        target[feature_index] = value
        result = evaluator.evaluate(target, seed)
        verified = [np.nan] * FEATURE_COUNT if result.failed else result.verified
        rows.append(
            {
                "step": step,
                "commanded": value,
                "failed": int(result.failed),
                **dict(zip(FEATURE_NAMES, verified, strict=True)),
            }
        )
        logger.info("Coupling step %d: %s = %.4f failed %s", step, FEATURE_NAMES[feature_index], value, result.failed)
    return pd.DataFrame(rows, columns=columns)


def sensitivity_row(steps: pd.DataFrame) -> np.ndarray:
    """Least-squares slope of each verified feature against the commanded value.

    NaN without two distinct successful commands.
    """
    ok = steps[steps["failed"] == 0]
    if ok["commanded"].nunique() < 2:
        return np.full(FEATURE_COUNT, np.nan)
    commanded = ok["commanded"].to_numpy(dtype=np.float64)
    return np.array([np.polyfit(commanded, ok[name].to_numpy(dtype=np.float64), 1)[0] for name in FEATURE_NAMES])


def sensitivity_matrix(rows: dict[int, np.ndarray]) -> pd.DataFrame:
    """6x6 table of d(verified j)/d(commanded i); rows not swept stay NaN."""
    matrix = np.full((FEATURE_COUNT, FEATURE_COUNT), np.nan)
    for index, row in rows.items():
        matrix[index] = row
    frame = pd.DataFrame(matrix, columns=list(FEATURE_NAMES))
    frame.insert(0, "commanded", list(FEATURE_NAMES))
    return frame


def is_monotone(values: pd.Series, decreasing: bool = True) -> bool:
    clean = values.dropna().to_numpy(dtype=np.float64)
    steps = np.diff(clean)
    return bool(np.all(steps < 0) if decreasing else np.all(steps > 0))
