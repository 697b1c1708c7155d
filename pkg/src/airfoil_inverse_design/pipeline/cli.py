"""Command-line entry point ``airfoil-design``.

Verbs: ``dataset``, ``train-diffusion``, ``train-mapping``, ``sample``,
``verify``, ``optimize``, ``eval`` and ``coupling``. Every verb accepts
``--config``, ``--seed``, ``--out`` (workspace root) and ``--verbose``.

Exit status is 0 on success, 2 on usage errors (including an unreadable
config) and 1 on operation failures, which are also printed to standard
error as a JSON object.

Usage:

    airfoil-design dataset --config run.json --out work
    airfoil-design train-diffusion --out work
    airfoil-design verify --record 0042 --out work --svg
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Callable
from pathlib import Path

import numpy as np

from airfoil_inverse_design.data_access.file_access import (
    loss_history_frame,
    write_airfoil,
    write_cp_csv,
    write_frame,
    write_grid,
    write_json,
)
from airfoil_inverse_design.diffusion.ddpm import (
    DiffusionModel,
    load_diffusion,
    sample_batch,
    save_diffusion,
    train_diffusion,
)
from airfoil_inverse_design.encoding.sdf import decode
from airfoil_inverse_design.mapping.model import MappingModel, load_mapping, save_mapping, train_mapping
from airfoil_inverse_design.optimizer.active_learning import ActiveLearningLoop
from airfoil_inverse_design.optimizer.evaluation import DesignEvaluation, DesignEvaluator
from airfoil_inverse_design.pipeline import plots
from airfoil_inverse_design.pipeline.config import PipelineConfig, Workspace, load_config, load_profile
from airfoil_inverse_design.pipeline.dataset import (
    build_dataset,
    held_out_records,
    load_records,
    load_training_arrays,
    training_records,
)
from airfoil_inverse_design.pipeline.lock import checkpoint_lock
from airfoil_inverse_design.pipeline.reports import (
    EVAL_COUNT,
    acceptance_checks,
    coupling_analysis,
    default_sweep,
    error_distribution_frame,
    error_summary_frame,
    evaluate_variants,
    is_monotone,
    mapping_report,
    sensitivity_matrix,
    sensitivity_row,
)
from airfoil_inverse_design.pipeline.retraining import ModelRetrainer
from airfoil_inverse_design.utils.constants import FEATURE_COUNT, FEATURE_NAMES
from airfoil_inverse_design.utils.exceptions import AirfoilDesignError, EvaluationError
from airfoil_inverse_design.utils.seeding import component_seed

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


def parse_feature_vector(text: str) -> np.ndarray:
    """Parse ``"f_sp,f_sw,f_ss,f_pg,f_lm,f_area"``.

    Raises:
        ValueError: Unless the text holds six finite numbers.
    """
    try:
        values = np.array([float(part) for part in text.split(",")], dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"Features must be {FEATURE_COUNT} comma-separated numbers, got {text!r}") from exc
    if values.shape != (FEATURE_COUNT,) or not np.all(np.isfinite(values)):
        raise ValueError(f"Features must be {FEATURE_COUNT} comma-separated finite numbers, got {text!r}")
    return values


def parse_values(text: str) -> np.ndarray:
    if not text.strip():
        return np.empty(0)
    return np.array([float(part) for part in text.split(",")], dtype=np.float64)


def _load_models(workspace: Workspace) -> tuple[DiffusionModel, MappingModel]:
    diffusion = load_diffusion(workspace.diffusion_checkpoint)
    mapping = load_mapping(workspace.mapping_checkpoint)
    return diffusion, mapping


def _evaluator(config: PipelineConfig, workspace: Workspace) -> DesignEvaluator:
    diffusion, mapping = _load_models(workspace)
    return DesignEvaluator(
        diffusion,
        mapping,
        flow=config.flow,
        aero=config.aero,
        omega=config.diffusion.omega,
        fsw_mode=config.features.fsw_mode,
        anchor_mode=config.features.anchor_mode,
    )


def _target(args: argparse.Namespace, workspace: Workspace) -> tuple[np.ndarray, str]:
    if args.features:
        return parse_feature_vector(args.features), "custom"
    if args.record:
        for record in load_records(workspace):
            if record.id == args.record:
                return record.features.to_vector(), record.id
        raise ValueError(f"No record {args.record!r} in {workspace.manifest_path}")
    raise ValueError("Give either --features or --record")


def _write_design(directory: Path, evaluation: DesignEvaluation, svg: bool, title: str) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    write_json(directory / "evaluation.json", evaluation.model_dump(mode="json"))
    if evaluation.airfoil is not None:
        write_airfoil(directory / "airfoil.dat", evaluation.airfoil)
    if evaluation.verified_cp is not None:
        write_cp_csv(directory / "cp_verified.csv", evaluation.verified_cp)
    if evaluation.generated_cp is not None:
        write_cp_csv(directory / "cp_generated.csv", evaluation.generated_cp)
    if svg and evaluation.verified_cp is not None:
        plots.plot_cp_comparison(directory / "cp.svg", evaluation.verified_cp, evaluation.generated_cp, title)


def cmd_dataset(args: argparse.Namespace, config: PipelineConfig, workspace: Workspace) -> None:
    records = build_dataset(config, workspace.dataset_dir)
    print(json.dumps({"records": len(records), "manifest": str(workspace.manifest_path)}))


def cmd_train_diffusion(args: argparse.Namespace, config: PipelineConfig, workspace: Workspace) -> None:
    seed = config.dataset.seed
    with checkpoint_lock(workspace.diffusion_checkpoint):
        arrays = load_training_arrays(workspace.dataset_dir, training_records(config, load_records(workspace)))
        model = DiffusionModel.create(
            config.diffusion.denoiser_config(config.dataset.resolution),
            component_seed(seed, "diffusion.init"),
            config.diffusion.schedule(),
            sdf_abs=config.features.sdf_abs,
        )
        history = train_diffusion(
            model, arrays.grids, arrays.features, config.diffusion.training(), component_seed(seed, "diffusion.train")
        )
        save_diffusion(model, workspace.diffusion_checkpoint)
    frame = loss_history_frame(history)
    write_frame(workspace.checkpoint_dir / "diffusion_loss.csv", frame)
    if args.svg:
        plots.plot_loss_history(workspace.checkpoint_dir / "diffusion_loss.svg", frame)


def cmd_train_mapping(args: argparse.Namespace, config: PipelineConfig, workspace: Workspace) -> None:
    with checkpoint_lock(workspace.mapping_checkpoint):
        arrays = load_training_arrays(workspace.dataset_dir, training_records(config, load_records(workspace)))
        seed = component_seed(config.dataset.seed, "mapping.train")
        model, history = train_mapping(arrays.grids, arrays.ordinates, config.mapping_config(), seed)
        save_mapping(model, workspace.mapping_checkpoint)
    frame = loss_history_frame(history.train_loss, history.validation_loss)
    write_frame(workspace.checkpoint_dir / "mapping_loss.csv", frame)
    if args.svg:
        plots.plot_loss_history(workspace.checkpoint_dir / "mapping_loss.svg", frame)


def cmd_sample(args: argparse.Namespace, config: PipelineConfig, workspace: Workspace) -> None:
    diffusion = load_diffusion(workspace.diffusion_checkpoint)
    omega = config.diffusion.omega if args.omega is None else args.omega
    features = None
    if not args.unconditional:
        vector, _ = _target(args, workspace)
        features = np.tile(vector, (args.count, 1))
    seeds = [component_seed(config.dataset.seed, f"sample.{index}") for index in range(args.count)]
    grids = sample_batch(diffusion, features, omega, seeds)
    directory = workspace.root / "samples"
    directory.mkdir(parents=True, exist_ok=True)
    label = "uncond" if args.unconditional else f"w{omega:g}"
    for index, grid in enumerate(grids):
        stem = f"sample_{label}_{index:02d}"
        write_grid(directory / f"{stem}.grid", grid)
        try:
            write_cp_csv(directory / f"{stem}_cp.csv", decode(grid))
        except AirfoilDesignError as exc:
            logger.warning("Sample %s is not decodable: %s", stem, exc)


def cmd_verify(args: argparse.Namespace, config: PipelineConfig, workspace: Workspace) -> None:
    vector, label = _target(args, workspace)
    evaluator = _evaluator(config, workspace)
    omega = config.diffusion.omega if args.omega is None else args.omega
    evaluation = evaluator.evaluate(vector, component_seed(config.dataset.seed, f"verify.{label}"), omega=omega)
    _write_design(workspace.reports_dir / f"verify_{label}", evaluation, args.svg, f"verify {label}")
    if evaluation.failed:
        raise EvaluationError("Verification failed", cause=evaluation.error)
    print(
        json.dumps(
            {
                "lift_to_drag": evaluation.raw_objective,
                "delta_cp": evaluation.delta_cp,
                "delta_p": dict(zip(FEATURE_NAMES, evaluation.delta_p, strict=True)),
            },
            sort_keys=True,
        )
    )


def cmd_optimize(args: argparse.Namespace, config: PipelineConfig, workspace: Workspace) -> None:
    settings = config.optimizer
    seed = config.dataset.seed
    constrained = not args.unconstrained
    budget = args.budget or settings.budget
    error_criteria = settings.error_criteria if args.error_criteria is None else args.error_criteria
    directory = workspace.reports_dir / ("optimize_constrained" if constrained else "optimize_unconstrained")
    directory.mkdir(parents=True, exist_ok=True)

    with checkpoint_lock(workspace.diffusion_checkpoint), checkpoint_lock(workspace.mapping_checkpoint):
        evaluator = _evaluator(config, workspace)
        retrainer = ModelRetrainer(config, workspace, load_records(workspace), evaluator.diffusion, evaluator.mapping)

        def objective(x: np.ndarray, iteration: int) -> DesignEvaluation:
            return evaluator.evaluate(x, component_seed(seed, f"optimize.{iteration}"))

        loop = ActiveLearningLoop(
            settings.problem(constrained), objective, retrainer, error_criteria, settings.max_rounds
        )
        result = loop.run(budget, component_seed(seed, "optimize.ego"), settings.initial_points)
        if any(not item.rolled_back for item in result.rounds):
            retrainer.save()

    history = result.ego.history_frame()
    write_frame(directory / "convergence.csv", history)
    write_json(directory / "rounds.json", [item.model_dump() for item in result.rounds])
    best = result.ego.best
    if best.evaluation is not None:
        _write_design(directory / "best", best.evaluation, args.svg, "best design")
    if args.svg:
        plots.plot_convergence(directory / "convergence.svg", history)
    print(
        json.dumps(
            {
                "best_iteration": best.iteration,
                "raw_objective": best.raw_objective,
                "penalized_objective": best.penalized_objective,
                "feasible": best.feasible,
                "rounds": len(result.rounds),
            },
            sort_keys=True,
        )
    )


def cmd_eval(args: argparse.Namespace, config: PipelineConfig, workspace: Workspace) -> None:
    records = held_out_records(config, load_records(workspace))[: args.count]
    if not records:
        raise ValueError("The held-out split is empty; raise dataset.held_out_fraction")
    evaluator = _evaluator(config, workspace)
    targets = np.stack([record.features.to_vector() for record in records])
    seeds = [component_seed(config.dataset.seed, f"eval.{record.id}") for record in records]
    results = evaluate_variants(evaluator, targets, seeds)

    workspace.ensure(workspace.reports_dir)
    summary = error_summary_frame(results)
    write_frame(workspace.reports_dir / "feature_errors_summary.csv", summary)
    write_frame(
        workspace.reports_dir / "feature_error_distribution.csv",
        error_distribution_frame([record.id for record in records], results),
    )
    arrays = load_training_arrays(workspace.dataset_dir, records)
    write_frame(workspace.reports_dir / "mapping_metrics.csv", mapping_report(evaluator.mapping, arrays))
    checks = acceptance_checks(summary, results)
    write_json(workspace.reports_dir / "acceptance.json", checks)
    hard = checks["closed_loop"]["passed"] and checks["conditional_beats_unconditional"]["passed"]
    print(json.dumps({"hard_checks_passed": hard}, sort_keys=True))
    if args.strict and not hard:
        raise EvaluationError("Closed-loop acceptance checks failed", checks=checks)


def cmd_coupling(args: argparse.Namespace, config: PipelineConfig, workspace: Workspace) -> None:
    base, label = _target(args, workspace)
    names = list(FEATURE_NAMES) if args.all else args.feature
    if not names:
        raise ValueError("Give --feature NAME (repeatable) or --all")
    if args.values is not None and len(names) != 1:
        raise ValueError("--values applies to a single --feature")
    evaluator = _evaluator(config, workspace)
    problem = config.optimizer.problem()
    directory = workspace.reports_dir / f"coupling_{label}"
    directory.mkdir(parents=True, exist_ok=True)
    seed = component_seed(config.dataset.seed, f"coupling.{label}")

    rows = {}
    for name in names:
        index = FEATURE_NAMES.index(name)
        values = parse_values(args.values) if args.values is not None else default_sweep(problem, base, index)
        steps = coupling_analysis(evaluator, base, index, values, seed)
        write_frame(directory / f"sweep_{name}.csv", steps)
        rows[index] = sensitivity_row(steps)
        if len(steps) > 1:
            decreasing = bool(steps["commanded"].is_monotonic_decreasing)
            logger.info("Sweep of %s: verified response monotone %s", name, is_monotone(steps[name], decreasing))
    write_frame(directory / "sensitivity.csv", sensitivity_matrix(rows))


COMMANDS: dict[str, Callable[[argparse.Namespace, PipelineConfig, Workspace], None]] = {
    "dataset": cmd_dataset,
    "train-diffusion": cmd_train_diffusion,
    "train-mapping": cmd_train_mapping,
    "sample": cmd_sample,
    "verify": cmd_verify,
    "optimize": cmd_optimize,
    "eval": cmd_eval,
    "coupling": cmd_coupling,
}


def _add_target_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--features", help="Six comma-separated feature values, ordered " + ",".join(FEATURE_NAMES))
    group.add_argument("--record", help="Use the features of this dataset record id")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="Pipeline config JSON (default: packaged desk-scale profile)")
    common.add_argument("--seed", type=int, help="Override the root seed")
    common.add_argument("--out", help="Workspace root (overrides paths.workspace)")
    common.add_argument("--verbose", action="store_true", help="Log at DEBUG level")

    parser = argparse.ArgumentParser(prog="airfoil-design", description="Airfoil inverse design from pressure features")
    verbs = parser.add_subparsers(dest="verb", required=True)
    verbs.add_parser("dataset", parents=[common], help="Build the airfoil dataset")
    for name in ("train-diffusion", "train-mapping"):
        verb = verbs.add_parser(name, parents=[common], help=f"Train the {name.split('-')[1]} model")
        verb.add_argument("--svg", action="store_true", help="Also render the loss history")

    sample = verbs.add_parser("sample", parents=[common], help="Sample SDF grids from features")
    _add_target_options(sample)
    sample.add_argument("--omega", type=float, help="Guidance weight")
    sample.add_argument("--count", type=int, default=1, help="Number of grids")
    sample.add_argument("--unconditional", action="store_true", help="Ignore the features")

    verify = verbs.add_parser("verify", parents=[common], help="Run the closed loop for one feature vector")
    _add_target_options(verify)
    verify.add_argument("--omega", type=float, help="Guidance weight")
    verify.add_argument("--svg", action="store_true", help="Render generated vs verified CP")

    optimize = verbs.add_parser("optimize", parents=[common], help="EGO with active learning")
    optimize.add_argument("--unconstrained", action="store_true", help="Drop the feature constraints")
    optimize.add_argument("--budget", type=int, help="Total evaluations")
    optimize.add_argument("--error-criteria", type=float, help="Retraining threshold on the normalised feature gap")
    optimize.add_argument("--svg", action="store_true", help="Render convergence and best CP")

    evaluate = verbs.add_parser("eval", parents=[common], help="Held-out feature and mapping errors")
    evaluate.add_argument("--count", type=int, default=EVAL_COUNT, help="Held-out records to evaluate")
    evaluate.add_argument("--strict", action="store_true", help="Exit 1 when a hard acceptance check fails")

    coupling = verbs.add_parser("coupling", parents=[common], help="One-feature sweeps and sensitivity matrix")
    _add_target_options(coupling)
    coupling.add_argument("--feature", action="append", choices=FEATURE_NAMES, help="Feature to sweep")
    coupling.add_argument("--all", action="store_true", help="Sweep every feature")
    coupling.add_argument("--values", help="Comma-separated commanded values for a single feature")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(format=LOG_FORMAT, level=logging.DEBUG if args.verbose else logging.INFO)

    try:
        config = load_config(args.config) if args.config else load_profile("desk_scale")
    except ValueError as exc:
        parser.error(str(exc))
    config = config.with_overrides(seed=args.seed, workspace=args.out)
    workspace = Workspace(Path(config.paths.workspace))

    logger.info("Starting %s (workspace %s, seed %d)", args.verb, workspace.root, config.dataset.seed)
    try:
        COMMANDS[args.verb](args, config, workspace)
    except AirfoilDesignError as exc:
        logger.error("%s failed: %s", args.verb, exc)
        print(json.dumps(exc.to_dict(), sort_keys=True, default=str), file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        logger.error("%s failed: %s", args.verb, exc)
        print(json.dumps({"error": "failure", "message": str(exc), "details": {}}, sort_keys=True), file=sys.stderr)
        return 1
    logger.info("Finished %s", args.verb)
    return 0


if __name__ == "__main__":
    sys.exit(main())
