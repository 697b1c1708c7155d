# pylint: disable=missing-function-docstring,redefined-outer-name

import json
from unittest.mock import patch

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from airfoil_inverse_design.data_access.file_access import loss_history_frame, read_features_csv, read_manifest
from airfoil_inverse_design.diffusion.ddpm import DiffusionModel
from airfoil_inverse_design.diffusion.schedule import NoiseSchedule
from airfoil_inverse_design.diffusion.unet import DenoiserConfig
from airfoil_inverse_design.features.extraction import extract
from airfoil_inverse_design.mapping.model import MappingConfig, MappingModel
from airfoil_inverse_design.optimizer.evaluation import DesignEvaluation
from airfoil_inverse_design.optimizer.problem import OptimizationProblem
from airfoil_inverse_design.pipeline import plots
from airfoil_inverse_design.pipeline.cli import build_parser, main, parse_feature_vector
from airfoil_inverse_design.pipeline.config import (
    DatasetSettings,
    OptimizerSettings,
    PipelineConfig,
    Workspace,
    load_config,
    load_profile,
    parse_config,
)
from airfoil_inverse_design.pipeline.dataset import (
    build_dataset,
    held_out_records,
    load_training_arrays,
    next_record_id,
    recompute_features,
    split_indices,
    training_records,
)
from airfoil_inverse_design.pipeline.lock import checkpoint_lock, lock_path
from airfoil_inverse_design.pipeline.records import DatasetRecord, active_learning_provenance
from airfoil_inverse_design.pipeline.reports import (
    VARIANTS,
    acceptance_checks,
    coupling_analysis,
    default_sweep,
    error_distribution_frame,
    error_summary_frame,
    is_monotone,
    sensitivity_matrix,
    sensitivity_row,
)
from airfoil_inverse_design.pipeline.retraining import ModelRetrainer
from airfoil_inverse_design.utils.constants import FEATURE_COUNT, FEATURE_NAMES
from airfoil_inverse_design.utils.exceptions import BuildError, LockError, SolverError

from .conftest import shocked_cp

SOLVE = "airfoil_inverse_design.pipeline.dataset.solve"
TARGET = [-1.2, 0.5, 0.3, 0.1, -0.2, 0.01]


@pytest.fixture
def small_config():
    return PipelineConfig(
        dataset=DatasetSettings(n=4, fraction=0.0, resolution=16, held_out_fraction=0.25),
        mapping=MappingConfig(widths=(4, 4, 4), batch_size=4),
        optimizer=OptimizerSettings(fine_tune_epochs=1),
    )


@pytest.fixture
def built(small_config, tmp_path):
    workspace = Workspace(tmp_path)
    with patch(SOLVE, return_value=shocked_cp()):
        records = build_dataset(small_config, workspace.dataset_dir)
    return workspace, records


@pytest.mark.pipeline
def test_defaults_match_desk_scale_profile():
    assert load_profile("desk_scale") == PipelineConfig()
    full = load_profile("full_scale")
    assert full.dataset.resolution > PipelineConfig().dataset.resolution


@pytest.mark.pipeline
def test_unknown_profile_rejected():
    with pytest.raises(ValueError, match="Unknown profile"):
        load_profile("laptop")


@pytest.mark.pipeline
@pytest.mark.parametrize("text", ["{not json", "[1, 2]"])
def test_parse_config_rejects_bad_text(text):
    with pytest.raises(ValueError):
        parse_config(text)


@pytest.mark.pipeline
def test_partial_config_takes_defaults(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"dataset": {"n": 12}, "flow": {"mach": 0.7}}), encoding="utf-8")
    config = load_config(path)
    assert config.dataset.n == 12
    assert config.dataset.resolution == 64
    assert config.flow.mach == 0.7
    assert config.optimizer.budget == 60


@pytest.mark.pipeline
def test_invalid_settings_rejected():
    with pytest.raises(ValidationError):
        parse_config(json.dumps({"dataset": {"held_out_fraction": 1.0}}))


@pytest.mark.pipeline
def test_missing_config_file(tmp_path):
    with pytest.raises(ValueError, match="Cannot read config"):
        load_config(tmp_path / "absent.json")


@pytest.mark.pipeline
def test_command_line_overrides():
    config = PipelineConfig().with_overrides(seed=7, workspace="elsewhere")
    assert config.dataset.seed == 7
    assert config.paths.workspace == "elsewhere"
    assert PipelineConfig().with_overrides() == PipelineConfig()


@pytest.mark.pipeline
def test_workspace_layout(tmp_path):
    workspace = Workspace(tmp_path)
    assert workspace.manifest_path == tmp_path / "dataset" / "manifest.json"
    assert workspace.features_path == tmp_path / "dataset" / "features.csv"
    assert workspace.diffusion_checkpoint == tmp_path / "checkpoints" / "diffusion.ckpt"
    assert workspace.mapping_checkpoint == tmp_path / "checkpoints" / "mapping.ckpt"
    workspace.ensure(workspace.reports_dir)
    assert workspace.reports_dir.is_dir()


@pytest.mark.pipeline
def test_mapping_config_follows_dataset_resolution():
    config = PipelineConfig(dataset=DatasetSettings(resolution=32))
    assert config.mapping_config().resolution == 32


@pytest.mark.pipeline
def test_record_provenance_validation(synthetic_cp):
    fields = {
        "id": "0001",
        "airfoil_path": "airfoils/0001.dat",
        "cp_path": "cp/0001.csv",
        "sdf_path": "sdf/0001.grid",
        "features": extract(synthetic_cp),
    }
    assert DatasetRecord(**fields, provenance=active_learning_provenance(3)).provenance == "active-learning round 3"
    with pytest.raises(ValidationError):
        DatasetRecord(**fields, provenance="hand-made")


@pytest.mark.pipeline
def test_checkpoint_lock_is_exclusive(tmp_path):
    checkpoint = tmp_path / "checkpoints" / "diffusion.ckpt"
    with checkpoint_lock(checkpoint) as held:
        assert held == lock_path(checkpoint)
        assert held.exists()
        with pytest.raises(LockError) as info:
            with checkpoint_lock(checkpoint):
                pass
        assert info.value.to_dict()["error"] == "lock-held"
    assert not lock_path(checkpoint).exists()


@pytest.mark.pipeline
def test_split_indices_partition():
    train, held = split_indices(100, 0.07, seed=3)
    assert held.size == 7
    assert np.array_equal(np.sort(np.concatenate((train, held))), np.arange(100))
    again, _ = split_indices(100, 0.07, seed=3)
    assert np.array_equal(train, again)
    with pytest.raises(ValueError):
        split_indices(10, 1.0, seed=0)


@pytest.mark.pipeline
def test_build_dataset_writes_records(built, small_config):
    workspace, records = built
    assert [record.id for record in records] == ["0000", "0001", "0002", "0003"]
    assert all(record.provenance == "initial" for record in records)
    assert all(record.cst_params is not None for record in records)

    assert read_manifest(workspace.manifest_path) == records
    ids, features = read_features_csv(workspace.features_path)
    assert ids == [record.id for record in records]
    np.testing.assert_allclose(features[0].to_vector(), records[0].features.to_vector())

    arrays = load_training_arrays(workspace.dataset_dir, records)
    assert arrays.ordinates.shape == (4, 130)
    assert arrays.features.shape == (4, FEATURE_COUNT)
    assert all(grid.resolution == 16 for grid in arrays.grids)

    recomputed = recompute_features(workspace.dataset_dir, records[0], small_config)
    np.testing.assert_allclose(recomputed.to_vector(), records[0].features.to_vector(), rtol=1e-9, atol=1e-12)


@pytest.mark.pipeline
def test_training_and_held_out_records_are_disjoint(built, small_config):
    _, records = built
    train = training_records(small_config, records)
    held = held_out_records(small_config, records)
    assert len(train) == 3
    assert len(held) == 1
    assert held[0].id not in {record.id for record in train}


@pytest.mark.pipeline
def test_next_record_id(built):
    _, records = built
    assert next_record_id(records) == "0004"
    assert next_record_id([]) == "0000"


@pytest.mark.pipeline
def test_build_fails_when_too_many_solves_fail(small_config, tmp_path):
    with patch(SOLVE, side_effect=SolverError("no convergence")):
        with pytest.raises(BuildError) as info:
            build_dataset(small_config, tmp_path / "dataset")
    assert info.value.details["failures"] == 4


@pytest.mark.pipeline
def test_retrainer_appends_and_rolls_back(built, small_config, baseline_airfoil):
    workspace, records = built
    diffusion = DiffusionModel.create(
        DenoiserConfig(resolution=16, base_channels=4, channel_mults=(1, 1, 2), time_dim=8, groups=2),
        seed=0,
        schedule=NoiseSchedule.linear(10),
    )
    mapping = MappingModel.create(small_config.mapping_config(), seed=0)
    retrainer = ModelRetrainer(small_config, workspace, list(records), diffusion, mapping)
    before = mapping.net.state_dict()

    cp = shocked_cp(shock_x=0.45)
    evaluation = DesignEvaluation(
        target=TARGET,
        airfoil=baseline_airfoil,
        verified_cp=cp,
        verified_features=extract(cp),
        verified=list(extract(cp).to_vector()),
    )
    outcome = retrainer.retrain(evaluation, round_index=1)
    assert set(outcome.end_loss) == {"diffusion", "mapping"}
    assert mapping.step > 0

    manifest = read_manifest(workspace.manifest_path)
    assert manifest[-1].id == "0004"
    assert manifest[-1].provenance == "active-learning round 1"
    assert manifest[-1].cst_params is None
    assert len(retrainer.arrays.ids) == 4

    retrainer.rollback()
    assert mapping.step == 0
    for name, value in before.items():
        np.testing.assert_array_equal(mapping.net.state_dict()[name], value)


@pytest.mark.pipeline
def test_feature_vector_parsing():
    np.testing.assert_allclose(parse_feature_vector("-1.2,0.5,0.3,0.1,-0.2,0.01"), TARGET)
    for text in ("1,2,3", "a,b,c,d,e,f", "1,2,3,4,5,nan"):
        with pytest.raises(ValueError):
            parse_feature_vector(text)


@pytest.mark.pipeline
def test_parser_knows_every_verb():
    parser = build_parser()
    for verb in ("dataset", "train-diffusion", "train-mapping", "sample", "verify", "optimize", "eval", "coupling"):
        assert parser.parse_args([verb]).verb == verb


@pytest.mark.pipeline
def test_unreadable_config_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["dataset", "--config", str(tmp_path / "absent.json")])
    assert info.value.code == 2


@pytest.mark.pipeline
def test_without_config_the_desk_profile_is_used(tmp_path):
    seen = []
    with patch.dict(
        "airfoil_inverse_design.pipeline.cli.COMMANDS",
        {"dataset": lambda args, config, workspace: seen.append(config)},
    ):
        status = main(["dataset", "--out", str(tmp_path / "work"), "--seed", "7"])
    assert status == 0
    expected = load_profile("desk_scale").with_overrides(seed=7, workspace=str(tmp_path / "work"))
    assert seen == [expected]


@pytest.mark.pipeline
def test_dataset_verb(small_config, tmp_path, capsys):
    config_path = tmp_path / "run.json"
    config_path.write_text(small_config.model_dump_json(), encoding="utf-8")
    with patch(SOLVE, return_value=shocked_cp()):
        status = main(["dataset", "--config", str(config_path), "--out", str(tmp_path / "work")])
    assert status == 0
    assert json.loads(capsys.readouterr().out)["records"] == 4
    assert (tmp_path / "work" / "dataset" / "manifest.json").exists()


@pytest.mark.pipeline
def test_unknown_record_fails_with_json_error(built, capsys):
    workspace, _ = built
    status = main(["verify", "--record", "9999", "--out", str(workspace.root)])
    assert status == 1
    error = json.loads(capsys.readouterr().err)
    assert "9999" in error["message"]


@pytest.mark.pipeline
def test_missing_checkpoint_fails(tmp_path, capsys):
    status = main(["verify", "--features", ",".join(map(str, TARGET)), "--out", str(tmp_path)])
    assert status == 1
    assert "error" in json.loads(capsys.readouterr().err)


def _evaluations(offset: float, count: int = 3) -> list[DesignEvaluation]:
    target = np.array(TARGET)
    return [
        DesignEvaluation(
            target=list(target),
            verified=list(target + offset),
            delta_p=[offset] * FEATURE_COUNT,
            raw_objective=50.0,
        )
        for _ in range(count)
    ]


@pytest.fixture
def variant_results():
    results = {name: _evaluations(0.1) for name in VARIANTS}
    results["conditional_w1"] = _evaluations(0.01)
    results["unconditional"] = _evaluations(0.2)
    results["conditional_w1"].append(DesignEvaluation(target=TARGET, failed=True, error={"error": "decode-failure"}))
    return results


@pytest.mark.pipeline
def test_error_summary_skips_failures(variant_results):
    summary = error_summary_frame(variant_results)
    assert len(summary) == 2 * len(VARIANTS)
    row = summary[(summary["variant"] == "conditional_w1") & (summary["metric"] == "mae")]
    np.testing.assert_allclose(row[list(FEATURE_NAMES)].to_numpy()[0], 0.01)


@pytest.mark.pipeline
def test_error_distribution_marks_failures(variant_results):
    ids = ["0001", "0002", "0003", "0004"]
    variant_results = {name: items + [items[0]] * (4 - len(items)) for name, items in variant_results.items()}
    frame = error_distribution_frame(ids, variant_results)
    failed = frame[frame["failed"] == 1]
    assert len(failed) == 1
    assert failed["id"].iloc[0] == "0004"
    assert failed["f_sp"].isna().all()


@pytest.mark.pipeline
def test_acceptance_checks_pass_on_accurate_conditional_model(variant_results):
    checks = acceptance_checks(error_summary_frame(variant_results), variant_results)
    assert checks["closed_loop"]["passed"]
    assert checks["conditional_beats_unconditional"]["features"] == list(FEATURE_NAMES)
    assert checks["guidance_u_shape"]["passed"]
    assert checks["failures"]["conditional_w1"] == 1


@pytest.mark.pipeline
def test_acceptance_checks_fail_on_inaccurate_model(variant_results):
    variant_results["conditional_w1"] = _evaluations(0.3)
    checks = acceptance_checks(error_summary_frame(variant_results), variant_results)
    assert not checks["closed_loop"]["passed"]
    assert not checks["conditional_beats_unconditional"]["passed"]


@pytest.mark.pipeline
def test_default_sweep_stays_in_bounds():
    problem = OptimizationProblem()
    lower, upper = problem.bounds
    values = default_sweep(problem, upper.copy(), feature_index=2)
    assert values.size == 4
    assert np.all(values <= upper[2])
    assert np.all(values >= lower[2])
    assert values[-1] == upper[2]


class EchoEvaluator:
    """Reports the commanded features as verified, failing on the third call."""

    def __init__(self):
        self.seeds = []

    def evaluate(self, target, seed):
        self.seeds.append(seed)
        if len(self.seeds) == 3:
            return DesignEvaluation(target=list(target), failed=True, error={"error": "repair-failure"})
        return DesignEvaluation(target=list(target), verified=list(target))


@pytest.mark.pipeline
def test_coupling_sweep_and_sensitivity():
    evaluator = EchoEvaluator()
    steps = coupling_analysis(evaluator, np.array(TARGET), 1, np.array([0.4, 0.45, 0.5, 0.55]), seed=11)
    assert list(steps["step"]) == [1, 2, 3, 4]
    assert evaluator.seeds == [11] * 4
    assert steps["failed"].tolist() == [0, 0, 1, 0]

    row = sensitivity_row(steps)
    np.testing.assert_allclose(row, [0.0, 1.0, 0.0, 0.0, 0.0, 0.0], atol=1e-9)
    matrix = sensitivity_matrix({1: row})
    assert matrix.shape == (FEATURE_COUNT, FEATURE_COUNT + 1)
    assert matrix["commanded"].tolist() == list(FEATURE_NAMES)
    assert matrix.loc[0, list(FEATURE_NAMES)].isna().all()
    assert is_monotone(steps["f_sw"], decreasing=False)

    with pytest.raises(ValueError):
        coupling_analysis(evaluator, np.array(TARGET), 6, np.array([0.0]), seed=0)


@pytest.mark.pipeline
def test_sensitivity_needs_two_commands():
    steps = pd.DataFrame({"step": [1], "commanded": [0.5], "failed": [0], **{name: [0.0] for name in FEATURE_NAMES}})
    assert np.isnan(sensitivity_row(steps)).all()


@pytest.mark.pipeline
def test_monotone_check_ignores_gaps():
    assert is_monotone(pd.Series([3.0, 2.0, np.nan, 1.0]))
    assert not is_monotone(pd.Series([3.0, 2.0, 2.5]))
    assert is_monotone(pd.Series([1.0, 2.0]), decreasing=False)


@pytest.mark.pipeline
def test_charts_are_written_as_svg(synthetic_cp, tmp_path):
    plots.plot_cp_comparison(tmp_path / "cp.svg", synthetic_cp, shocked_cp(shock_x=0.55), "demo")
    history = pd.DataFrame({"iteration": [1, 2, 3], "penalized_objective": [1.0, 3.0, 2.0], "best_so_far": [1, 3, 3]})
    plots.plot_convergence(tmp_path / "convergence.svg", history)
    plots.plot_loss_history(tmp_path / "loss.svg", loss_history_frame([0.5, 0.2, 0.1]))
    for name in ("cp.svg", "convergence.svg", "loss.svg"):
        assert (tmp_path / name).read_text(encoding="utf-8").lstrip().startswith("<?xml")
