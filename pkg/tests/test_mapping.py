# pylint: disable=missing-function-docstring,redefined-outer-name

import numpy as np
import pytest

from airfoil_inverse_design.encoding.sdf import SdfGrid
from airfoil_inverse_design.mapping.model import (
    MappingConfig,
    fine_tune_mapping,
    load_mapping,
    mapping_metrics,
    per_point_frame,
    predict_airfoil,
    predict_ordinates,
    save_mapping,
    train_mapping,
)
from airfoil_inverse_design.utils.exceptions import ShapeError

SMALL = MappingConfig(resolution=16, widths=(4, 4, 4), batch_size=4, epochs=2, validation_fraction=0.25)


@pytest.fixture
def grids():
    return np.random.default_rng(4).uniform(-0.3, 0.3, size=(12, 16, 16))


@pytest.fixture
def ordinates(baseline_airfoil):
    return np.tile(baseline_airfoil.ordinates(), (12, 1))


@pytest.fixture
def trained(grids, ordinates):
    return train_mapping(grids, ordinates, SMALL, seed=9)


@pytest.mark.mapping
def test_zero_initialised_head_predicts_mean_target(trained, grids, ordinates):
    model, history = trained
    assert len(history.train_loss) == 2
    assert len(history.validation_loss) == 2
    np.testing.assert_allclose(predict_ordinates(model, grids[:3]), ordinates[:3], atol=2e-5)


@pytest.mark.mapping
def test_predicted_airfoil_is_repaired(trained, baseline_airfoil):
    model, _ = trained
    grid = SdfGrid.from_normalized(np.zeros((16, 16)))
    airfoil = predict_airfoil(grid, model)
    assert airfoil.y_scale == 1.0
    assert np.max(np.abs(airfoil.y - baseline_airfoil.y)) < 5e-5


@pytest.mark.mapping
def test_prediction_rejects_other_resolution(trained):
    model, _ = trained
    with pytest.raises(ShapeError):
        predict_airfoil(SdfGrid.from_normalized(np.zeros((8, 8))), model)


@pytest.mark.mapping
def test_training_needs_ten_pairs(grids, ordinates):
    with pytest.raises(ValueError, match="at least 10"):
        train_mapping(grids[:9], ordinates[:9], SMALL, seed=0)


@pytest.mark.mapping
def test_training_checks_target_shape(grids, ordinates):
    with pytest.raises(ShapeError):
        train_mapping(grids, ordinates[:, :100], SMALL, seed=0)


@pytest.mark.mapping
def test_fine_tune_counts_steps(trained, grids, ordinates):
    model, _ = trained
    before = model.step
    history = fine_tune_mapping(model, grids, ordinates, epochs=1, seed=1)
    assert history.validation_loss == []
    assert model.step == before + 3


@pytest.mark.mapping
def test_mapping_metrics():
    mae, mre = mapping_metrics(np.array([[1.0, 0.0], [3.0, 0.0]]), np.array([[2.0, 0.0], [3.0, 0.0]]))
    np.testing.assert_allclose(mae, [0.5, 0.0])
    np.testing.assert_allclose(mre, [0.25, 0.0])
    with pytest.raises(ShapeError):
        mapping_metrics(np.zeros((2, 3)), np.zeros((2, 2)))


@pytest.mark.mapping
def test_per_point_frame_layout():
    frame = per_point_frame(np.zeros(130), np.zeros(130))
    assert len(frame) == 130
    assert (frame["surface"] == "upper").sum() == 65
    assert frame["x"].iloc[0] == 1.0
    assert frame["x"].iloc[-1] == 1.0


@pytest.mark.mapping
def test_checkpoint_round_trip(trained, grids, tmp_path):
    model, _ = trained
    path = tmp_path / "mapping.ckpt"
    save_mapping(model, path)
    loaded = load_mapping(path)
    assert loaded.config == model.config
    assert loaded.step == model.step
    np.testing.assert_array_equal(predict_ordinates(loaded, grids[:2]), predict_ordinates(model, grids[:2]))
