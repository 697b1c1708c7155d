# pylint: disable=missing-function-docstring,redefined-outer-name

import numpy as np
import pytest

from airfoil_inverse_design.data_access.file_access import write_checkpoint
from airfoil_inverse_design.diffusion.ddpm import (
    ConditionNormalizer,
    DiffusionModel,
    DiffusionTraining,
    cfg_predict,
    load_diffusion,
    sample,
    sample_batch,
    save_diffusion,
    train_diffusion,
)
from airfoil_inverse_design.diffusion.schedule import (
    ForwardCheckResult,
    NoiseSchedule,
    iterated_forward_equivalence_check,
    posterior_step,
    q_sample,
)
from airfoil_inverse_design.diffusion.unet import Denoiser, DenoiserConfig, sinusoidal_embedding
from airfoil_inverse_design.nncore import functional as F
from airfoil_inverse_design.nncore.checkpoint import CheckpointHeader
from airfoil_inverse_design.nncore.gradcheck import gradient_check
from airfoil_inverse_design.nncore.tensor import Tensor
from airfoil_inverse_design.utils.exceptions import ShapeError, TrainingError

TINY = DenoiserConfig(resolution=8, base_channels=4, channel_mults=(1, 1, 2), time_dim=8, groups=2)


@pytest.fixture
def model():
    return DiffusionModel.create(TINY, seed=3, schedule=NoiseSchedule.linear(10))


@pytest.fixture
def batch():
    rng = np.random.default_rng(0)
    return rng.standard_normal((2, 1, 8, 8)).astype(np.float32), rng.standard_normal((2, 6)).astype(np.float32)


@pytest.mark.diffusion
def test_linear_schedule():
    schedule = NoiseSchedule.linear()
    assert schedule.steps == 400
    assert schedule.betas[0] == pytest.approx(1e-4)
    assert schedule.betas[-1] == pytest.approx(0.02)
    assert np.all(np.diff(schedule.alpha_bars) < 0)
    assert schedule.alpha_bar(1) == pytest.approx(1.0 - 1e-4)


@pytest.mark.diffusion
@pytest.mark.parametrize("step", [0, 401])
def test_schedule_rejects_steps_outside_range(step):
    with pytest.raises(ValueError):
        NoiseSchedule.linear().check_step(step)


@pytest.mark.diffusion
def test_schedule_needs_two_steps():
    with pytest.raises(ValueError):
        NoiseSchedule.linear(1)


@pytest.mark.diffusion
def test_closed_form_matches_iterated_noising():
    result = iterated_forward_equivalence_check(
        NoiseSchedule.linear(), np.array([0.5, -1.0, 0.0]), t=50, seed=0, draws=10_000
    )
    assert result.cells == 3
    assert result.passed()


@pytest.mark.diffusion
def test_forward_check_limit_grows_with_cell_count():
    few = ForwardCheckResult(t=1, draws=100, cells=1, max_mean_z=3.5, max_variance_z=0.0, ks_distance=0.0)
    many = few.model_copy(update={"cells": 4096})
    assert few.z_limit() == pytest.approx(3.21, abs=0.01)
    assert few.z_limit() > 3.0
    assert not few.passed()
    assert many.passed()
    assert not many.model_copy(update={"ks_distance": 0.05}).passed()


@pytest.mark.diffusion
def test_final_reverse_step_adds_no_noise():
    schedule = NoiseSchedule.linear(10)
    x = np.ones((1, 2, 2), dtype=np.float32)
    eps = np.zeros_like(x)
    z = np.full_like(x, 5.0)
    np.testing.assert_allclose(posterior_step(schedule, x, 1, eps, z), x / np.sqrt(schedule.alphas[0]), rtol=1e-6)
    assert not np.allclose(posterior_step(schedule, x, 2, eps, z), posterior_step(schedule, x, 2, eps))


@pytest.mark.diffusion
def test_q_sample_rejects_mismatched_noise():
    with pytest.raises(ValueError):
        q_sample(NoiseSchedule.linear(10), np.zeros((2, 2)), 3, np.zeros((2, 3)))


@pytest.mark.diffusion
def test_sinusoidal_embedding_at_step_zero():
    emb = sinusoidal_embedding(np.array([0]), 8)
    np.testing.assert_array_equal(emb[0], [0, 0, 0, 0, 1, 1, 1, 1])


@pytest.mark.diffusion
def test_denoiser_output_shape(model, batch):
    grids, conds = batch
    out = model.denoiser(Tensor(grids), np.array([1, 7]), conds)
    assert out.shape == (2, 1, 8, 8)


@pytest.mark.diffusion
def test_denoiser_rejects_wrong_resolution(model):
    with pytest.raises(ShapeError):
        model.denoiser(Tensor(np.zeros((1, 1, 16, 16), dtype=np.float32)), np.array([1]))


@pytest.mark.diffusion
def test_denoiser_gradient_in_float64():
    denoiser = Denoiser(TINY, np.random.default_rng(5)).astype(np.float64)
    rng = np.random.default_rng(6)
    x = Tensor(rng.standard_normal((2, 1, 8, 8)))
    conds = rng.standard_normal((2, 6))
    target = rng.standard_normal((2, 1, 8, 8))

    def loss():
        return F.mse(denoiser(x, np.array([2, 9]), conds), target)

    assert gradient_check(loss, [denoiser.head.bias, denoiser.condition.weight], h=1e-5) < 1e-4


@pytest.mark.diffusion
def test_dropped_condition_equals_null_token(model, batch):
    grids, conds = batch
    steps = np.array([4, 4])
    dropped = model.denoiser(Tensor(grids), steps, conds, np.zeros(2)).values
    unconditional = model.denoiser(Tensor(grids), steps, None).values
    np.testing.assert_allclose(dropped, unconditional, atol=1e-7)


@pytest.mark.diffusion
def test_guided_estimate_extrapolates_from_unconditional(model, batch):
    grids, conds = batch
    conditional = cfg_predict(model, grids, 5, conds, omega=0.0)
    unconditional = cfg_predict(model, grids, 5, None, omega=1.0)
    guided = cfg_predict(model, grids, 5, conds, omega=2.0)
    np.testing.assert_allclose(guided, 3.0 * conditional - 2.0 * unconditional, rtol=1e-5, atol=1e-6)


@pytest.mark.diffusion
def test_negative_guidance_rejected(model, batch):
    grids, conds = batch
    with pytest.raises(ValueError, match="Guidance"):
        cfg_predict(model, grids, 5, conds, omega=-0.5)


@pytest.mark.diffusion
def test_sampling_is_seeded_per_item(model):
    features = np.array([[-1.0, 0.5, 0.3, 0.4, 0.1, 0.002], [-0.8, 0.4, 0.2, 0.3, 0.2, 0.001]])
    pair = sample_batch(model, features, omega=1.0, seeds=[5, 6])
    alone = sample_batch(model, features[1:], omega=1.0, seeds=[6])
    again = sample(model, features[0], omega=1.0, seed=5)
    np.testing.assert_allclose(pair[1].normalized(), alone[0].normalized(), atol=1e-4)
    np.testing.assert_allclose(pair[0].normalized(), again.normalized(), atol=1e-4)
    assert pair[0].resolution == 8


@pytest.mark.diffusion
def test_training_reduces_to_finite_history(model):
    rng = np.random.default_rng(1)
    grids = rng.uniform(-0.5, 0.5, size=(4, 8, 8))
    features = rng.normal(size=(4, 6))
    history = train_diffusion(model, grids, features, DiffusionTraining(epochs=2, batch_size=2), seed=2)
    assert len(history) == 2
    assert all(np.isfinite(history))
    assert model.step == 4
    np.testing.assert_allclose(model.normalizer.mean, features.mean(axis=0))


@pytest.mark.diffusion
def test_non_finite_grid_stops_training(model):
    grids = np.zeros((2, 8, 8))
    grids[0, 3, 3] = np.nan
    with pytest.raises(TrainingError):
        train_diffusion(model, grids, np.ones((2, 6)), DiffusionTraining(epochs=1, batch_size=2), seed=0)


@pytest.mark.diffusion
def test_normalizer_guards_constant_features():
    features = np.column_stack((np.arange(4.0), np.full(4, 2.0), np.zeros((4, 4))))
    normalizer = ConditionNormalizer.fit(features)
    assert normalizer.std[1] == 1.0
    np.testing.assert_allclose(normalizer.decode(normalizer.encode(features)), features)


@pytest.mark.diffusion
def test_checkpoint_round_trip(model, tmp_path):
    model.normalizer = ConditionNormalizer(mean=[0.1] * 6, std=[2.0] * 6)
    model.step = 17
    path = tmp_path / "diffusion.ckpt"
    save_diffusion(model, path)
    loaded = load_diffusion(path)
    assert loaded.step == 17
    assert loaded.schedule.steps == 10
    assert loaded.normalizer == model.normalizer
    assert loaded.config == model.config
    for name, value in model.denoiser.state_dict().items():
        np.testing.assert_array_equal(loaded.denoiser.state_dict()[name], value)


@pytest.mark.diffusion
def test_load_rejects_other_architecture(tmp_path):
    path = tmp_path / "other.ckpt"
    write_checkpoint(path, CheckpointHeader(arch_name="mapping-cnn"), {})
    with pytest.raises(ValueError, match="expected"):
        load_diffusion(path)
