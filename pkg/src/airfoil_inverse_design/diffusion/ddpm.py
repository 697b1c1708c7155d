"""Conditional DDPM training and classifier-free guided sampling.

Usage:

    model = DiffusionModel.create(DenoiserConfig(resolution=64), seed=7)
    model.normalizer = ConditionNormalizer.fit(features)
    history = train_diffusion(model, grids, features, DiffusionTraining(), seed=7)
    grid = sample(model, target_features, omega=1.0, seed=11)
"""

from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field

from airfoil_inverse_design.data_access.file_access import read_checkpoint, write_checkpoint
from airfoil_inverse_design.diffusion.schedule import NoiseSchedule, posterior_step, q_sample
from airfoil_inverse_design.diffusion.unet import ARCH_NAME, Denoiser, DenoiserConfig
from airfoil_inverse_design.encoding.sdf import SdfGrid
from airfoil_inverse_design.features.extraction import PressureFeatures
from airfoil_inverse_design.nncore import functional as F
from airfoil_inverse_design.nncore.checkpoint import CheckpointHeader
from airfoil_inverse_design.nncore.optim import Adam
from airfoil_inverse_design.nncore.tensor import Tensor, no_grad
from airfoil_inverse_design.utils.constants import FEATURE_COUNT
from airfoil_inverse_design.utils.exceptions import NonFiniteError, ShapeError, TrainingError

logger = logging.getLogger(__name__)


class ConditionNormalizer(BaseModel):
    """Per-feature affine map to zero mean and unit variance over the training set."""

    mean: list[float] = Field(default_factory=lambda: [0.0] * FEATURE_COUNT)
    std: list[float] = Field(default_factory=lambda: [1.0] * FEATURE_COUNT)

    @classmethod
    def fit(cls, features: np.ndarray) -> ConditionNormalizer:
        values = np.atleast_2d(np.asarray(features, dtype=np.float64))
        std = values.std(axis=0)
        std = np.where(std > 1e-12, std, 1.0)
        return cls(mean=values.mean(axis=0).tolist(), std=std.tolist())

    def encode(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - np.asarray(self.mean)) / np.asarray(self.std)

    def decode(self, normalized: np.ndarray) -> np.ndarray:
        return np.asarray(normalized, dtype=np.float64) * np.asarray(self.std) + np.asarray(self.mean)


class DiffusionTraining(BaseModel):
    """Optimisation schedule of the denoiser."""

    epochs: int = Field(default=200, ge=1)
    batch_size: int = Field(default=12, ge=1)
    lr: float = Field(default=1e-4, gt=0.0)
    p_drop: float = Field(default=0.1, ge=0.0, le=1.0)
    decay_lr: bool = Field(default=True, description="Halve the learning rate every quarter of the epochs.")


class DiffusionModel:
    """Denoiser bundled with its schedule and condition normaliser."""

    def __init__(
        self,
        denoiser: Denoiser,
        schedule: NoiseSchedule,
        normalizer: ConditionNormalizer | None = None,
        seed: int = 0,
        sdf_abs: bool = False,
    ):
        self.denoiser = denoiser
        self.schedule = schedule
        self.normalizer = normalizer or ConditionNormalizer()
        self.seed = seed
        self.sdf_abs = sdf_abs
        self.step = 0

    @classmethod
    def create(
        cls,
        config: DenoiserConfig,
        seed: int,
        schedule: NoiseSchedule | None = None,
        sdf_abs: bool = False,
    ) -> DiffusionModel:
        denoiser = Denoiser(config, np.random.default_rng(seed))
        return cls(denoiser, schedule or NoiseSchedule.linear(), seed=seed, sdf_abs=sdf_abs)

    @property
    def config(self) -> DenoiserConfig:
        return self.denoiser.config

    def encode_condition(self, features: PressureFeatures | np.ndarray) -> np.ndarray:
        vector = features.to_vector() if isinstance(features, PressureFeatures) else np.asarray(features)
        return self.normalizer.encode(vector).reshape(-1, FEATURE_COUNT)


def _lr_for_epoch(base_lr: float, epoch: int, epochs: int, decay: bool) -> float:
    if not decay:
        return base_lr
    quarter = min(4 * epoch // epochs, 3)
    return base_lr * 0.5**quarter


def train_step(
    model: DiffusionModel,
    grids: np.ndarray,
    conds: np.ndarray,
    optimizer: Adam,
    p_drop: float,
    rng: np.random.Generator,
) -> float:
    """One noise-prediction update on a batch.

    Args:
        model (DiffusionModel): Model to update.
        grids (np.ndarray): ``(n, 1, R, R)`` normalised clean grids.
        conds (np.ndarray): ``(n, 6)`` normalised conditions.
        optimizer (Adam): Optimizer bound to the denoiser parameters.
        p_drop (float): Probability of replacing a condition by the null token.
        rng (np.random.Generator): Source of steps, noise and dropout.

    Returns:
        float: Batch loss before the update.

    Raises:
        TrainingError: If the loss or any activation is not finite.
    """
    if grids.shape[0] < 1:
        raise ValueError("Batch must hold at least one grid")
    if conds.shape != (grids.shape[0], FEATURE_COUNT):
        raise ShapeError(f"Conditions {conds.shape} do not match batch {grids.shape}")
    count = grids.shape[0]
    steps = rng.integers(1, model.schedule.steps + 1, size=count)
    eps = rng.standard_normal(grids.shape).astype(np.float32)
    keep = rng.random(count) >= p_drop
    noisy = q_sample(model.schedule, grids.astype(np.float32), steps, eps)

    try:
        prediction = model.denoiser(Tensor(noisy), steps, conds, keep)
        loss = F.mse(prediction, eps)
    except NonFiniteError as exc:
        message = "Non-finite activations during diffusion training"
        raise TrainingError(message, step=model.step, op=exc.details) from exc
    value = float(loss.values)
    if not math.isfinite(value):
        raise TrainingError("Diffusion loss is not finite", step=model.step, loss=value)

    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    model.step += 1
    return value


def _training_loop(
    model: DiffusionModel,
    grids: np.ndarray,
    conds: np.ndarray,
    settings: DiffusionTraining,
    rng: np.random.Generator,
    label: str,
) -> list[float]:
    optimizer = Adam(model.denoiser.parameters(), lr=settings.lr)
    model.denoiser.train()
    history = []
    for epoch in range(settings.epochs):
        optimizer.lr = _lr_for_epoch(settings.lr, epoch, settings.epochs, settings.decay_lr)
        order = rng.permutation(grids.shape[0])
        losses = []
        for first in range(0, order.size, settings.batch_size):
            batch = order[first : first + settings.batch_size]
            losses.append(train_step(model, grids[batch], conds[batch], optimizer, settings.p_drop, rng))
        history.append(float(np.mean(losses)))
        logger.info("%s epoch %d/%d: loss %.6f (lr %.2e)", label, epoch + 1, settings.epochs, history[-1], optimizer.lr)
    model.denoiser.eval()
    return history


def _prepare(model: DiffusionModel, grids: list[SdfGrid] | np.ndarray, features: np.ndarray):
    if isinstance(grids, np.ndarray):
        stacked = grids.astype(np.float32)
    else:
        stacked = np.stack([grid.normalized() for grid in grids]).astype(np.float32)
    if stacked.ndim == 3:
        stacked = stacked[:, None, :, :]
    conds = model.normalizer.encode(np.asarray(features)).astype(np.float32)
    if conds.shape[0] != stacked.shape[0]:
        raise ShapeError(f"{stacked.shape[0]} grids but {conds.shape[0]} feature vectors")
    return stacked, conds


def train_diffusion(
    model: DiffusionModel,
    grids: list[SdfGrid] | np.ndarray,
    features: np.ndarray,
    settings: DiffusionTraining,
    seed: int,
) -> list[float]:
    """Train the denoiser from scratch on ``(grid, features)`` pairs.

    The condition normaliser is fitted on ``features`` before training.

    Returns:
        list[float]: Mean loss per epoch.
    """
    model.normalizer = ConditionNormalizer.fit(features)
    stacked, conds = _prepare(model, grids, features)
    logger.info("Training diffusion model on %d grids for %d epochs", stacked.shape[0], settings.epochs)
    return _training_loop(model, stacked, conds, settings, np.random.default_rng(seed), "diffusion")


def fine_tune_diffusion(
    model: DiffusionModel,
    grids: list[SdfGrid] | np.ndarray,
    features: np.ndarray,
    epochs: int = 20,
    lr: float = 1e-5,
    batch_size: int = 12,
    p_drop: float = 0.1,
    seed: int = 0,
) -> list[float]:
    """Continue training at a constant learning rate, keeping the normaliser."""
    stacked, conds = _prepare(model, grids, features)
    settings = DiffusionTraining(epochs=epochs, batch_size=batch_size, lr=lr, p_drop=p_drop, decay_lr=False)
    return _training_loop(model, stacked, conds, settings, np.random.default_rng(seed), "diffusion fine-tune")


def cfg_predict(
    model: DiffusionModel,
    x_t: np.ndarray,
    t: int | np.ndarray,
    cond: np.ndarray | None,
    omega: float,
) -> np.ndarray:
    """Guided noise estimate ``(1 + omega) eps(x_t | y) - omega eps(x_t)``.

    ``omega = 0`` skips the unconditional pass; ``cond = None`` returns the
    unconditional estimate.
    """
    if omega < 0:
        raise ValueError(f"Guidance weight must be >= 0, got {omega}")
    count = x_t.shape[0]
    steps = np.broadcast_to(np.asarray(t), (count,))
    with no_grad():
        unconditional = None
        if cond is None or omega != 0:
            unconditional = model.denoiser(Tensor(x_t), steps, None).values
        if cond is None:
            return unconditional
        conditional = model.denoiser(Tensor(x_t), steps, cond, np.ones(count)).values
    if omega == 0:
        return conditional
    return (1.0 + omega) * conditional - omega * unconditional


def p_sample_step(
    model: DiffusionModel,
    x_t: np.ndarray,
    t: int,
    cond: np.ndarray | None,
    omega: float,
    z: np.ndarray | None,
) -> np.ndarray:
    """Reverse step ``x_t -> x_{t-1}`` using the guided noise estimate."""
    eps_hat = cfg_predict(model, x_t, t, cond, omega)
    return posterior_step(model.schedule, x_t, t, eps_hat, z)


def sample_batch(
    model: DiffusionModel,
    features: np.ndarray | None,
    omega: float,
    seeds: list[int],
) -> list[SdfGrid]:
    """Sample one grid per seed; item ``i`` uses only ``seeds[i]`` for its noise.

    Args:
        model (DiffusionModel): Trained model.
        features (np.ndarray | None): ``(len(seeds), 6)`` raw feature vectors, or
            ``None`` for unconditional sampling.
        omega (float): Guidance weight.
        seeds (list[int]): One seed per sample.

    Returns:
        list[SdfGrid]: Grids in SDF cell units.
    """
    resolution = model.config.resolution
    model.denoiser.eval()
    cond = None
    if features is not None:
        cond = model.normalizer.encode(np.atleast_2d(features)).astype(np.float32)
        if cond.shape[0] != len(seeds):
            raise ShapeError(f"{cond.shape[0]} conditions for {len(seeds)} seeds")
    rngs = [np.random.default_rng(seed) for seed in seeds]
    shape = (1, resolution, resolution)
    x = np.stack([rng.standard_normal(shape) for rng in rngs]).astype(np.float32)
    for t in range(model.schedule.steps, 0, -1):
        z = np.stack([rng.standard_normal(shape) for rng in rngs]).astype(np.float32) if t > 1 else None
        x = p_sample_step(model, x, t, cond, omega, z)
    logger.debug("Sampled %d grids (omega %.2f)", len(seeds), omega)
    return [SdfGrid.from_normalized(item[0], sdf_abs=model.sdf_abs) for item in x]


def sample(
    model: DiffusionModel,
    cond: PressureFeatures | np.ndarray | None,
    omega: float = 1.0,
    seed: int = 0,
) -> SdfGrid:
    """Generate one SDF grid for ``cond``; deterministic given ``seed``."""
    features = None
    if cond is not None:
        features = (cond.to_vector() if isinstance(cond, PressureFeatures) else np.asarray(cond))[None, :]
    return sample_batch(model, features, omega, [seed])[0]


def save_diffusion(model: DiffusionModel, path: Path) -> None:
    header = CheckpointHeader(
        arch_name=ARCH_NAME,
        seed=model.seed,
        step=model.step,
        extra={
            "config": model.config.model_dump(mode="json"),
            "schedule": {
                "steps": model.schedule.steps,
                "beta_start": model.schedule.beta_start,
                "beta_end": model.schedule.beta_end,
            },
            "normalizer": model.normalizer.model_dump(),
            "sdf_abs": model.sdf_abs,
        },
    )
    write_checkpoint(path, header, model.denoiser.state_dict())


def load_diffusion(path: Path) -> DiffusionModel:
    """Rebuild a diffusion model from a checkpoint file.

    Raises:
        ValueError: If the checkpoint holds another architecture.
    """
    header, state = read_checkpoint(path)
    if header.arch_name != ARCH_NAME:
        raise ValueError(f"{path} holds a {header.arch_name!r} checkpoint, expected {ARCH_NAME!r}")
    config = DenoiserConfig.model_validate(header.extra["config"])
    schedule = NoiseSchedule.linear(**header.extra["schedule"])
    model = DiffusionModel.create(config, header.seed, schedule, sdf_abs=header.extra.get("sdf_abs", False))
    model.denoiser.load_state_dict(state)
    model.denoiser.eval()
    model.normalizer = ConditionNormalizer.model_validate(header.extra["normalizer"])
    model.step = header.step
    return model
