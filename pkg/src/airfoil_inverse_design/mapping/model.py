"""CNN regression from an SDF grid to the 130 airfoil ordinates.

Three ``conv(k=5, s=2) -> batch norm -> ReLU`` stages halve the grid each
time; the flattened feature map feeds one linear layer with 130 outputs.
Targets are trained ×1000 and divided back before repair.

Usage:

    model, history = train_mapping(grids, ordinates, MappingConfig(), seed=3)
    airfoil = predict_airfoil(grid, model)
"""

from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from airfoil_inverse_design.data_access.file_access import read_checkpoint, write_checkpoint
from airfoil_inverse_design.encoding.sdf import SdfGrid, check_resolution
from airfoil_inverse_design.geometry.airfoil import AirfoilCoords, cosine_x_grid, repair
from airfoil_inverse_design.nncore import functional as F
from airfoil_inverse_design.nncore.checkpoint import CheckpointHeader
from airfoil_inverse_design.nncore.layers import BatchNorm2d, Conv2d, Linear, Module
from airfoil_inverse_design.nncore.optim import Adam
from airfoil_inverse_design.nncore.tensor import Tensor, no_grad
from airfoil_inverse_design.utils.constants import AIRFOIL_POINT_COUNT, Y_SCALE
from airfoil_inverse_design.utils.exceptions import NonFiniteError, ShapeError, TrainingError

logger = logging.getLogger(__name__)

ARCH_NAME = "mapping-cnn"
MIN_TRAINING_PAIRS = 10


class MappingConfig(BaseModel):
    resolution: int = Field(default=64)
    widths: tuple[int, int, int] = Field(default=(16, 32, 64))
    kernel_size: int = Field(default=5, ge=1)
    scale: float = Field(default=Y_SCALE, gt=0.0, description="Target scale factor.")
    zero_init_head: bool = Field(default=True)
    batch_size: int = Field(default=64, ge=1)
    epochs: int = Field(default=150, ge=1)
    lr: float = Field(default=1e-4, gt=0.0)
    validation_fraction: float = Field(default=0.1, gt=0.0, lt=1.0)


class MappingHistory(BaseModel):
    train_loss: list[float] = Field(default_factory=list)
    validation_loss: list[float] = Field(default_factory=list)


class MappingNet(Module):
    def __init__(self, config: MappingConfig, rng: np.random.Generator):
        super().__init__()
        check_resolution(config.resolution)
        self.config = config
        self.convs = []
        self.norms = []
        channels = 1
        for width in config.widths:
            padding = config.kernel_size // 2
            self.convs.append(Conv2d(channels, width, config.kernel_size, rng, stride=2, padding=padding))
            self.norms.append(BatchNorm2d(width))
            channels = width
        reduced = config.resolution // 8
        self.head = Linear(channels * reduced * reduced, AIRFOIL_POINT_COUNT, rng)

    def forward(self, x: Tensor) -> Tensor:
        expected = (1, self.config.resolution, self.config.resolution)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise ShapeError(f"Mapping model expects (n, *{expected}) input, got {x.shape}")
        h = x
        for conv, norm in zip(self.convs, self.norms, strict=True):
            h = F.relu(norm(conv(h)))
        return self.head(F.flatten(h))

    def zero_init_head(self, scaled_targets: np.ndarray) -> None:
        """Zero the head weight and set its bias to the mean scaled target."""
        self.head.weight.values = np.zeros_like(self.head.weight.values)
        self.head.bias.values = np.asarray(scaled_targets, dtype=np.float64).mean(axis=0).astype(self.head.bias.dtype)


class MappingModel:
    def __init__(self, net: MappingNet, seed: int = 0):
        self.net = net
        self.seed = seed
        self.step = 0

    @classmethod
    def create(cls, config: MappingConfig, seed: int) -> MappingModel:
        return cls(MappingNet(config, np.random.default_rng(seed)), seed=seed)

    @property
    def config(self) -> MappingConfig:
        return self.net.config


def _stack_grids(grids: list[SdfGrid] | np.ndarray) -> np.ndarray:
    if isinstance(grids, np.ndarray):
        stacked = grids.astype(np.float32)
    else:
        stacked = np.stack([grid.normalized() for grid in grids]).astype(np.float32)
    return stacked[:, None, :, :] if stacked.ndim == 3 else stacked


def _batch_loss(model: MappingModel, inputs: np.ndarray, targets: np.ndarray) -> Tensor:
    try:
        loss = F.mse(model.net(Tensor(inputs)), targets)
    except NonFiniteError as exc:
        raise TrainingError("Non-finite activations during mapping training", step=model.step) from exc
    if not math.isfinite(float(loss.values)):
        raise TrainingError("Mapping loss is not finite", step=model.step)
    return loss


def evaluate_loss(model: MappingModel, inputs: np.ndarray, scaled_targets: np.ndarray, batch_size: int = 64) -> float:
    """Mean squared error in scaled units, evaluation mode."""
    model.net.eval()
    total, count = 0.0, 0
    with no_grad():
        for first in range(0, inputs.shape[0], batch_size):
            chunk = slice(first, first + batch_size)
            size = inputs[chunk].shape[0]
            total += float(_batch_loss(model, inputs[chunk], scaled_targets[chunk]).values) * size
            count += size
    return total / count


def _fit(
    model: MappingModel,
    inputs: np.ndarray,
    scaled: np.ndarray,
    validation: tuple[np.ndarray, np.ndarray] | None,
    epochs: int,
    lr: float,
    batch_size: int,
    rng: np.random.Generator,
    label: str,
) -> MappingHistory:
    optimizer = Adam(model.net.parameters(), lr=lr)
    history = MappingHistory()
    for epoch in range(epochs):
        model.net.train()
        order = rng.permutation(inputs.shape[0])
        losses = []
        for first in range(0, order.size, batch_size):
            batch = order[first : first + batch_size]
            loss = _batch_loss(model, inputs[batch], scaled[batch])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            model.step += 1
            losses.append(float(loss.values))
        history.train_loss.append(float(np.mean(losses)))
        if validation is not None:
            history.validation_loss.append(evaluate_loss(model, *validation, batch_size=batch_size))
        logger.info(
            "%s epoch %d/%d: train %.6f validation %s",
            label,
            epoch + 1,
            epochs,
            history.train_loss[-1],
            f"{history.validation_loss[-1]:.6f}" if history.validation_loss else "n/a",
        )
    model.net.eval()
    return history


def split_train_validation(count: int, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    order = rng.permutation(count)
    held_out = max(1, round(fraction * count))
    return np.sort(order[held_out:]), np.sort(order[:held_out])


def train_mapping(
    grids: list[SdfGrid] | np.ndarray,
    ordinates: np.ndarray,
    config: MappingConfig,
    seed: int,
) -> tuple[MappingModel, MappingHistory]:
    """Train a mapping model from scratch.

    Args:
        grids (list[SdfGrid] | np.ndarray): Input grids (or normalised ``(m, R, R)`` arrays).
        ordinates (np.ndarray): ``(m, 130)`` raw ordinates; scaled by ``config.scale`` here.
        config (MappingConfig): Architecture and schedule.
        seed (int): Seed of initialisation, split and batch order.

    Returns:
        tuple[MappingModel, MappingHistory]: The trained model and per-epoch losses.

    Raises:
        ValueError: With fewer than 10 pairs.
        TrainingError: On a non-finite loss.
    """
    inputs = _stack_grids(grids)
    targets = np.asarray(ordinates, dtype=np.float64) * config.scale
    if inputs.shape[0] < MIN_TRAINING_PAIRS:
        raise ValueError(f"Mapping training needs at least {MIN_TRAINING_PAIRS} pairs, got {inputs.shape[0]}")
    if targets.shape != (inputs.shape[0], AIRFOIL_POINT_COUNT):
        raise ShapeError(f"Targets {targets.shape} do not match {inputs.shape[0]} grids")

    rng = np.random.default_rng(seed)
    model = MappingModel.create(config, seed)
    train_index, validation_index = split_train_validation(inputs.shape[0], config.validation_fraction, rng)
    if config.zero_init_head:
        model.net.zero_init_head(targets[train_index])
    logger.info("Training mapping model on %d pairs (%d held out)", train_index.size, validation_index.size)
    history = _fit(
        model,
        inputs[train_index],
        targets[train_index].astype(np.float32),
        (inputs[validation_index], targets[validation_index].astype(np.float32)),
        config.epochs,
        config.lr,
        config.batch_size,
        rng,
        "mapping",
    )
    return model, history


def fine_tune_mapping(
    model: MappingModel,
    grids: list[SdfGrid] | np.ndarray,
    ordinates: np.ndarray,
    epochs: int = 20,
    lr: float = 1e-5,
    seed: int = 0,
) -> MappingHistory:
    """Continue training on every pair without a validation split."""
    inputs = _stack_grids(grids)
    scaled = (np.asarray(ordinates, dtype=np.float64) * model.config.scale).astype(np.float32)
    return _fit(
        model,
        inputs,
        scaled,
        None,
        epochs,
        lr,
        model.config.batch_size,
        np.random.default_rng(seed),
        "mapping fine-tune",
    )


def predict_ordinates(model: MappingModel, grids: list[SdfGrid] | np.ndarray) -> np.ndarray:
    """Raw (unscaled, unrepaired) ordinates for each grid."""
    inputs = _stack_grids(grids)
    model.net.eval()
    with no_grad():
        scaled = model.net(Tensor(inputs)).values.astype(np.float64)
    return scaled / model.config.scale


def predict_airfoil(grid: SdfGrid, model: MappingModel) -> AirfoilCoords:
    """Predict, unscale and repair the airfoil for one grid.

    Raises:
        ShapeError: If the grid resolution differs from the model's.
        RepairError: Propagated from ``repair``.
    """
    if grid.resolution != model.config.resolution:
        raise ShapeError(f"Grid resolution {grid.resolution} does not match model resolution {model.config.resolution}")
    return repair(predict_ordinates(model, [grid])[0])


def mapping_metrics(predicted: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-point MAE and MRE over a batch of ordinate vectors.

    MRE uses ``|p - t| / max(|p|, |t|)``; points where both are zero contribute 0.

    Raises:
        ShapeError: If the shapes differ.
    """
    p = np.atleast_2d(np.asarray(predicted, dtype=np.float64))
    t = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    if p.shape != t.shape:
        raise ShapeError(f"Predicted {p.shape} vs truth {t.shape}")
    error = np.abs(p - t)
    scale = np.maximum(np.abs(p), np.abs(t))
    with np.errstate(divide="ignore", invalid="ignore"):
        relative = np.where(scale > 0, error / scale, 0.0)
    return error.mean(axis=0), relative.mean(axis=0)


def per_point_frame(mae: np.ndarray, mre: np.ndarray) -> pd.DataFrame:
    """Per-ordinate diagnostics with the surface and abscissa of each point."""
    grid = cosine_x_grid(AIRFOIL_POINT_COUNT)
    le = AIRFOIL_POINT_COUNT // 2
    x = np.concatenate((grid[:le], grid[le + 1 :]))
    surface = ["upper"] * le + ["lower"] * (AIRFOIL_POINT_COUNT - le)
    return pd.DataFrame({"index": np.arange(AIRFOIL_POINT_COUNT), "surface": surface, "x": x, "mae": mae, "mre": mre})


def save_mapping(model: MappingModel, path: Path) -> None:
    header = CheckpointHeader(
        arch_name=ARCH_NAME,
        seed=model.seed,
        step=model.step,
        extra={"config": model.config.model_dump(mode="json")},
    )
    write_checkpoint(path, header, model.net.state_dict())


def load_mapping(path: Path) -> MappingModel:
    header, state = read_checkpoint(path)
    if header.arch_name != ARCH_NAME:
        raise ValueError(f"{path} holds a {header.arch_name!r} checkpoint, expected {ARCH_NAME!r}")
    model = MappingModel.create(MappingConfig.model_validate(header.extra["config"]), header.seed)
    model.net.load_state_dict(state)
    model.net.eval()
    model.step = header.step
    return model
