"""Pipeline configuration.

One JSON file holds every setting, grouped by section. Omitted sections and
fields take their defaults, which equal the packaged desk-scale profile.

Usage:

    config = load_config(Path("my_run.json"))
    config = load_profile("full_scale")
    workspace = Workspace(Path(config.paths.workspace))
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, Field

from airfoil_inverse_design.aero.models import AeroConfig, FlowConditions
from airfoil_inverse_design.data_access.file_access import load_packaged_text
from airfoil_inverse_design.diffusion.ddpm import DiffusionTraining
from airfoil_inverse_design.diffusion.schedule import NoiseSchedule
from airfoil_inverse_design.diffusion.unet import DenoiserConfig
from airfoil_inverse_design.features.extraction import AnchorMode, FswMode
from airfoil_inverse_design.mapping.model import MappingConfig
from airfoil_inverse_design.optimizer.problem import DEFAULT_LOWER, DEFAULT_UPPER, OptimizationProblem
from airfoil_inverse_design.utils.constants import DEFAULT_PENALTY

logger = logging.getLogger(__name__)

ProfileName = Literal["desk_scale", "full_scale"]


class DatasetSettings(BaseModel):
    n: int = Field(default=300, ge=1, description="Number of sampled airfoils.")
    fraction: float = Field(default=0.25, ge=0.0, description="Relative half-width of the CST sampling box.")
    seed: int = Field(default=0, ge=0, description="Root seed of the whole pipeline.")
    resolution: int = Field(default=64, description="SDF grid cells per axis.")
    held_out_fraction: float = Field(default=0.07, ge=0.0, lt=1.0, description="Records never used in training.")
    max_failure_fraction: float = Field(default=0.1, ge=0.0, le=1.0)


class FeatureSettings(BaseModel):
    fsw_mode: FswMode = "position"
    anchor_mode: AnchorMode = "suction_peak"
    sdf_abs: bool = False


class DiffusionSettings(BaseModel):
    steps: int = Field(default=400, ge=2, description="Diffusion steps T.")
    beta_start: float = Field(default=1e-4, gt=0.0, lt=1.0)
    beta_end: float = Field(default=0.02, gt=0.0, lt=1.0)
    base_channels: int = Field(default=32, gt=0)
    channel_mults: tuple[int, int, int] = (1, 2, 4)
    time_dim: int = Field(default=64, gt=0)
    groups: int = Field(default=8, gt=0)
    epochs: int = Field(default=200, ge=1)
    batch_size: int = Field(default=12, ge=1)
    lr: float = Field(default=1e-4, gt=0.0)
    p_drop: float = Field(default=0.1, ge=0.0, le=1.0)
    omega: float = Field(default=1.0, ge=0.0, description="Guidance weight used for design.")

    def denoiser_config(self, resolution: int) -> DenoiserConfig:
        return DenoiserConfig(
            resolution=resolution,
            base_channels=self.base_channels,
            channel_mults=self.channel_mults,
            time_dim=self.time_dim,
            groups=self.groups,
        )

    def schedule(self) -> NoiseSchedule:
        return NoiseSchedule.linear(self.steps, self.beta_start, self.beta_end)

    def training(self) -> DiffusionTraining:
        return DiffusionTraining(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr, p_drop=self.p_drop)


class OptimizerSettings(BaseModel):
    lower: list[float] = Field(default_factory=lambda: list(DEFAULT_LOWER))
    upper: list[float] = Field(default_factory=lambda: list(DEFAULT_UPPER))
    penalty: float = Field(default=DEFAULT_PENALTY, ge=0.0)
    budget: int = Field(default=60, ge=1)
    initial_points: int = Field(default=12, ge=1)
    error_criteria: float = Field(default=0.1, ge=0.0)
    max_rounds: int = Field(default=10, ge=0)
    fine_tune_epochs: int = Field(default=20, ge=1)
    fine_tune_lr: float = Field(default=1e-5, gt=0.0)

    def problem(self, constrained: bool = True) -> OptimizationProblem:
        return OptimizationProblem(lower=self.lower, upper=self.upper, penalty=self.penalty, constrained=constrained)


class PathSettings(BaseModel):
    workspace: str = Field(default="workspace", description="Root of datasets, checkpoints and reports.")


class PipelineConfig(BaseModel):
    """Every setting of a pipeline run."""

    dataset: DatasetSettings = Field(default_factory=DatasetSettings)
    flow: FlowConditions = Field(default_factory=FlowConditions)
    aero: AeroConfig = Field(default_factory=AeroConfig)
    features: FeatureSettings = Field(default_factory=FeatureSettings)
    diffusion: DiffusionSettings = Field(default_factory=DiffusionSettings)
    mapping: MappingConfig = Field(default_factory=MappingConfig)
    optimizer: OptimizerSettings = Field(default_factory=OptimizerSettings)
    paths: PathSettings = Field(default_factory=PathSettings)

    def mapping_config(self) -> MappingConfig:
        return self.mapping.model_copy(update={"resolution": self.dataset.resolution})

    def with_overrides(self, seed: int | None = None, workspace: str | None = None) -> PipelineConfig:
        """Copy with the command-line overrides applied."""
        config = self
        if seed is not None:
            config = config.model_copy(update={"dataset": config.dataset.model_copy(update={"seed": seed})})
        if workspace is not None:
            config = config.model_copy(update={"paths": PathSettings(workspace=workspace)})
        return config


class Workspace:
    """File layout under the workspace root."""

    def __init__(self, root: Path):
        self.root = Path(root)

    @property
    def dataset_dir(self) -> Path:
        return self.root / "dataset"

    @property
    def manifest_path(self) -> Path:
        return self.dataset_dir / "manifest.json"

    @property
    def features_path(self) -> Path:
        return self.dataset_dir / "features.csv"

    @property
    def checkpoint_dir(self) -> Path:
        return self.root / "checkpoints"

    @property
    def diffusion_checkpoint(self) -> Path:
        return self.checkpoint_dir / "diffusion.ckpt"

    @property
    def mapping_checkpoint(self) -> Path:
        return self.checkpoint_dir / "mapping.ckpt"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    def ensure(self, *directories: Path) -> None:
        for directory in directories:
            directory.mkdir(parents=True, exist_ok=True)


def parse_config(text: str, source: str = "<string>") -> PipelineConfig:
    """Validate JSON config text.

    Raises:
        ValueError: On malformed JSON or invalid settings.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{source} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError(f"{source} must hold a JSON object")
    return PipelineConfig.model_validate(data)


def load_config(path: Path) -> PipelineConfig:
    """Read a config file.

    Raises:
        ValueError: If the file is missing, unreadable or invalid.
    """
    config_path = Path(path)
    try:
        text = config_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValueError(f"Cannot read config {config_path}: {exc}") from exc
    logger.debug("Loaded config %s", config_path)
    return parse_config(text, str(config_path))


def load_profile(name: ProfileName = "desk_scale") -> PipelineConfig:
    """One of the packaged profiles."""
    if name not in ("desk_scale", "full_scale"):
        raise ValueError(f"Unknown profile {name!r}")
    return parse_config(load_packaged_text(f"data/{name}.json"), name)
