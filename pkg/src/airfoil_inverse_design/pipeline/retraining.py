"""Active-learning retrainer backed by the workspace dataset and checkpoints."""

from __future__ import annotations

import logging

import numpy as np

from airfoil_inverse_design.diffusion.ddpm import DiffusionModel, fine_tune_diffusion, save_diffusion
from airfoil_inverse_design.encoding.sdf import encode
from airfoil_inverse_design.mapping.model import MappingModel, fine_tune_mapping, save_mapping
from airfoil_inverse_design.optimizer.active_learning import RetrainOutcome
from airfoil_inverse_design.optimizer.evaluation import DesignEvaluation
from airfoil_inverse_design.pipeline.config import PipelineConfig, Workspace
from airfoil_inverse_design.pipeline.dataset import (
    load_training_arrays,
    next_record_id,
    save_manifest,
    training_records,
    write_record,
)
from airfoil_inverse_design.pipeline.records import DatasetRecord, active_learning_provenance
from airfoil_inverse_design.utils.exceptions import EvaluationError
from airfoil_inverse_design.utils.seeding import component_seed

logger = logging.getLogger(__name__)


class ModelRetrainer:
    """Append verified designs to the dataset and fine-tune both models.

    The models are updated in place, so an evaluator holding them sees the
    fine-tuned weights at its next evaluation.

    Args:
        config (PipelineConfig): Run settings.
        workspace (Workspace): Dataset and checkpoint layout.
        records (list[DatasetRecord]): Current manifest; extended in place.
        diffusion (DiffusionModel): Model to fine-tune.
        mapping (MappingModel): Model to fine-tune.
    """

    def __init__(
        self,
        config: PipelineConfig,
        workspace: Workspace,
        records: list[DatasetRecord],
        diffusion: DiffusionModel,
        mapping: MappingModel,
    ):
        self.config = config
        self.workspace = workspace
        self.records = records
        self.diffusion = diffusion
        self.mapping = mapping
        self.arrays = load_training_arrays(workspace.dataset_dir, training_records(config, records))
        self._snapshot: tuple[dict[str, np.ndarray], int, dict[str, np.ndarray], int] | None = None

    def _take_snapshot(self) -> None:
        self._snapshot = (
            self.diffusion.denoiser.state_dict(),
            self.diffusion.step,
            self.mapping.net.state_dict(),
            self.mapping.step,
        )

    def _append(self, evaluation: DesignEvaluation, round_index: int) -> DatasetRecord:
        if evaluation.airfoil is None or evaluation.verified_cp is None or evaluation.verified_features is None:
            raise EvaluationError("Only successful evaluations can join the dataset", round=round_index)
        grid = encode(evaluation.verified_cp, self.config.dataset.resolution, self.config.features.sdf_abs)
        record = write_record(
            self.workspace.dataset_dir,
            next_record_id(self.records),
            evaluation.airfoil,
            evaluation.verified_cp,
            grid,
            evaluation.verified_features,
            provenance=active_learning_provenance(round_index),
        )
        self.records.append(record)
        save_manifest(self.workspace.dataset_dir, self.records)
        self.arrays.ids.append(record.id)
        self.arrays.grids.append(grid)
        self.arrays.features = np.vstack((self.arrays.features, evaluation.verified_features.to_vector()))
        self.arrays.ordinates = np.vstack((self.arrays.ordinates, evaluation.airfoil.unscaled().ordinates()))
        return record

    def retrain(self, evaluation: DesignEvaluation, round_index: int) -> RetrainOutcome:
        record = self._append(evaluation, round_index)
        self._take_snapshot()
        settings = self.config.optimizer
        seed = component_seed(self.config.dataset.seed, f"active_learning.round{round_index}")
        logger.info("Fine-tuning on %d records after adding %s", len(self.arrays.ids), record.id)
        diffusion_losses = fine_tune_diffusion(
            self.diffusion,
            self.arrays.grids,
            self.arrays.features,
            epochs=settings.fine_tune_epochs,
            lr=settings.fine_tune_lr,
            batch_size=self.config.diffusion.batch_size,
            p_drop=self.config.diffusion.p_drop,
            seed=seed,
        )
        mapping_history = fine_tune_mapping(
            self.mapping,
            self.arrays.grids,
            self.arrays.ordinates,
            epochs=settings.fine_tune_epochs,
            lr=settings.fine_tune_lr,
            seed=seed,
        )
        return RetrainOutcome(
            start_loss={"diffusion": diffusion_losses[0], "mapping": mapping_history.train_loss[0]},
            end_loss={"diffusion": diffusion_losses[-1], "mapping": mapping_history.train_loss[-1]},
        )

    def rollback(self) -> None:
        """Restore the weights held before the last fine-tune."""
        if self._snapshot is None:
            return
        diffusion_state, diffusion_step, mapping_state, mapping_step = self._snapshot
        self.diffusion.denoiser.load_state_dict(diffusion_state)
        self.diffusion.step = diffusion_step
        self.mapping.net.load_state_dict(mapping_state)
        self.mapping.step = mapping_step
        self._snapshot = None

    def save(self) -> None:
        save_diffusion(self.diffusion, self.workspace.diffusion_checkpoint)
        save_mapping(self.mapping, self.workspace.mapping_checkpoint)
