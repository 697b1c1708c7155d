"""Dataset construction and loading.

Build steps: fit CST to the baseline, sample a Latin hypercube of CST
coefficients, place each airfoil on the shared grid, solve its CP with the
surrogate, then encode the SDF grid and extract the features. Every record
is written under the dataset root and listed in ``manifest.json``.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict

from airfoil_inverse_design.aero.models import CpDistribution
from airfoil_inverse_design.aero.surrogate import solve
from airfoil_inverse_design.data_access.file_access import (
    load_baseline_airfoil,
    read_airfoil,
    read_cp_csv,
    read_grid,
    read_manifest,
    write_airfoil,
    write_cp_csv,
    write_features_csv,
    write_grid,
    write_manifest,
)
from airfoil_inverse_design.encoding.sdf import SdfGrid, encode
from airfoil_inverse_design.features.extraction import PressureFeatures, extract
from airfoil_inverse_design.geometry.airfoil import AirfoilCoords
from airfoil_inverse_design.geometry.cst import CstParams, airfoil_from_cst, cst_fit
from airfoil_inverse_design.geometry.sampling import sample_dataset
from airfoil_inverse_design.pipeline.config import PipelineConfig, Workspace
from airfoil_inverse_design.pipeline.records import INITIAL_PROVENANCE, DatasetRecord
from airfoil_inverse_design.utils.constants import CST_ORDER
from airfoil_inverse_design.utils.exceptions import AirfoilDesignError, BuildError
from airfoil_inverse_design.utils.seeding import component_seed

logger = logging.getLogger(__name__)


class TrainingArrays(BaseModel):
    """Stacked training data of a list of records."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    ids: list[str]
    grids: list[SdfGrid]
    features: np.ndarray
    ordinates: np.ndarray


def record_paths(record_id: str) -> tuple[str, str, str]:
    """Relative airfoil, CP and grid paths of a record."""
    return f"airfoils/{record_id}.dat", f"cp/{record_id}.csv", f"sdf/{record_id}.grid"


def next_record_id(records: list[DatasetRecord]) -> str:
    return f"{max((int(record.id) for record in records), default=-1) + 1:04d}"


def split_indices(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic ``(train, held_out)`` index split, both sorted.

    Raises:
        ValueError: If ``fraction`` is outside [0, 1).
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"Held-out fraction must be in [0, 1), got {fraction}")
    order = np.random.default_rng(seed).permutation(n)
    held = round(fraction * n)
    return np.sort(order[held:]), np.sort(order[:held])


def write_record(
    root: Path,
    record_id: str,
    airfoil: AirfoilCoords,
    cp: CpDistribution,
    grid: SdfGrid,
    features: PressureFeatures,
    cst_params: CstParams | None = None,
    provenance: str = INITIAL_PROVENANCE,
) -> DatasetRecord:
    airfoil_path, cp_path, sdf_path = record_paths(record_id)
    for relative in (airfoil_path, cp_path, sdf_path):
        (root / relative).parent.mkdir(parents=True, exist_ok=True)
    write_airfoil(root / airfoil_path, airfoil)
    write_cp_csv(root / cp_path, cp)
    write_grid(root / sdf_path, grid)
    return DatasetRecord(
        id=record_id,
        cst_params=cst_params,
        airfoil_path=airfoil_path,
        cp_path=cp_path,
        sdf_path=sdf_path,
        features=features,
        provenance=provenance,
    )


def save_manifest(root: Path, records: list[DatasetRecord]) -> None:
    """Write the manifest and the feature table of ``records``."""
    write_manifest(root / "manifest.json", records)
    ids = [record.id for record in records]
    write_features_csv(root / "features.csv", ids, [record.features for record in records])


def build_dataset(config: PipelineConfig, root: Path) -> list[DatasetRecord]:
    """Build the dataset of ``config`` under ``root``.

    Records whose solve, encoding or extraction fails are logged and skipped.

    Returns:
        list[DatasetRecord]: Records in sampling order.

    Raises:
        BuildError: If more than ``max_failure_fraction`` of the records fail.
    """
    settings = config.dataset
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    baseline = cst_fit(load_baseline_airfoil(), CST_ORDER)
    logger.info("Baseline CST fit: max residual %.2e", baseline.max_residual)

    if settings.fraction == 0:
        samples = [baseline.params] * settings.n
    else:
        samples = sample_dataset(
            baseline.params, settings.fraction, settings.n, component_seed(settings.seed, "dataset.lhs")
        )

    records = []
    failures = 0
    for index, params in enumerate(samples):
        record_id = f"{index:04d}"
        try:
            airfoil = airfoil_from_cst(params, name=f"sample {record_id}")
            cp = solve(airfoil, config.flow, config=config.aero)
            grid = encode(cp, settings.resolution, config.features.sdf_abs)
            features = extract(cp, config.features.fsw_mode, config.features.anchor_mode)
        except (AirfoilDesignError, ValueError) as exc:
            failures += 1
            logger.warning("Skipping record %s: %s", record_id, exc)
            continue
        records.append(write_record(root, record_id, airfoil, cp, grid, features, cst_params=params))
        if (index + 1) % 50 == 0:
            logger.info("Built %d/%d records", index + 1, settings.n)

    if failures > settings.max_failure_fraction * settings.n:
        raise BuildError(
            f"{failures} of {settings.n} records failed", failures=failures, limit=settings.max_failure_fraction
        )
    save_manifest(root, records)
    logger.info("Dataset written to %s: %d records, %d skipped", root, len(records), failures)
    return records


def load_records(workspace: Workspace) -> list[DatasetRecord]:
    return read_manifest(workspace.manifest_path)


def load_training_arrays(root: Path, records: list[DatasetRecord]) -> TrainingArrays:
    """Read the grids, features and raw ordinates of ``records``."""
    root = Path(root)
    grids = [read_grid(root / record.sdf_path) for record in records]
    ordinates = np.stack([read_airfoil(root / record.airfoil_path).ordinates() for record in records])
    features = np.stack([record.features.to_vector() for record in records])
    return TrainingArrays(ids=[record.id for record in records], grids=grids, features=features, ordinates=ordinates)


def _split_seed(config: PipelineConfig) -> int:
    return component_seed(config.dataset.seed, "dataset.split")


def training_records(config: PipelineConfig, records: list[DatasetRecord]) -> list[DatasetRecord]:
    """Records available for training: the initial train split plus every active-learning record."""
    initial = [record for record in records if record.provenance == INITIAL_PROVENANCE]
    train, _ = split_indices(len(initial), config.dataset.held_out_fraction, _split_seed(config))
    added = [record for record in records if record.provenance != INITIAL_PROVENANCE]
    return [initial[index] for index in train] + added


def held_out_records(config: PipelineConfig, records: list[DatasetRecord]) -> list[DatasetRecord]:
    initial = [record for record in records if record.provenance == INITIAL_PROVENANCE]
    _, held = split_indices(len(initial), config.dataset.held_out_fraction, _split_seed(config))
    return [initial[index] for index in held]


def recompute_features(root: Path, record: DatasetRecord, config: PipelineConfig) -> PressureFeatures:
    """Features of the stored CP, for consistency checks."""
    cp = read_cp_csv(Path(root) / record.cp_path)
    return extract(cp, config.features.fsw_mode, config.features.anchor_mode)
