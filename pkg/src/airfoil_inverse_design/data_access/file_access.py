"""Readers and writers for every file the pipeline produces or consumes.

Formats:

* Airfoil text: optional ``# name`` header, then one ``x y`` pair per line,
  counterclockwise from the trailing edge.
* CP CSV: ``x,cp_upper,cp_lower``.
* Feature CSV: ``id,f_sp,f_sw,f_ss,f_pg,f_lm,f_area,degenerate_flag``.
* Grid file: one JSON header line, then little-endian float32 values, row-major.
* Checkpoint: one JSON header line, then little-endian float32 payloads.
* Manifest: JSON array of dataset records.

Writers emit deterministic bytes (``%.17g`` floats, sorted JSON keys).
Packaged resources are loaded with ``importlib.resources.files``.
"""

from __future__ import annotations

import json
import logging
from importlib.resources import files
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from airfoil_inverse_design.aero.models import CpDistribution
from airfoil_inverse_design.encoding.sdf import SdfGrid
from airfoil_inverse_design.features.extraction import PressureFeatures
from airfoil_inverse_design.geometry.airfoil import AirfoilCoords, AirfoilProfile, cosine_x_grid
from airfoil_inverse_design.nncore.checkpoint import PAYLOAD_DTYPE, CheckpointHeader, pack_state, unpack_state
from airfoil_inverse_design.pipeline.records import DatasetRecord
from airfoil_inverse_design.utils.constants import AIRFOIL_POINT_COUNT, CP_DOMAIN_CP, CP_DOMAIN_X, FEATURE_NAMES

logger = logging.getLogger(__name__)

PACKAGE = "airfoil_inverse_design"
BASELINE_RESOURCE = "data/rae2822.dat"
FLOAT_FORMAT = "%.17g"
CP_COLUMNS = ["x", "cp_upper", "cp_lower"]
FEATURE_COLUMNS = ["id", *FEATURE_NAMES, "degenerate_flag"]
LOSS_COLUMNS = ["epoch", "train_loss", "validation_loss"]
_GRID_TOLERANCE = 1e-12


def _dump_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def _header_line(data: dict[str, Any]) -> bytes:
    return (json.dumps(data, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def _split_header(raw: bytes, path: Path) -> tuple[dict[str, Any], bytes]:
    newline = raw.find(b"\n")
    if newline < 0:
        raise ValueError(f"{path} has no JSON header line")
    return json.loads(raw[:newline].decode("utf-8")), raw[newline + 1 :]


def load_packaged_text(filename: str) -> str:
    """Load a UTF-8 resource shipped in the package ``data`` directory."""
    file_path = files(PACKAGE).joinpath(filename)
    logger.debug("Loading text from %s", file_path)
    with file_path.open(encoding="utf-8") as f:
        return f.read()


def parse_airfoil_text(text: str) -> tuple[np.ndarray, str]:
    """Parse airfoil text into ``(points, name)``.

    Raises:
        ValueError: On a line that is not two numbers or on fewer than 3 points.
    """
    name = ""
    rows = []
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            name = name or stripped.lstrip("#").strip()
            continue
        parts = stripped.split()
        if len(parts) != 2:
            raise ValueError(f"Line {number}: expected 'x y', got {stripped!r}")
        rows.append((float(parts[0]), float(parts[1])))
    if len(rows) < 3:
        raise ValueError(f"Airfoil text holds {len(rows)} points, need at least 3")
    return np.asarray(rows, dtype=np.float64), name


def format_airfoil_text(points: np.ndarray, name: str = "") -> str:
    lines = [f"# {name}"] if name else []
    lines.extend(f"{FLOAT_FORMAT % x} {FLOAT_FORMAT % y}" for x, y in points)
    return "\n".join(lines) + "\n"


def load_baseline_airfoil() -> AirfoilProfile:
    """The embedded RAE2822 ordinates as an ``AirfoilProfile``."""
    points, name = parse_airfoil_text(load_packaged_text(BASELINE_RESOURCE))
    return AirfoilProfile.from_points(points, name=name or "RAE 2822")


def read_airfoil_profile(path: Path) -> AirfoilProfile:
    points, name = parse_airfoil_text(Path(path).read_text(encoding="utf-8"))
    return AirfoilProfile.from_points(points, name=name)


def read_airfoil(path: Path) -> AirfoilCoords:
    """Read an airfoil on the shared grid (raw ordinates, ``y_scale = 1``).

    Raises:
        ValueError: If the abscissae are not the shared cosine grid.
    """
    points, name = parse_airfoil_text(Path(path).read_text(encoding="utf-8"))
    grid = cosine_x_grid(AIRFOIL_POINT_COUNT)
    if points.shape[0] != grid.size or not np.allclose(points[:, 0], grid, rtol=0.0, atol=_GRID_TOLERANCE):
        raise ValueError(f"{path} is not on the shared {grid.size}-point cosine grid")
    return AirfoilCoords(x=grid, y=points[:, 1], name=name)


def write_airfoil(path: Path, airfoil: AirfoilCoords) -> None:
    """Write raw (unscaled) ordinates."""
    raw = airfoil.unscaled()
    Path(path).write_text(format_airfoil_text(raw.points, raw.name), encoding="utf-8")


def cp_frame(cp: CpDistribution) -> pd.DataFrame:
    return pd.DataFrame({"x": cp.xs, "cp_upper": cp.cp_upper, "cp_lower": cp.cp_lower}, columns=CP_COLUMNS)


def write_cp_csv(path: Path, cp: CpDistribution) -> None:
    cp_frame(cp).to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def read_cp_csv(path: Path) -> CpDistribution:
    frame = pd.read_csv(path, dtype=np.float64, float_precision="round_trip")
    missing = [column for column in CP_COLUMNS if column not in frame.columns]
    if missing:
        raise ValueError(f"{path} lacks CP columns {missing}")
    return CpDistribution(
        xs=frame["x"].to_numpy(), cp_upper=frame["cp_upper"].to_numpy(), cp_lower=frame["cp_lower"].to_numpy()
    )


def features_frame(ids: list[str], features: list[PressureFeatures]) -> pd.DataFrame:
    rows = []
    for record_id, item in zip(ids, features, strict=True):
        values = dict(zip(FEATURE_NAMES, item.to_vector().tolist(), strict=True))
        rows.append({"id": record_id, **values, "degenerate_flag": int(item.degenerate)})
    return pd.DataFrame(rows, columns=FEATURE_COLUMNS)


def write_features_csv(path: Path, ids: list[str], features: list[PressureFeatures]) -> None:
    features_frame(ids, features).to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def read_features_csv(path: Path) -> tuple[list[str], list[PressureFeatures]]:
    frame = pd.read_csv(path, dtype={"id": str}, float_precision="round_trip")
    features = [
        PressureFeatures.from_vector(
            row[list(FEATURE_NAMES)].to_numpy(dtype=np.float64), degenerate=bool(row["degenerate_flag"])
        )
        for _, row in frame.iterrows()
    ]
    return frame["id"].tolist(), features


def write_grid(path: Path, grid: SdfGrid) -> None:
    header = {
        "resolution": grid.resolution,
        "domain": {"x": list(CP_DOMAIN_X), "cp": list(CP_DOMAIN_CP)},
        "sdf_abs": grid.sdf_abs,
    }
    payload = np.ascontiguousarray(grid.values, dtype=PAYLOAD_DTYPE).tobytes()
    Path(path).write_bytes(_header_line(header) + payload)


def read_grid(path: Path) -> SdfGrid:
    """Read a grid file.

    Raises:
        ValueError: If the payload size does not match the header resolution.
    """
    header, payload = _split_header(Path(path).read_bytes(), path)
    resolution = int(header["resolution"])
    expected = resolution * resolution * PAYLOAD_DTYPE.itemsize
    if len(payload) != expected:
        raise ValueError(f"{path}: payload holds {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype=PAYLOAD_DTYPE).reshape(resolution, resolution)
    return SdfGrid(resolution=resolution, values=values.astype(np.float64), sdf_abs=bool(header.get("sdf_abs", False)))


def write_checkpoint(path: Path, header: CheckpointHeader, state: dict[str, np.ndarray]) -> None:
    """Write a checkpoint; the manifest in ``header`` is rebuilt from ``state``."""
    manifest, payload = pack_state(state)
    full_header = header.model_copy(update={"tensor_manifest": manifest})
    Path(path).write_bytes(_header_line(full_header.model_dump(mode="json")) + payload)
    logger.debug("Wrote checkpoint %s (%d tensors, %d bytes)", path, len(manifest), len(payload))


def read_checkpoint(path: Path) -> tuple[CheckpointHeader, dict[str, np.ndarray]]:
    raw_header, payload = _split_header(Path(path).read_bytes(), path)
    header = CheckpointHeader.model_validate(raw_header)
    logger.debug("Loading checkpoint %s (%s)", path, header.arch_name)
    return header, unpack_state(header.tensor_manifest, payload)


def write_manifest(path: Path, records: list[DatasetRecord]) -> None:
    Path(path).write_text(_dump_json([record.model_dump(mode="json") for record in records]), encoding="utf-8")


def read_manifest(path: Path) -> list[DatasetRecord]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise ValueError(f"{path}: manifest must be a JSON array")
    return [DatasetRecord.model_validate(item) for item in data]


def write_json(path: Path, data: Any) -> None:
    Path(path).write_text(_dump_json(data), encoding="utf-8")


def read_json(path: Path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_frame(path: Path, frame: pd.DataFrame) -> None:
    """Write a report table as CSV."""
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def read_frame(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def loss_history_frame(train: list[float], validation: list[float] | None = None) -> pd.DataFrame:
    """Loss history table; ``validation_loss`` is empty when there is no validation split."""
    column = validation if validation is not None else [np.nan] * len(train)
    return pd.DataFrame(
        {"epoch": np.arange(1, len(train) + 1), "train_loss": train, "validation_loss": column},
        columns=LOSS_COLUMNS,
    )
