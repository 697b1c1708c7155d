"""Dataset manifest record."""

from __future__ import annotations

import re

from pydantic import BaseModel, Field, field_validator

from airfoil_inverse_design.features.extraction import PressureFeatures
from airfoil_inverse_design.geometry.cst import CstParams

INITIAL_PROVENANCE = "initial"
_ROUND_PATTERN = re.compile(r"^active-learning round \d+$")


def active_learning_provenance(round_index: int) -> str:
    return f"active-learning round {round_index}"


class DatasetRecord(BaseModel):
    """One airfoil with its solved CP distribution and features.

    Attributes:
        id (str): Stable identifier, e.g. ``"0007"``.
        cst_params (CstParams | None): Sampled CST parameters; ``None`` for
            airfoils added by active learning (they come from the mapping model).
        airfoil_path (str): Airfoil text file, relative to the dataset root.
        cp_path (str): CP CSV, relative to the dataset root.
        sdf_path (str): Grid file, relative to the dataset root.
        features (PressureFeatures): Features of the stored CP.
        provenance (str): ``"initial"`` or ``"active-learning round k"``.
    """

    id: str
    cst_params: CstParams | None = None
    airfoil_path: str
    cp_path: str
    sdf_path: str
    features: PressureFeatures
    provenance: str = Field(default=INITIAL_PROVENANCE)

    @field_validator("provenance")
    @classmethod
    def _check_provenance(cls, value: str) -> str:
        if value != INITIAL_PROVENANCE and not _ROUND_PATTERN.match(value):
            raise ValueError(f"Unknown provenance {value!r}")
        return value
