"""Checkpoint header model and payload packing.

A checkpoint is one JSON header line followed by the concatenated
little-endian float32 payloads of every tensor in manifest order. The file
itself is written and read by ``data_access.file_access``.
"""

from __future__ import annotations

from typing import Any

import numpy as np
from pydantic import BaseModel, Field

PAYLOAD_DTYPE = np.dtype("<f4")


class TensorEntry(BaseModel):
    name: str
    shape: list[int]
    byte_offset: int = Field(ge=0)

    @property
    def byte_count(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64)) * PAYLOAD_DTYPE.itemsize


class CheckpointHeader(BaseModel):
    """Header line of a checkpoint file.

    Attributes:
        arch_name (str): Architecture identifier, e.g. ``"denoiser-unet"``.
        tensor_manifest (list[TensorEntry]): Name, shape and offset of every payload.
        seed (int): Seed the model was initialised with.
        step (int): Optimizer steps taken.
        extra (dict[str, Any]): Architecture config, schedule, normaliser, etc.
    """

    arch_name: str
    tensor_manifest: list[TensorEntry] = Field(default_factory=list)
    seed: int = 0
    step: int = Field(default=0, ge=0)
    extra: dict[str, Any] = Field(default_factory=dict)


def pack_state(state: dict[str, np.ndarray]) -> tuple[list[TensorEntry], bytes]:
    """Lay out a state dict as manifest entries plus one payload blob."""
    entries: list[TensorEntry] = []
    chunks: list[bytes] = []
    offset = 0
    for name, value in state.items():
        data = np.ascontiguousarray(value, dtype=PAYLOAD_DTYPE)
        entries.append(TensorEntry(name=name, shape=list(data.shape), byte_offset=offset))
        chunks.append(data.tobytes())
        offset += data.nbytes
    return entries, b"".join(chunks)


def unpack_state(manifest: list[TensorEntry], payload: bytes) -> dict[str, np.ndarray]:
    """Inverse of ``pack_state``.

    Raises:
        ValueError: If the payload is shorter than the manifest requires.
    """
    state: dict[str, np.ndarray] = {}
    for entry in manifest:
        end = entry.byte_offset + entry.byte_count
        if end > len(payload):
            raise ValueError(f"Checkpoint payload truncated at tensor {entry.name!r}")
        chunk = payload[entry.byte_offset : end]
        state[entry.name] = np.frombuffer(chunk, dtype=PAYLOAD_DTYPE).reshape(entry.shape).astype(np.float32)
    return state
