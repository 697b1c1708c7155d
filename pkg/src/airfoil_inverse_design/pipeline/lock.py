"""Advisory lock files guarding checkpoint mutation."""

from __future__ import annotations

import logging
import os
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

from airfoil_inverse_design.utils.exceptions import LockError

logger = logging.getLogger(__name__)


def lock_path(checkpoint: Path) -> Path:
    checkpoint = Path(checkpoint)
    return checkpoint.with_name(checkpoint.name + ".lock")


@contextmanager
def checkpoint_lock(checkpoint: Path) -> Iterator[Path]:
    """Hold ``<checkpoint>.lock`` for the duration of the block.

    Raises:
        LockError: If the lock file already exists.
    """
    path = lock_path(checkpoint)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        descriptor = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as exc:
        raise LockError(f"{checkpoint} is locked by another process", lock=str(path)) from exc
    try:
        os.write(descriptor, str(os.getpid()).encode("ascii"))
    finally:
        os.close(descriptor)
    logger.debug("Acquired %s", path)
    try:
        yield path
    finally:
        path.unlink(missing_ok=True)
        logger.debug("Released %s", path)
