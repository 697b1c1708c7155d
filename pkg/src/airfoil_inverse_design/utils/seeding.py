"""Hierarchical seed derivation.

All randomness in a pipeline run flows from one root seed. Components ask for
their own stream by name so adding a component never shifts another's draws.

Usage:

    rng = component_rng(config.dataset.seed, "diffusion.train")
"""

import hashlib

import numpy as np


def _name_key(name: str) -> int:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def component_seed(root_seed: int, name: str) -> int:
    """Derive a reproducible 63-bit seed for a named component.

    Args:
        root_seed (int): The pipeline root seed.
        name (str): Dotted component name, e.g. ``"dataset.lhs"``.

    Returns:
        int: Seed usable with ``numpy.random.default_rng``.

    Raises:
        ValueError: If ``root_seed`` is negative.
    """
    if root_seed < 0:
        raise ValueError(f"Seed must be non-negative, got {root_seed}")
    sequence = np.random.SeedSequence([root_seed, _name_key(name)])
    return int(sequence.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def component_rng(root_seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(component_seed(root_seed, name))
