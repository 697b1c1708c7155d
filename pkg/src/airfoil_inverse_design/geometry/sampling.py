"""Latin hypercube sampling of CST coefficient boxes around a baseline airfoil."""

import logging

import numpy as np
from scipy.stats import qmc

from airfoil_inverse_design.geometry.cst import CstParams

logger = logging.getLogger(__name__)


def coefficient_bounds(baseline: CstParams, fraction: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-coefficient sampling box ``a*(1 -/+ fraction)``, endpoints ordered for negative ``a``."""
    centre = baseline.as_vector()
    first, second = centre * (1.0 - fraction), centre * (1.0 + fraction)
    return np.minimum(first, second), np.maximum(first, second)


def sample_dataset(baseline: CstParams, fraction: float, n: int, seed: int) -> list[CstParams]:
    """Draw ``n`` airfoils by Latin hypercube over the baseline's coefficient box.

    Samples sit at stratum midpoints with one seeded permutation per
    dimension, so every dimension has exactly one sample per stratum.
    Trailing-edge ordinates stay at their baseline values.

    Args:
        baseline (CstParams): Centre of the box.
        fraction (float): Relative half-width of the box; must be positive.
        n (int): Number of samples; at least 1.
        seed (int): Seed of the permutation stream.

    Returns:
        list[CstParams]: ``n`` parameter sets.

    Raises:
        ValueError: If ``fraction <= 0`` or ``n < 1``.
    """
    if fraction <= 0:
        raise ValueError(f"Sampling fraction must be positive, got {fraction}")
    if n < 1:
        raise ValueError(f"Sample count must be >= 1, got {n}")

    low, high = coefficient_bounds(baseline, fraction)
    sampler = qmc.LatinHypercube(d=low.size, scramble=False, seed=np.random.default_rng(seed))
    unit = sampler.random(n)
    values = low + unit * (high - low)
    logger.debug("Sampled %d airfoils over %d coefficients (fraction %.3f)", n, low.size, fraction)

    return [CstParams.from_vector(row, baseline.zte_upper, baseline.zte_lower) for row in values]
