"""Central-difference gradient verification."""

from __future__ import annotations

import logging
from collections.abc import Callable

import numpy as np

from airfoil_inverse_design.nncore.tensor import Tensor

logger = logging.getLogger(__name__)


def numerical_gradient(loss_fn: Callable[[], Tensor], tensor: Tensor, h: float = 1e-3) -> np.ndarray:
    """Central differences of ``loss_fn()`` with respect to every element of ``tensor``."""
    grad = np.zeros(tensor.shape, dtype=np.float64)
    flat = tensor.values.reshape(-1)
    out = grad.reshape(-1)
    for index in range(flat.size):
        original = flat[index]
        flat[index] = original + h
        plus = float(loss_fn().values)
        flat[index] = original - h
        minus = float(loss_fn().values)
        flat[index] = original
        out[index] = (plus - minus) / (2.0 * h)
    return grad


def gradient_check(loss_fn: Callable[[], Tensor], tensors: list[Tensor], h: float = 1e-3) -> float:
    """Largest norm-wise relative error between analytic and numerical gradients.

    Each tensor's error is ``|g_a - g_n| / max(|g_a| + |g_n|, 1e-12)``.
    Run in float64; float32 round-off swamps the tolerance.

    Args:
        loss_fn (Callable[[], Tensor]): Rebuilds the scalar loss from the current values.
        tensors (list[Tensor]): Tensors to check; must require gradients.
        h (float): Finite-difference step.

    Returns:
        float: Worst relative error over ``tensors``.
    """
    for tensor in tensors:
        tensor.zero_grad()
    loss_fn().backward()
    worst = 0.0
    for tensor in tensors:
        analytic = np.zeros(tensor.shape) if tensor.grad is None else tensor.grad.astype(np.float64)
        numeric = numerical_gradient(loss_fn, tensor, h)
        scale = max(float(np.linalg.norm(analytic) + np.linalg.norm(numeric)), 1e-12)
        error = float(np.linalg.norm(analytic - numeric)) / scale
        logger.debug("Gradient check %s: relative error %.3e", tensor, error)
        worst = max(worst, error)
    return worst
