"""Noise schedule, closed-form forward process and the reverse-step formula.

Steps are 1-based: ``t = 1..T``; ``betas[t - 1]`` is beta_t.

Usage:

    schedule = NoiseSchedule.linear()
    x_t = q_sample(schedule, x0, t=200, eps=noise)
"""

from __future__ import annotations

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import stats

logger = logging.getLogger(__name__)


class NoiseSchedule(BaseModel):
    """Variance schedule of the forward process.

    Attributes:
        betas (np.ndarray): ``T`` noise variances, strictly increasing in (0, 1).
        beta_start (float): First beta, kept for checkpoint headers.
        beta_end (float): Last beta, kept for checkpoint headers.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    betas: np.ndarray
    beta_start: float = Field(default=1e-4)
    beta_end: float = Field(default=0.02)

    @field_validator("betas", mode="before")
    @classmethod
    def _as_float_array(cls, value) -> np.ndarray:
        return np.asarray(value, dtype=np.float64)

    @model_validator(mode="after")
    def _check_betas(self) -> NoiseSchedule:
        if self.betas.ndim != 1 or self.betas.size < 1:
            raise ValueError(f"Betas must be a non-empty 1-D array, got shape {self.betas.shape}")
        if np.any(self.betas <= 0) or np.any(self.betas >= 1):
            raise ValueError("Betas must lie strictly within (0, 1)")
        if np.any(np.diff(self.betas) <= 0):
            raise ValueError("Betas must increase strictly")
        return self

    @classmethod
    def linear(cls, steps: int = 400, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
        if steps < 2:
            raise ValueError(f"Schedule needs at least 2 steps, got {steps}")
        return cls(betas=np.linspace(beta_start, beta_end, steps), beta_start=beta_start, beta_end=beta_end)

    @property
    def steps(self) -> int:
        return int(self.betas.size)

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        return np.cumprod(self.alphas)

    def check_step(self, t: int | np.ndarray) -> np.ndarray:
        """Validate 1-based steps.

        Raises:
            ValueError: If any step lies outside ``1..T``.
        """
        steps = np.asarray(t)
        if np.any(steps < 1) or np.any(steps > self.steps):
            raise ValueError(f"Diffusion step must be in [1, {self.steps}], got {t}")
        return steps.astype(np.int64)

    def alpha_bar(self, t: int | np.ndarray) -> np.ndarray:
        return self.alpha_bars[self.check_step(t) - 1]


def _per_item(values: np.ndarray, ndim: int) -> np.ndarray:
    return np.asarray(values).reshape((-1,) + (1,) * (ndim - 1)) if np.ndim(values) else np.asarray(values)


def q_sample(schedule: NoiseSchedule, x0: np.ndarray, t: int | np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Draw ``x_t`` directly from ``x0``: ``sqrt(abar_t) x0 + sqrt(1 - abar_t) eps``.

    ``t`` may be a scalar or one step per leading-axis item.

    Raises:
        ValueError: On a step outside ``1..T`` or mismatched shapes.
    """
    x0 = np.asarray(x0)
    eps = np.asarray(eps)
    if x0.shape != eps.shape:
        raise ValueError(f"Noise shape {eps.shape} does not match x0 shape {x0.shape}")
    alpha_bar = _per_item(schedule.alpha_bar(t), x0.ndim)
    return (np.sqrt(alpha_bar) * x0 + np.sqrt(1.0 - alpha_bar) * eps).astype(x0.dtype)


def posterior_step(
    schedule: NoiseSchedule,
    x_t: np.ndarray,
    t: int,
    eps_hat: np.ndarray,
    z: np.ndarray | None = None,
) -> np.ndarray:
    """One reverse step ``x_t -> x_{t-1}`` with ``sigma_t^2 = beta_t``.

    ``mu = (x_t - beta_t/sqrt(1 - abar_t) eps_hat)/sqrt(alpha_t)``; no noise is
    added at ``t = 1`` whatever ``z`` holds.
    """
    step = int(schedule.check_step(t))
    beta = schedule.betas[step - 1]
    alpha = schedule.alphas[step - 1]
    alpha_bar = schedule.alpha_bars[step - 1]
    mean = (x_t - beta / np.sqrt(1.0 - alpha_bar) * eps_hat) / np.sqrt(alpha)
    if step == 1 or z is None:
        return mean.astype(x_t.dtype)
    return (mean + np.sqrt(beta) * z).astype(x_t.dtype)


def iterated_forward_sample(schedule: NoiseSchedule, x0: np.ndarray, t: int, draws: int, rng: np.random.Generator):
    """``draws`` samples of ``x_t`` by applying the one-step kernel ``t`` times."""
    step = int(schedule.check_step(t))
    x = np.broadcast_to(np.asarray(x0, dtype=np.float64), (draws, *np.shape(x0))).copy()
    for beta in schedule.betas[:step]:
        x = np.sqrt(1.0 - beta) * x + np.sqrt(beta) * rng.standard_normal(x.shape)
    return x


class ForwardCheckResult(BaseModel):
    """Agreement between the iterated and closed-form forward processes."""

    t: int
    draws: int
    cells: int = Field(description="Cells compared; each contributes a mean and a variance z-score.")
    max_mean_z: float = Field(description="Largest per-cell two-sample z-score of the means.")
    max_variance_z: float = Field(description="Largest per-cell z-score of the variances.")
    ks_distance: float = Field(description="Two-sample KS distance of the pooled cells.")

    def z_limit(self, standard_errors: float = 3.0) -> float:
        """Bound on the largest per-cell z-score.

        The one-sided tail beyond ``standard_errors`` is shared family-wise
        across the ``2 * cells`` mean and variance scores.
        """
        return float(stats.norm.isf(stats.norm.sf(standard_errors) / (2 * self.cells)))

    def passed(self, standard_errors: float = 3.0, ks_limit: float = 0.02) -> bool:
        limit = self.z_limit(standard_errors)
        return self.max_mean_z < limit and self.max_variance_z < limit and self.ks_distance < ks_limit


def iterated_forward_equivalence_check(
    schedule: NoiseSchedule,
    x0: np.ndarray,
    t: int,
    seed: int,
    draws: int = 10_000,
) -> ForwardCheckResult:
    """Compare iterated one-step noising with the closed form at step ``t``.

    Args:
        schedule (NoiseSchedule): Schedule under test.
        x0 (np.ndarray): Clean sample (any shape; small keeps this fast).
        t (int): Step to compare at.
        seed (int): Seed of both draw streams.
        draws (int): Samples per procedure.

    Returns:
        ForwardCheckResult: Per-cell z-scores and the pooled KS distance.
    """
    rng = np.random.default_rng(seed)
    x0 = np.asarray(x0, dtype=np.float64)
    iterated = iterated_forward_sample(schedule, x0, t, draws, rng)
    closed = q_sample(
        schedule, np.broadcast_to(x0, iterated.shape), np.full(draws, t), rng.standard_normal(iterated.shape)
    )

    mean_a, mean_b = iterated.mean(axis=0), closed.mean(axis=0)
    var_a, var_b = iterated.var(axis=0, ddof=1), closed.var(axis=0, ddof=1)
    mean_z = np.abs(mean_a - mean_b) / np.sqrt((var_a + var_b) / draws)
    var_se = np.sqrt(2.0 / (draws - 1) * (var_a**2 + var_b**2))
    var_z = np.abs(var_a - var_b) / var_se
    ks = stats.ks_2samp(iterated.ravel(), closed.ravel())

    result = ForwardCheckResult(
        t=t,
        draws=draws,
        cells=int(x0.size),
        max_mean_z=float(np.max(mean_z)),
        max_variance_z=float(np.max(var_z)),
        ks_distance=float(ks.statistic),
    )
    logger.debug("Forward equivalence at t=%d: %s", t, result)
    return result
