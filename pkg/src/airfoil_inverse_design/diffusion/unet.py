"""Noise-prediction UNet with additive time and condition embeddings.

Three resolution levels go down (residual block, then 2x2 average pooling)
and three come back up (nearest upsampling, skip concatenation, residual
block). The sinusoidal time embedding passes through a two-layer perceptron;
the six normalised features pass through one linear layer and are added to
it. Dropping the condition multiplies its embedding by zero, so the null token
is the all-zeros embedding.
"""

from __future__ import annotations

import math

import numpy as np
from pydantic import BaseModel, Field, model_validator

from airfoil_inverse_design.encoding.sdf import check_resolution
from airfoil_inverse_design.nncore import functional as F
from airfoil_inverse_design.nncore.layers import Conv2d, GroupNorm, Linear, Module
from airfoil_inverse_design.nncore.tensor import Tensor
from airfoil_inverse_design.utils.constants import FEATURE_COUNT
from airfoil_inverse_design.utils.exceptions import ShapeError

ARCH_NAME = "denoiser-unet"


class DenoiserConfig(BaseModel):
    resolution: int = Field(default=64, description="Grid cells per axis; a multiple of 8.")
    base_channels: int = Field(default=32, gt=0)
    channel_mults: tuple[int, int, int] = Field(default=(1, 2, 4))
    time_dim: int = Field(default=64, gt=0, description="Sinusoidal embedding width; even.")
    groups: int = Field(default=8, gt=0)
    condition_dim: int = Field(default=FEATURE_COUNT, gt=0)

    @model_validator(mode="after")
    def _check_sizes(self) -> DenoiserConfig:
        check_resolution(self.resolution)
        if self.time_dim % 2:
            raise ValueError(f"time_dim must be even, got {self.time_dim}")
        if self.base_channels % self.groups:
            raise ValueError(f"base_channels {self.base_channels} not divisible by groups {self.groups}")
        return self

    @property
    def widths(self) -> list[int]:
        return [self.base_channels * mult for mult in self.channel_mults]


def sinusoidal_embedding(t: np.ndarray, dim: int, dtype: np.dtype = np.float32) -> np.ndarray:
    """``[sin(t f_k), cos(t f_k)]`` with ``f_k = 10000^(-k/(dim/2))``."""
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    args = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate((np.sin(args), np.cos(args)), axis=1).astype(dtype)


class ResidualBlock(Module):
    def __init__(self, in_channels: int, out_channels: int, emb_dim: int, groups: int, rng: np.random.Generator):
        super().__init__()
        self.out_channels = out_channels
        self.norm1 = GroupNorm(groups, in_channels)
        self.conv1 = Conv2d(in_channels, out_channels, 3, rng, padding=1)
        self.emb_proj = Linear(emb_dim, out_channels, rng)
        self.norm2 = GroupNorm(groups, out_channels)
        self.conv2 = Conv2d(out_channels, out_channels, 3, rng, padding=1)
        self.skip = Conv2d(in_channels, out_channels, 1, rng) if in_channels != out_channels else None

    def forward(self, x: Tensor, emb: Tensor) -> Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        shift = F.reshape(self.emb_proj(F.silu(emb)), (x.shape[0], self.out_channels, 1, 1))
        h = F.add(h, shift)
        h = self.conv2(F.silu(self.norm2(h)))
        residual = x if self.skip is None else self.skip(x)
        return F.add(h, residual)


class Denoiser(Module):
    """Noise predictor ``eps_theta(x_t, t, y)``.

    Args:
        config (DenoiserConfig): Architecture sizes.
        rng (np.random.Generator): Initialisation stream.
    """

    def __init__(self, config: DenoiserConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        widths = config.widths
        emb = config.time_dim
        self.time_in = Linear(emb, emb, rng)
        self.time_out = Linear(emb, emb, rng)
        self.condition = Linear(config.condition_dim, emb, rng)
        self.stem = Conv2d(1, widths[0], 3, rng, padding=1)

        self.down = []
        channels = widths[0]
        for width in widths:
            self.down.append(ResidualBlock(channels, width, emb, config.groups, rng))
            channels = width
        self.middle = ResidualBlock(channels, channels, emb, config.groups, rng)
        self.up = []
        for width in reversed(widths):
            self.up.append(ResidualBlock(channels + width, width, emb, config.groups, rng))
            channels = width
        self.head_norm = GroupNorm(config.groups, channels)
        self.head = Conv2d(channels, 1, 3, rng, padding=1)

    def embed(self, t: np.ndarray, cond: np.ndarray | None, keep: np.ndarray | None, dtype: np.dtype) -> Tensor:
        steps = np.atleast_1d(np.asarray(t))
        time = Tensor(sinusoidal_embedding(steps, self.config.time_dim, dtype))
        emb = self.time_out(F.silu(self.time_in(time)))
        if cond is None:
            return emb
        cond = np.asarray(cond, dtype=dtype).reshape(steps.size, self.config.condition_dim)
        mask = np.ones(steps.size, dtype=dtype) if keep is None else np.asarray(keep, dtype=dtype)
        cond_emb = F.mul(self.condition(Tensor(cond)), mask[:, None])
        return F.add(emb, cond_emb)

    def forward(
        self,
        x: Tensor,
        t: np.ndarray,
        cond: np.ndarray | None = None,
        keep: np.ndarray | None = None,
    ) -> Tensor:
        """Predict the noise in ``x``.

        Args:
            x (Tensor): ``(n, 1, R, R)`` noisy grids.
            t (np.ndarray): ``(n,)`` steps.
            cond (np.ndarray | None): ``(n, 6)`` normalised features; ``None`` means
                every item gets the null token.
            keep (np.ndarray | None): ``(n,)`` flags; 0 replaces the condition by the null token.

        Returns:
            Tensor: ``(n, 1, R, R)`` noise prediction.

        Raises:
            ShapeError: If ``x`` does not match the configured resolution.
        """
        expected = (1, self.config.resolution, self.config.resolution)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise ShapeError(f"Denoiser expects (n, *{expected}) input, got {x.shape}")
        emb = self.embed(t, cond, keep, x.dtype)

        h = self.stem(x)
        skips = []
        for block in self.down:
            h = block(h, emb)
            skips.append(h)
            h = F.downsample2x(h)
        h = self.middle(h, emb)
        for block in self.up:
            h = F.upsample2x(h)
            h = block(F.concat([h, skips.pop()], axis=1), emb)
        return self.head(F.silu(self.head_norm(h)))
