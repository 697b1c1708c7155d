"""Adam optimizer with bias correction."""

from __future__ import annotations

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from airfoil_inverse_design.nncore.layers import Parameter
from airfoil_inverse_design.utils.exceptions import ShapeError


class AdamState(BaseModel):
    """Per-parameter moments and the shared step counter."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    m: list[np.ndarray] = Field(default_factory=list)
    v: list[np.ndarray] = Field(default_factory=list)
    step: int = Field(default=0, ge=0)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_parameters(cls, params: list[Parameter], **hyper) -> AdamState:
        return cls(
            m=[np.zeros_like(p.values, dtype=np.float64) for p in params],
            v=[np.zeros_like(p.values, dtype=np.float64) for p in params],
            **hyper,
        )


def adam_step(params: list[Parameter], grads: list[np.ndarray | None], state: AdamState, lr: float) -> list[Parameter]:
    """Apply one Adam update in place.

    A ``None`` gradient counts as zero.

    Args:
        params (list[Parameter]): Parameters to update.
        grads (list[np.ndarray | None]): Gradients, one per parameter.
        state (AdamState): Moments; created lazily when empty.
        lr (float): Learning rate.

    Returns:
        list[Parameter]: The updated parameters.

    Raises:
        ShapeError: If a gradient or moment does not match its parameter.
    """
    if len(grads) != len(params):
        raise ShapeError(f"{len(grads)} gradients for {len(params)} parameters")
    if not state.m:
        fresh = AdamState.for_parameters(params)
        state.m, state.v = fresh.m, fresh.v
    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for param, grad, m, v in zip(params, grads, state.m, state.v, strict=True):
        g = np.zeros_like(m) if grad is None else np.asarray(grad, dtype=np.float64)
        if g.shape != param.shape or m.shape != param.shape:
            raise ShapeError(f"Adam: gradient {g.shape} / moment {m.shape} vs parameter {param.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        param.values = (param.values - update).astype(param.dtype)
    return params


class Adam:
    """Stateful wrapper binding a parameter list to one ``AdamState``."""

    def __init__(self, params: list[Parameter], lr: float = 1e-4):
        self.params = params
        self.lr = lr
        self.state = AdamState.for_parameters(params)

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state, self.lr)

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()
