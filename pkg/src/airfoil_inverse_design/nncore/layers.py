"""Parameterised layers and the ``Module`` container.

Modules register parameters, buffers and child modules as plain attributes;
``named_parameters`` walks them in attribute order, which fixes the order of
optimizer state and checkpoint manifests.
"""

from __future__ import annotations

import math
from collections.abc import Iterator

import numpy as np

from airfoil_inverse_design.nncore import functional as F
from airfoil_inverse_design.nncore.tensor import Tensor
from airfoil_inverse_design.utils.exceptions import ShapeError


class Parameter(Tensor):
    """Trainable leaf tensor."""

    __slots__ = ()

    def __init__(self, values):
        super().__init__(values, requires_grad=True)


def xavier_uniform(shape: tuple[int, ...], fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw in ``+-sqrt(6/(fan_in + fan_out))`` as float32."""
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


class Module:
    """Base class of every network component."""

    def __init__(self):
        self.training = True
        self._buffers: dict[str, np.ndarray] = {}

    def forward(self, *args, **kwargs) -> Tensor:
        raise NotImplementedError

    def __call__(self, *args, **kwargs) -> Tensor:
        return self.forward(*args, **kwargs)

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value

    def _children(self) -> Iterator[tuple[str, Module | Parameter]]:
        for name, value in vars(self).items():
            if isinstance(value, (Module, Parameter)):
                yield name, value
            elif isinstance(value, list):
                for index, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{index}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, value in self._children():
            if isinstance(value, Parameter):
                yield f"{prefix}{name}", value
            else:
                yield from value.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Parameter]:
        return [parameter for _, parameter in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, value in self._buffers.items():
            yield f"{prefix}{name}", value
        for name, value in self._children():
            if isinstance(value, Module):
                yield from value.named_buffers(f"{prefix}{name}.")

    def modules(self) -> Iterator[Module]:
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def train(self, mode: bool = True) -> Module:
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> Module:
        return self.train(False)

    def zero_grad(self) -> None:
        for parameter in self.parameters():
            parameter.zero_grad()

    def astype(self, dtype: np.dtype) -> Module:
        """Cast every parameter and buffer in place (float64 for gradient checks)."""
        for parameter in self.parameters():
            parameter.values = parameter.values.astype(dtype)
        for module in self.modules():
            for name, value in module._buffers.items():
                module._buffers[name] = value.astype(dtype)
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: parameter.values.copy() for name, parameter in self.named_parameters()}
        state.update({name: value.copy() for name, value in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        """Copy arrays into parameters and buffers.

        Raises:
            ValueError: On missing or unexpected entries.
            ShapeError: When an entry's shape differs from the target's.
        """
        targets: dict[str, tuple[Module | None, Parameter | None, str]] = {
            name: (None, parameter, name) for name, parameter in self.named_parameters()
        }
        for module_prefix, module in self._prefixed_modules():
            for buffer_name in module._buffers:
                targets[f"{module_prefix}{buffer_name}"] = (module, None, buffer_name)

        missing = sorted(set(targets) - set(state))
        unexpected = sorted(set(state) - set(targets))
        if missing or unexpected:
            raise ValueError(f"State mismatch: missing {missing}, unexpected {unexpected}")

        for name, (module, parameter, buffer_name) in targets.items():
            value = np.asarray(state[name])
            current = parameter.values if parameter is not None else module._buffers[buffer_name]
            if value.shape != current.shape:
                raise ShapeError(f"{name}: checkpoint shape {value.shape} vs model shape {current.shape}")
            if parameter is not None:
                parameter.values = value.astype(current.dtype).copy()
            else:
                module._buffers[buffer_name] = value.astype(current.dtype).copy()

    def _prefixed_modules(self, prefix: str = "") -> Iterator[tuple[str, Module]]:
        yield prefix, self
        for name, value in self._children():
            if isinstance(value, Module):
                yield from value._prefixed_modules(f"{prefix}{name}.")


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        super().__init__()
        self.weight = Parameter(xavier_uniform((out_features, in_features), in_features, out_features, rng))
        self.bias = Parameter(np.zeros(out_features, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
    ):
        super().__init__()
        area = kernel_size * kernel_size
        self.stride = stride
        self.padding = padding
        self.weight = Parameter(
            xavier_uniform(
                (out_channels, in_channels, kernel_size, kernel_size), in_channels * area, out_channels * area, rng
            )
        )
        self.bias = Parameter(np.zeros(out_channels, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class GroupNorm(Module):
    def __init__(self, groups: int, channels: int):
        super().__init__()
        if channels % groups:
            raise ValueError(f"{channels} channels cannot be split into {groups} groups")
        self.groups = groups
        self.weight = Parameter(np.ones(channels, dtype=np.float32))
        self.bias = Parameter(np.zeros(channels, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        return F.group_norm(x, self.groups, self.weight, self.bias)


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1):
        super().__init__()
        self.momentum = momentum
        self.weight = Parameter(np.ones(channels, dtype=np.float32))
        self.bias = Parameter(np.zeros(channels, dtype=np.float32))
        self.register_buffer("running_mean", np.zeros(channels, dtype=np.float32))
        self.register_buffer("running_var", np.ones(channels, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        return F.batch_norm(
            x,
            self.weight,
            self.bias,
            self._buffers["running_mean"],
            self._buffers["running_var"],
            training=self.training,
            momentum=self.momentum,
        )
