"""Differentiable operations on ``Tensor``.

Every operation computes its forward value with numpy and registers a
backward rule through ``make_result``. Reductions accumulate in float64.
Shape mismatches raise ``ShapeError`` naming both shapes.
"""

from __future__ import annotations

from typing import Literal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from airfoil_inverse_design.nncore.tensor import Tensor, as_tensor, make_result
from airfoil_inverse_design.utils.exceptions import ShapeError

Activation = Literal["relu", "silu"]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}", left=a.shape, right=b.shape) from exc


def _coerce(a, b) -> tuple[Tensor, Tensor]:
    left = as_tensor(a)
    right = as_tensor(b, dtype=left.dtype) if not isinstance(b, Tensor) else b
    if not isinstance(a, Tensor):
        left = as_tensor(a, dtype=right.dtype)
    return left, right


def add(a, b) -> Tensor:
    left, right = _coerce(a, b)
    _broadcast_shape(left, right, "add")

    def grad_fn(grad: np.ndarray):
        return _unbroadcast(grad, left.shape), _unbroadcast(grad, right.shape)

    return make_result(left.values + right.values, (left, right), grad_fn, "add")


def sub(a, b) -> Tensor:
    left, right = _coerce(a, b)
    _broadcast_shape(left, right, "sub")

    def grad_fn(grad: np.ndarray):
        return _unbroadcast(grad, left.shape), _unbroadcast(-grad, right.shape)

    return make_result(left.values - right.values, (left, right), grad_fn, "sub")


def mul(a, b) -> Tensor:
    left, right = _coerce(a, b)
    _broadcast_shape(left, right, "mul")

    def grad_fn(grad: np.ndarray):
        return _unbroadcast(grad * right.values, left.shape), _unbroadcast(grad * left.values, right.shape)

    return make_result(left.values * right.values, (left, right), grad_fn, "mul")


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        values = a.values.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}", source=a.shape, target=shape) from exc

    def grad_fn(grad: np.ndarray):
        return (grad.reshape(a.shape),)

    return make_result(values, (a,), grad_fn, "reshape")


def flatten(a: Tensor) -> Tensor:
    """Collapse every axis after the batch axis."""
    return reshape(a, (a.shape[0], -1))


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    reference = tensors[0].shape
    for tensor in tensors[1:]:
        others = [extent for index, extent in enumerate(tensor.shape) if index != axis % tensor.ndim]
        expected = [extent for index, extent in enumerate(reference) if index != axis % len(reference)]
        if others != expected:
            raise ShapeError(f"concat: {reference} and {tensor.shape} differ off axis {axis}")
    splits = np.cumsum([tensor.shape[axis] for tensor in tensors])[:-1]

    def grad_fn(grad: np.ndarray):
        return tuple(np.split(grad, splits, axis=axis))

    return make_result(np.concatenate([t.values for t in tensors], axis=axis), tuple(tensors), grad_fn, "concat")


def sum_all(a: Tensor) -> Tensor:
    value = np.asarray(np.sum(a.values, dtype=np.float64), dtype=a.dtype)

    def grad_fn(grad: np.ndarray):
        return (np.broadcast_to(grad, a.shape).astype(a.dtype),)

    return make_result(value, (a,), grad_fn, "sum")


def mean_all(a: Tensor) -> Tensor:
    value = np.asarray(np.mean(a.values, dtype=np.float64), dtype=a.dtype)
    count = a.size

    def grad_fn(grad: np.ndarray):
        return (np.broadcast_to(grad / count, a.shape).astype(a.dtype),)

    return make_result(value, (a,), grad_fn, "mean")


def mse(prediction: Tensor, target) -> Tensor:
    """Mean squared error over every element."""
    goal = as_tensor(target, dtype=prediction.dtype)
    if goal.shape != prediction.shape:
        raise ShapeError(f"mse: prediction {prediction.shape} vs target {goal.shape}")
    diff = sub(prediction, goal)
    return mean_all(mul(diff, diff))


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` of shape ``(out, in)``."""
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {weight.shape}")
    values = x.values @ weight.values.T
    parents: tuple[Tensor, ...] = (x, weight)
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise ShapeError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
        values = values + bias.values
        parents = (x, weight, bias)

    def grad_fn(grad: np.ndarray):
        grads = [grad @ weight.values, grad.reshape(-1, grad.shape[-1]).T @ x.values.reshape(-1, x.shape[-1])]
        if bias is not None:
            grads.append(grad.reshape(-1, grad.shape[-1]).sum(axis=0))
        return tuple(grads)

    return make_result(values, parents, grad_fn, "linear")


def relu(x: Tensor) -> Tensor:
    positive = x.values > 0

    def grad_fn(grad: np.ndarray):
        return (grad * positive,)

    return make_result(np.where(positive, x.values, 0.0).astype(x.dtype), (x,), grad_fn, "relu")


def silu(x: Tensor) -> Tensor:
    gate = expit(x.values)

    def grad_fn(grad: np.ndarray):
        return (grad * (gate * (1.0 + x.values * (1.0 - gate))),)

    return make_result(x.values * gate, (x,), grad_fn, "silu")


def activation(x: Tensor, kind: Activation) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "silu":
        return silu(x)
    raise ValueError(f"Unknown activation {kind!r}")


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation over ``(n, c, h, w)`` input with ``(o, c, k, k)`` kernels."""
    if x.ndim != 4 or kernel.ndim != 4 or x.shape[1] != kernel.shape[1]:
        raise ShapeError(f"conv2d: input {x.shape} does not match kernel {kernel.shape}")
    if stride < 1 or padding < 0:
        raise ValueError(f"conv2d: invalid stride {stride} / padding {padding}")
    size = kernel.shape[2]
    padded = np.pad(x.values, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    if padded.shape[2] < size or padded.shape[3] < size:
        raise ShapeError(f"conv2d: kernel {kernel.shape} larger than padded input {padded.shape}")
    windows = sliding_window_view(padded, (size, size), axis=(2, 3))[:, :, ::stride, ::stride]
    out_h, out_w = windows.shape[2], windows.shape[3]
    values = np.tensordot(windows, kernel.values, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    parents: tuple[Tensor, ...] = (x, kernel)
    if bias is not None:
        values = values + bias.values[None, :, None, None]
        parents = (x, kernel, bias)

    def grad_fn(grad: np.ndarray):
        kernel_grad = np.tensordot(grad, windows, axes=([0, 2, 3], [0, 2, 3]))
        window_grad = np.tensordot(grad, kernel.values, axes=([1], [0]))
        padded_grad = np.zeros_like(padded)
        for row in range(size):
            for col in range(size):
                padded_grad[:, :, row : row + stride * out_h : stride, col : col + stride * out_w : stride] += (
                    window_grad[:, :, :, :, row, col].transpose(0, 3, 1, 2)
                )
        height, width = x.shape[2], x.shape[3]
        input_grad = padded_grad[:, :, padding : padding + height, padding : padding + width]
        grads = [input_grad, kernel_grad]
        if bias is not None:
            grads.append(grad.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return make_result(np.ascontiguousarray(values), parents, grad_fn, "conv2d")


def _normalize_backward(grad_hat: np.ndarray, x_hat: np.ndarray, inv_std: np.ndarray, axes: tuple[int, ...]):
    mean_grad = grad_hat.mean(axis=axes, keepdims=True)
    mean_proj = (grad_hat * x_hat).mean(axis=axes, keepdims=True)
    return inv_std * (grad_hat - mean_grad - x_hat * mean_proj)


def group_norm(x: Tensor, groups: int, weight: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise each group of channels per sample, then scale and shift per channel."""
    n, channels = x.shape[0], x.shape[1]
    if channels % groups:
        raise ShapeError(f"group_norm: {channels} channels not divisible into {groups} groups")
    grouped = x.values.reshape(n, groups, -1).astype(np.float64)
    mean = grouped.mean(axis=2, keepdims=True)
    inv_std = 1.0 / np.sqrt(grouped.var(axis=2, keepdims=True) + eps)
    x_hat = (grouped - mean) * inv_std
    x_hat_full = x_hat.reshape(x.shape)
    scale_shape = (1, channels) + (1,) * (x.ndim - 2)
    values = x_hat_full * weight.values.reshape(scale_shape) + bias.values.reshape(scale_shape)

    def grad_fn(grad: np.ndarray):
        grad64 = grad.astype(np.float64)
        reduce_axes = (0, *range(2, x.ndim))
        weight_grad = (grad64 * x_hat_full).sum(axis=reduce_axes)
        bias_grad = grad64.sum(axis=reduce_axes)
        grad_hat = (grad64 * weight.values.reshape(scale_shape)).reshape(n, groups, -1)
        input_grad = _normalize_backward(grad_hat, x_hat, inv_std, (2,)).reshape(x.shape)
        return input_grad, weight_grad, bias_grad

    return make_result(values.astype(x.dtype), (x, weight, bias), grad_fn, "group_norm")


def batch_norm(
    x: Tensor,
    weight: Tensor,
    bias: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalisation over batch and spatial axes.

    In training mode batch statistics are used and the running buffers are
    updated in place; in evaluation mode the running buffers are used.
    """
    channels = x.shape[1]
    if weight.shape != (channels,):
        raise ShapeError(f"batch_norm: input {x.shape} does not match weight {weight.shape}")
    axes = (0, *range(2, x.ndim))
    stat_shape = (1, channels) + (1,) * (x.ndim - 2)
    data = x.values.astype(np.float64)
    if training:
        mean = data.mean(axis=axes, keepdims=True)
        var = data.var(axis=axes, keepdims=True)
        count = data.size // channels
        unbiased = var.reshape(channels) * count / max(count - 1, 1)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean.reshape(channels)
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    else:
        mean = running_mean.reshape(stat_shape).astype(np.float64)
        var = running_var.reshape(stat_shape).astype(np.float64)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (data - mean) * inv_std
    values = x_hat * weight.values.reshape(stat_shape) + bias.values.reshape(stat_shape)

    def grad_fn(grad: np.ndarray):
        grad64 = grad.astype(np.float64)
        weight_grad = (grad64 * x_hat).sum(axis=axes)
        bias_grad = grad64.sum(axis=axes)
        grad_hat = grad64 * weight.values.reshape(stat_shape)
        if training:
            input_grad = _normalize_backward(grad_hat, x_hat, inv_std, axes)
        else:
            input_grad = grad_hat * inv_std
        return input_grad, weight_grad, bias_grad

    return make_result(values.astype(x.dtype), (x, weight, bias), grad_fn, "batch_norm")


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbour doubling of both spatial axes."""
    values = x.values.repeat(2, axis=2).repeat(2, axis=3)

    def grad_fn(grad: np.ndarray):
        n, c, h, w = x.shape
        return (grad.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return make_result(values, (x,), grad_fn, "upsample2x")


def downsample2x(x: Tensor) -> Tensor:
    """2x2 average pooling."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"downsample2x: spatial extent {x.shape} is not even")
    values = x.values.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def grad_fn(grad: np.ndarray):
        return ((grad / 4.0).repeat(2, axis=2).repeat(2, axis=3),)

    return make_result(values, (x,), grad_fn, "downsample2x")
