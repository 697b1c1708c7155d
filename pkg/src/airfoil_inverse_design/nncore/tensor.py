"""Dense tensor with reverse-mode automatic differentiation.

A ``Tensor`` wraps a numpy array. Operations in ``nncore.functional`` build
result tensors through ``make_result``, which records the parents and a
backward rule when gradients are being tracked. ``backward`` walks the graph
in reverse topological order and accumulates gradients into the leaves.

Values default to float32; float64 inputs stay float64 so gradient checks can
run on the same operation code.

Usage:

    w = Tensor(np.zeros((3, 2)), requires_grad=True)
    loss = F.mse(F.linear(x, w, b), target)
    loss.backward()
"""

from __future__ import annotations

import contextlib
import logging
import threading
from collections.abc import Callable, Iterator, Sequence

import numpy as np

from airfoil_inverse_design.utils.exceptions import GraphError, NonFiniteError

logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_grad_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording on the current thread."""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


def _as_array(values) -> np.ndarray:
    array = np.asarray(values)
    if array.dtype not in (np.float32, np.float64):
        array = array.astype(np.float32)
    return array


class Tensor:
    """Array plus gradient slot.

    Attributes:
        values (np.ndarray): Row-major data, float32 or float64.
        grad (np.ndarray | None): Accumulated gradient after ``backward``.
        requires_grad (bool): Whether gradients flow into this tensor.
    """

    __slots__ = ("_backward", "_parents", "grad", "op", "requires_grad", "values")

    def __init__(self, values, requires_grad: bool = False):
        self.values = _as_array(values)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self.op = "leaf"

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def dtype(self) -> np.dtype:
        return self.values.dtype

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    def numpy(self) -> np.ndarray:
        return self.values

    def detach(self) -> Tensor:
        return Tensor(self.values.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __add__(self, other):
        from airfoil_inverse_design.nncore import functional  # noqa: PLC0415

        return functional.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from airfoil_inverse_design.nncore import functional  # noqa: PLC0415

        return functional.sub(self, other)

    def __mul__(self, other):
        from airfoil_inverse_design.nncore import functional  # noqa: PLC0415

        return functional.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from airfoil_inverse_design.nncore import functional  # noqa: PLC0415

        return functional.mul(self, -1.0)


def as_tensor(value, dtype: np.dtype | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    array = np.asarray(value, dtype=dtype) if dtype is not None else _as_array(value)
    return Tensor(array)


def make_result(values: np.ndarray, parents: Sequence[Tensor], backward_fn: BackwardFn, op: str) -> Tensor:
    """Wrap an operation's output and record its backward rule.

    Raises:
        NonFiniteError: If the forward pass produced NaN or infinity.
    """
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"Non-finite values produced by {op}", op=op, shape=list(values.shape))
    result = Tensor(values)
    result.op = op
    if is_grad_enabled() and any(parent.requires_grad for parent in parents):
        result.requires_grad = True
        result._parents = tuple(parents)
        result._backward = backward_fn
    return result


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    state: dict[int, int] = {}
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        key = id(node)
        if expanded:
            state[key] = 2
            order.append(node)
            continue
        status = state.get(key, 0)
        if status == 2:
            continue
        if status == 1:
            raise GraphError("Cycle detected in the computation graph", op=node.op)
        state[key] = 1
        stack.append((node, True))
        for parent in reversed(node._parents):
            parent_status = state.get(id(parent), 0)
            if parent_status == 1:
                raise GraphError("Cycle detected in the computation graph", op=parent.op)
            if parent_status == 0:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every leaf that requires a gradient.

    Raises:
        ValueError: If ``loss`` is not a scalar.
        GraphError: If the graph contains a cycle.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    for node in reversed(_topological_order(loss)):
        grad = grads.pop(id(node), None)
        if grad is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
            continue
        for parent, parent_grad in zip(node._parents, node._backward(grad), strict=True):
            if parent_grad is None or not parent.requires_grad:
                continue
            parent_grad = parent_grad.astype(parent.dtype, copy=False)
            key = id(parent)
            grads[key] = parent_grad if key not in grads else grads[key] + parent_grad
