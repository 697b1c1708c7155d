# pylint: disable=missing-function-docstring,redefined-outer-name,protected-access

import numpy as np
import pytest

from airfoil_inverse_design.nncore import functional as F
from airfoil_inverse_design.nncore.checkpoint import pack_state, unpack_state
from airfoil_inverse_design.nncore.gradcheck import gradient_check
from airfoil_inverse_design.nncore.layers import BatchNorm2d, Conv2d, GroupNorm, Linear, Module, Parameter
from airfoil_inverse_design.nncore.optim import Adam, AdamState, adam_step
from airfoil_inverse_design.nncore.tensor import Tensor, no_grad
from airfoil_inverse_design.utils.exceptions import GraphError, NonFiniteError, ShapeError


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def leaf(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def weighted_sum(output: Tensor, weights: np.ndarray) -> Tensor:
    return F.sum_all(F.mul(output, Tensor(weights)))


class TinyNet(Module):
    def __init__(self, rng):
        super().__init__()
        self.conv = Conv2d(1, 2, 3, rng, padding=1)
        self.norm = BatchNorm2d(2)
        self.head = Linear(8, 3, rng)

    def forward(self, x):
        hidden = F.downsample2x(self.norm(self.conv(x)))
        return self.head(F.flatten(hidden))


@pytest.mark.nncore
def test_float_dtypes():
    assert Tensor([1, 2, 3]).dtype == np.float32
    assert Tensor(np.zeros(2)).dtype == np.float64


@pytest.mark.nncore
def test_gradients_accumulate_over_shared_inputs():
    x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    F.sum_all(x * x + x).backward()
    np.testing.assert_allclose(x.grad, 2.0 * x.values + 1.0)


@pytest.mark.nncore
def test_broadcast_gradient_is_reduced(rng):
    x = leaf(rng, 4, 3)
    b = leaf(rng, 3)
    F.sum_all(x + b).backward()
    np.testing.assert_allclose(b.grad, np.full(3, 4.0))


@pytest.mark.nncore
def test_linear_gradient(rng):
    x, w, b = leaf(rng, 5, 4), leaf(rng, 3, 4), leaf(rng, 3)
    target = rng.normal(size=(5, 3))
    assert gradient_check(lambda: F.mse(F.linear(x, w, b), target), [x, w, b]) < 1e-5


@pytest.mark.nncore
def test_strided_padded_conv_gradient(rng):
    x, k, b = leaf(rng, 2, 2, 6, 6), leaf(rng, 3, 2, 3, 3), leaf(rng, 3)
    weights = rng.normal(size=(2, 3, 3, 3))
    assert gradient_check(lambda: weighted_sum(F.conv2d(x, k, b, stride=2, padding=1), weights), [x, k, b]) < 1e-4


@pytest.mark.nncore
def test_group_norm_gradient(rng):
    x, w, b = leaf(rng, 2, 4, 3, 3), leaf(rng, 4), leaf(rng, 4)
    weights = rng.normal(size=(2, 4, 3, 3))
    loss = lambda: weighted_sum(F.group_norm(x, 2, w, b), weights)  # noqa: E731
    assert gradient_check(loss, [x, w, b], h=1e-5) < 1e-4


@pytest.mark.nncore
def test_batch_norm_gradient(rng):
    x, w, b = leaf(rng, 3, 2, 2, 2), leaf(rng, 2), leaf(rng, 2)
    running_mean, running_var = np.zeros(2), np.ones(2)
    weights = rng.normal(size=(3, 2, 2, 2))

    def loss():
        return weighted_sum(F.batch_norm(x, w, b, running_mean, running_var, training=True), weights)

    assert gradient_check(loss, [x, w, b], h=1e-5) < 1e-4


@pytest.mark.nncore
def test_resampling_and_silu_gradients(rng):
    x = leaf(rng, 1, 2, 4, 4)
    weights = rng.normal(size=(1, 2, 4, 4))
    loss = lambda: weighted_sum(F.upsample2x(F.downsample2x(F.silu(x))), weights)  # noqa: E731
    assert gradient_check(loss, [x], h=1e-5) < 1e-4


@pytest.mark.nncore
def test_network_gradient_in_float64(rng):
    net = TinyNet(rng).astype(np.float64)
    x = Tensor(rng.normal(size=(2, 1, 4, 4)))
    target = rng.normal(size=(2, 3))
    assert gradient_check(lambda: F.mse(net(x), target), net.parameters(), h=1e-5) < 1e-4


@pytest.mark.nncore
def test_backward_needs_scalar(rng):
    x = leaf(rng, 3)
    with pytest.raises(ValueError, match="scalar"):
        (x * 2.0).backward()


@pytest.mark.nncore
def test_no_grad_skips_graph(rng):
    x = leaf(rng, 3)
    with no_grad():
        y = x * 2.0
    assert not y.requires_grad
    assert (x * 2.0).requires_grad


@pytest.mark.nncore
def test_non_finite_forward_raises():
    x = Tensor(np.array([1.0, np.inf]))
    with pytest.raises(NonFiniteError):
        F.mul(x, 2.0)


@pytest.mark.nncore
def test_cycle_detected(rng):
    x = leaf(rng, 3)
    y = x * 2.0
    loss = F.sum_all(y)
    x._parents = (loss,)
    with pytest.raises(GraphError):
        loss.backward()


@pytest.mark.nncore
def test_shape_errors(rng):
    with pytest.raises(ShapeError):
        F.linear(leaf(rng, 2, 3), leaf(rng, 4, 5))
    with pytest.raises(ShapeError):
        F.mse(leaf(rng, 2, 3), np.zeros((3, 2)))
    with pytest.raises(ShapeError):
        F.add(leaf(rng, 2, 3), leaf(rng, 4))
    with pytest.raises(ShapeError):
        F.downsample2x(leaf(rng, 1, 1, 3, 3))


@pytest.mark.nncore
def test_adam_first_step_moves_by_learning_rate():
    param = Parameter(np.array([1.0, -2.0], dtype=np.float32))
    state = AdamState()
    adam_step([param], [np.array([0.5, -3.0])], state, lr=0.01)
    np.testing.assert_allclose(param.values, [0.99, -1.99], atol=1e-6)
    assert state.step == 1


@pytest.mark.nncore
def test_adam_rejects_mismatched_gradient():
    param = Parameter(np.zeros(3))
    with pytest.raises(ShapeError):
        adam_step([param], [np.zeros(4)], AdamState(), lr=0.01)


@pytest.mark.nncore
def test_adam_minimises_quadratic():
    param = Parameter(np.array([3.0, -2.0]))
    optimizer = Adam([param], lr=0.05)
    for _ in range(500):
        optimizer.zero_grad()
        F.sum_all(param * param).backward()
        optimizer.step()
    assert np.max(np.abs(param.values)) < 0.05


@pytest.mark.nncore
def test_state_dict_is_a_copy(rng):
    net = TinyNet(rng)
    state = net.state_dict()
    assert "norm.running_mean" in state
    state["head.bias"][:] = 5.0
    assert np.all(net.head.bias.values == 0.0)


@pytest.mark.nncore
def test_load_state_dict_checks_names_and_shapes(rng):
    net = TinyNet(rng)
    state = net.state_dict()
    with pytest.raises(ValueError, match="missing"):
        net.load_state_dict({k: v for k, v in state.items() if k != "head.weight"})
    state["head.bias"] = np.zeros(4)
    with pytest.raises(ShapeError):
        net.load_state_dict(state)


@pytest.mark.nncore
def test_batch_norm_eval_uses_running_statistics(rng):
    norm = BatchNorm2d(2)
    x = Tensor(rng.normal(loc=3.0, size=(4, 2, 2, 2)))
    norm(x)
    assert np.all(norm._buffers["running_mean"] > 0.0)
    norm.eval()
    before = norm._buffers["running_mean"].copy()
    norm(x)
    np.testing.assert_array_equal(norm._buffers["running_mean"], before)


@pytest.mark.nncore
def test_group_norm_needs_divisible_channels():
    with pytest.raises(ValueError):
        GroupNorm(3, 4)


@pytest.mark.nncore
def test_packed_state_round_trips_as_float32(rng):
    state = {"a": rng.normal(size=(2, 3)), "b": np.arange(4, dtype=np.float32)}
    manifest, payload = pack_state(state)
    assert len(payload) == 10 * 4
    restored = unpack_state(manifest, payload)
    assert restored["a"].dtype == np.float32
    np.testing.assert_allclose(restored["a"], state["a"], rtol=1e-6)
    np.testing.assert_array_equal(restored["b"], state["b"])


@pytest.mark.nncore
def test_truncated_payload_rejected(rng):
    manifest, payload = pack_state({"a": rng.normal(size=(4,))})
    with pytest.raises(ValueError, match="truncated"):
        unpack_state(manifest, payload[:-1])
