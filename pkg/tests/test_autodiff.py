"""
Test the tape, its primitive ops, masked SGD and Hessian-vector products
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synprune.autodiff import ComputationTape, Tensor, backward, grad
from synprune.autodiff import ops
from synprune.autodiff.hvp import hvp, hvp_at
from synprune.autodiff.optim import sgd_step
from synprune.core import DatasetObjective, QuadraticObjective
from synprune.exceptions import ConfigError, NumericFailureError, UsageError
from synprune.models.architecture import convnet3, linear, mlp
from synprune.models.network import batch_loss, forward, loss_and_grad
from synprune.models.state import init_state
from synprune.pruning.mask import SparsityMask


def finite_difference(fn, theta, eps=1e-6):
    theta = np.asarray(theta, dtype=np.float64)
    result = np.zeros_like(theta)
    for i in range(theta.size):
        step = np.zeros_like(theta)
        step[i] = eps
        result[i] = (fn(theta + step) - fn(theta - step)) / (2 * eps)
    return result


small_floats = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False, allow_infinity=False)


class TestTape:
    """Gradients against closed forms"""

    @settings(max_examples=30, deadline=None)
    @given(st.lists(small_floats, min_size=1, max_size=6), st.data())
    def test_exp_times_constant(self, values, data):
        """d/da sum(exp(a) * b) = exp(a) * b"""
        a = np.array(values)
        b = np.array(data.draw(st.lists(small_floats, min_size=a.size, max_size=a.size)))
        tape = ComputationTape()
        x = tape.watch(a)
        out = ops.total(ops.mul(ops.exp(x), Tensor(b)))
        (g,) = grad(out, [x])
        np.testing.assert_allclose(g.values, np.exp(a) * b, rtol=1e-10, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(small_floats, min_size=2, max_size=6))
    def test_matmul_and_broadcast_add(self, values):
        """Gradient of sum((x @ W) + bias) w.r.t. W matches finite differences"""
        x = np.array(values).reshape(1, -1)
        weight = np.linspace(-1.0, 1.0, x.size * 3)

        def f(w):
            return float(np.sum(x @ w.reshape(x.size, 3) + 0.5))

        tape = ComputationTape()
        w = tape.watch(weight)
        out = ops.total(ops.add(ops.matmul(Tensor(x), ops.reshape(w, (x.size, 3))), Tensor(np.full(3, 0.5))))
        (g,) = grad(out, [w])
        np.testing.assert_allclose(g.values, finite_difference(f, weight), rtol=1e-6, atol=1e-8)

    def test_second_order_through_create_graph(self):
        """grad of <grad(sum x^3), v> is 6 x v"""
        a = np.array([0.5, -1.0, 2.0])
        v = np.array([1.0, 2.0, -1.0])
        tape = ComputationTape()
        x = tape.watch(a)
        out = ops.total(ops.mul(ops.mul(x, x), x))
        (g,) = grad(out, [x], create_graph=True)
        np.testing.assert_allclose(g.values, 3 * a ** 2)
        (h,) = grad(ops.total(ops.mul(g, Tensor(v))), [x])
        np.testing.assert_allclose(h.values, 6 * a * v)

    def test_consumed_tape_rejects_second_pass(self):
        tape = ComputationTape()
        x = tape.watch(np.ones(2))
        out = ops.total(ops.mul(x, x))
        grad(out, [x])
        with pytest.raises(UsageError):
            grad(out, [x])
        with pytest.raises(UsageError):
            tape.watch(np.ones(2))

    def test_non_scalar_output_rejected(self):
        tape = ComputationTape()
        x = tape.watch(np.ones(3))
        with pytest.raises(UsageError):
            grad(ops.mul(x, x), [x])

    def test_unused_input_gets_zeros(self):
        tape = ComputationTape()
        x = tape.watch(np.ones(2))
        y = tape.watch(np.ones(4))
        (gy,) = grad(ops.total(x), [y])
        assert np.array_equal(gy.values, np.zeros(4))

    def test_cross_entropy_sum_is_mean_times_count(self):
        logits = np.array([[2.0, -1.0], [0.1, 0.3], [-0.5, 0.5]])
        labels = np.array([0, 1, 1])
        mean = ops.cross_entropy(Tensor(logits), labels).item()
        total = ops.cross_entropy(Tensor(logits), labels, reduction="sum").item()
        assert total == pytest.approx(3 * mean)


class TestNetworkGradients:
    """Parameter gradients of whole networks against finite differences"""

    @pytest.mark.parametrize("arch", [
        linear(3, 2),
        mlp(3, 3, hidden=(4,)),
        convnet3((1, 4, 4), 2, width=2, depth=1),
    ], ids=["linear", "mlp", "convnet"])
    def test_loss_gradient(self, arch):
        """Backward pass matches central differences for every parameter"""
        rng = np.random.default_rng(0)
        batch = rng.uniform(0, 1, size=(5, *arch.input_shape))
        labels = rng.integers(0, arch.class_count, size=5)
        theta = init_state(arch, seed=1).params.astype(np.float64)

        _, analytic = loss_and_grad(arch, theta, batch, labels)
        numeric = finite_difference(lambda t: batch_loss(arch, t, batch, labels), theta)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)

    @pytest.mark.slow
    @settings(max_examples=1000, deadline=None)
    @given(st.integers(min_value=0, max_value=2 ** 32 - 1), st.sampled_from(["linear", "mlp"]))
    def test_random_points_match_finite_differences(self, seed, kind):
        arch = linear(3, 2) if kind == "linear" else mlp(3, 3, hidden=(4,))
        rng = np.random.default_rng(seed)
        batch = rng.uniform(0, 1, size=(5, 3))
        labels = rng.integers(0, arch.class_count, size=5)
        theta = rng.normal(0.0, 0.5, size=arch.param_count)

        _, analytic = loss_and_grad(arch, theta, batch, labels)
        numeric = finite_difference(lambda t: batch_loss(arch, t, batch, labels), theta)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)

    def test_uniform_logits_cost_log_class_count(self):
        arch = linear(4, 10)
        batch = np.random.default_rng(0).uniform(0, 1, size=(6, 4))
        labels = np.arange(6)
        assert batch_loss(arch, np.zeros(arch.param_count), batch, labels) == pytest.approx(np.log(10))

    def test_forward_then_backward(self):
        arch = linear(3, 2)
        state = init_state(arch, seed=0)
        batch = np.eye(3)
        labels = np.array([0, 1, 0])
        loss, tape = forward(state, batch, labels)
        gradient = backward(tape)
        assert gradient.shape == (arch.param_count,)
        assert loss > 0
        with pytest.raises(UsageError):
            backward(tape)


class TestSgdStep:
    """Masked SGD with momentum"""

    @pytest.fixture
    def setup(self):
        arch = linear(3, 2)
        state = init_state(arch, seed=0)
        bits = np.ones(arch.param_count, dtype=bool)
        bits[[0, 3]] = False
        return state, SparsityMask.dense(arch).with_bits(bits)

    def test_masked_coordinates_stay_zero(self, setup):
        state, mask = setup
        g = np.ones(state.params.size)
        new, buffer = sgd_step(state, g, mask, lr=0.1, momentum=0.9)
        assert new.params[0] == 0.0 and new.params[3] == 0.0
        assert buffer[0] == 0.0 and buffer[3] == 0.0
        kept = mask.bits
        np.testing.assert_allclose(new.params[kept], state.params[kept] - 0.1, rtol=1e-6, atol=1e-6)

    def test_momentum_recursion(self, setup):
        """b2 = m * b1 + g2, theta2 = theta1 - lr * b2"""
        state, mask = setup
        g = np.full(state.params.size, 0.5)
        first, b1 = sgd_step(state, g, mask, lr=0.1, momentum=0.9)
        second, b2 = sgd_step(first, g, mask, lr=0.1, momentum=0.9, momentum_buffer=b1)
        np.testing.assert_allclose(b2[mask.bits], 0.9 * 0.5 + 0.5)
        np.testing.assert_allclose(
            second.params[mask.bits], first.params[mask.bits] - 0.1 * 0.95, rtol=1e-5, atol=1e-6
        )

    def test_rejects_bad_hyperparameters(self, setup):
        state, mask = setup
        g = np.zeros(state.params.size)
        with pytest.raises(ConfigError):
            sgd_step(state, g, mask, lr=0.0)
        with pytest.raises(ConfigError):
            sgd_step(state, g, mask, lr=0.1, momentum=1.0)

    def test_non_finite_gradient(self, setup):
        state, mask = setup
        g = np.full(state.params.size, np.nan)
        with pytest.raises(NumericFailureError):
            sgd_step(state, g, mask, lr=0.1)


class TestHvp:
    """Finite-difference Hessian-vector products"""

    def test_quadratic_is_exact(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((5, 5))
        matrix = a @ a.T + np.eye(5)
        objective = QuadraticObjective(matrix, linear=rng.standard_normal(5))
        v = rng.standard_normal(5)
        np.testing.assert_allclose(hvp_at(objective, rng.standard_normal(5), v), matrix @ v, rtol=1e-6, atol=1e-8)

    def test_zero_direction(self):
        objective = QuadraticObjective(np.eye(3))
        assert np.array_equal(hvp_at(objective, np.ones(3), np.zeros(3)), np.zeros(3))

    def test_network_hvp_is_symmetric(self):
        """<u, Hv> == <v, Hu> for the batch loss"""
        arch = linear(3, 2)
        state = init_state(arch, seed=2)
        rng = np.random.default_rng(0)
        batch = rng.uniform(0, 1, size=(6, 3))
        labels = rng.integers(0, 2, size=6)
        u = rng.standard_normal(arch.param_count)
        v = rng.standard_normal(arch.param_count)
        left = u @ hvp(state, batch, labels, v)
        right = v @ hvp(state, batch, labels, u)
        assert left == pytest.approx(right, rel=1e-3, abs=1e-5)

    def test_dataset_objective_batches_agree(self):
        """Loss accumulated in batches equals the single-batch loss"""
        arch = linear(3, 2)
        theta = init_state(arch, seed=0).params
        rng = np.random.default_rng(1)
        features = rng.uniform(0, 1, size=(10, 3))
        labels = rng.integers(0, 2, size=10)
        whole = DatasetObjective(arch, features, labels, batch_size=10).loss(theta)
        split = DatasetObjective(arch, features, labels, batch_size=3).loss(theta)
        assert split == pytest.approx(whole, rel=1e-12)
