"""Update-rule and batching tests."""

import numpy as np
import pytest

from trnn.exceptions import ConfigError, ShapeError
from trnn.optimizer import OptimizerState, adam_step, minibatch_iterate, sgd_step


class TestSgdStep:
    def test_zero_gradient_keeps_parameters(self):
        params = [np.array([[1.0, -2.0]]), np.array([0.5])]
        state = OptimizerState.create("sgd", 0.1, params)
        out = sgd_step(params, [np.zeros_like(p) for p in params], state)
        for p, q in zip(params, out):
            assert np.array_equal(p, q)

    def test_arithmetic(self):
        state = OptimizerState.create("sgd", 0.1, [np.array([1.0])])
        out = sgd_step([np.array([1.0])], [np.array([2.0])], state)
        assert out[0][0] == pytest.approx(0.8)

    def test_weight_decay_term(self):
        state = OptimizerState.create("sgd", 0.1, [np.array([1.0])], weight_decay=0.5)
        out = sgd_step([np.array([1.0])], [np.array([0.0])], state)
        assert out[0][0] == pytest.approx(1.0 - 0.1 * 0.5)

    def test_converges_on_quadratic(self):
        # f(t) = ||t - t*||^2 has gradient 2(t - t*); lr below 1 contracts.
        rng = np.random.default_rng(0)
        target = rng.standard_normal(4)
        theta = [rng.standard_normal(4)]
        state = OptimizerState.create("sgd", 0.4, theta)
        for _ in range(200):
            theta = sgd_step(theta, [2.0 * (theta[0] - target)], state)
        assert np.max(np.abs(theta[0] - target)) < 1e-8

    def test_negative_lr_rejected(self):
        with pytest.raises(ConfigError, match=">= 0"):
            OptimizerState.create("sgd", -0.1, [])

    def test_lr_zero_allowed_and_freezes(self):
        params = [np.array([3.0])]
        state = OptimizerState.create("sgd", 0.0, params)
        out = sgd_step(params, [np.array([5.0])], state)
        assert out[0][0] == 3.0

    def test_shape_mismatch(self):
        state = OptimizerState.create("sgd", 0.1, [np.zeros(2)])
        with pytest.raises(ShapeError):
            sgd_step([np.zeros(2)], [np.zeros(3)], state)


class TestAdamStep:
    def test_zero_gradients_from_start_keep_parameters(self):
        params = [np.array([1.0, 2.0])]
        state = OptimizerState.create("adam", 1e-3, params)
        out = adam_step(params, [np.zeros(2)], state)
        assert np.array_equal(out[0], params[0])

    def test_first_step_magnitude_is_lr(self):
        # At t=1 the update is lr * g / (|g| + eps), scale-free.
        for scale in (1.0, 1e-3, 1e3):
            params = [np.ones(3)]
            state = OptimizerState.create("adam", 0.05, params)
            out = adam_step(params, [np.full(3, scale)], state)
            np.testing.assert_allclose(params[0] - out[0], 0.05, rtol=1e-4)

    def test_step_counter_increments(self):
        params = [np.zeros(1)]
        state = OptimizerState.create("adam", 1e-3, params)
        adam_step(params, [np.ones(1)], state)
        adam_step(params, [np.ones(1)], state)
        assert state.t == 2

    def test_converges_on_quadratic_bowl(self):
        rng = np.random.default_rng(1)
        target = rng.standard_normal(5)
        theta = [rng.standard_normal(5)]
        state = OptimizerState.create("adam", 1e-2, theta)
        for _ in range(5000):
            theta = adam_step(theta, [2.0 * (theta[0] - target)], state)
        assert np.max(np.abs(theta[0] - target)) < 1e-6

    def test_deterministic_given_state(self):
        rng = np.random.default_rng(2)
        params = [rng.standard_normal(3)]
        grads = [rng.standard_normal(3)]
        outs = []
        for _ in range(2):
            state = OptimizerState.create("adam", 1e-3, params)
            outs.append(adam_step(params, grads, state)[0])
        assert np.array_equal(outs[0], outs[1])

    def test_unknown_method_rejected(self):
        with pytest.raises(ConfigError, match="unknown optimizer"):
            OptimizerState.create("rmsprop", 1e-3, [])


class TestMinibatchIterate:
    def test_full_batch(self):
        batches = minibatch_iterate(7, 7, seed=0)
        assert len(batches) == 1
        assert sorted(batches[0].tolist()) == list(range(7))

    def test_short_final_batch(self):
        batches = minibatch_iterate(5, 2, seed=1)
        assert [len(b) for b in batches] == [2, 2, 1]
        assert sorted(np.concatenate(batches).tolist()) == list(range(5))

    def test_same_seed_same_sequence(self):
        a = minibatch_iterate(10, 3, seed=42)
        b = minibatch_iterate(10, 3, seed=42)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_each_epoch_covers_every_sample_once(self):
        for seed in range(5):
            batches = minibatch_iterate(11, 4, seed=seed)
            idx = np.concatenate(batches)
            assert sorted(idx.tolist()) == list(range(11))

    def test_empty_dataset_rejected(self):
        with pytest.raises(ConfigError, match="empty"):
            minibatch_iterate(0, 1, seed=0)

    def test_batch_size_out_of_range(self):
        with pytest.raises(ConfigError, match="batch size"):
            minibatch_iterate(4, 5, seed=0)
        with pytest.raises(ConfigError, match="batch size"):
            minibatch_iterate(4, 0, seed=0)
