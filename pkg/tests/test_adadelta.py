"""Tests for the AdaDelta update"""

from types import SimpleNamespace

import numpy as np
import pytest

from facefit.optim.adadelta import EPSILON, RHO, AdaDelta, adadelta_step


class TestAdadeltaStep:

    def test_first_step(self):
        g = np.array([1.0, -2.0])
        value, acc_g, acc_d = adadelta_step(np.zeros(2), g, np.zeros(2), np.zeros(2))
        expected_acc = (1 - RHO) * g * g
        expected_delta = -np.sqrt(EPSILON) / np.sqrt(expected_acc + EPSILON) * g
        np.testing.assert_allclose(acc_g, expected_acc)
        np.testing.assert_allclose(value, expected_delta)
        np.testing.assert_allclose(acc_d, (1 - RHO) * expected_delta ** 2)

    def test_zero_gradient_does_not_move(self):
        value = np.array([0.3, -0.7])
        new, _, _ = adadelta_step(value, np.zeros(2), np.ones(2), np.ones(2))
        np.testing.assert_array_equal(new, value)

    def test_learning_rate_scales_the_move_only(self):
        g = np.array([0.5])
        plain, acc_g1, acc_d1 = adadelta_step(np.zeros(1), g, np.zeros(1), np.zeros(1), lr=1.0)
        scaled, acc_g2, acc_d2 = adadelta_step(np.zeros(1), g, np.zeros(1), np.zeros(1), lr=100.0)
        np.testing.assert_allclose(scaled, 100.0 * plain)
        np.testing.assert_array_equal(acc_g1, acc_g2)
        np.testing.assert_array_equal(acc_d1, acc_d2)

    def test_moves_against_the_gradient(self):
        new, _, _ = adadelta_step(np.array([1.0]), np.array([3.0]), np.zeros(1), np.zeros(1))
        assert new[0] < 1.0


class TestAdaDelta:
    """Block-wise optimizer state"""

    def test_decreases_a_quadratic(self):
        optimizer = AdaDelta({"x": 1.0})
        x = np.array([1.0, -2.0])
        start = float(x @ x)
        for _ in range(300):
            x = optimizer.step("x", x, 2.0 * x)
        assert float(x @ x) < start

    def test_update_moves_only_blocks_with_rates(self):
        params = SimpleNamespace(a=np.ones(2), b=np.ones(2))
        grad = SimpleNamespace(a=np.ones(2), b=np.ones(2))
        AdaDelta({"a": 10.0}).update(params, grad)
        assert np.all(params.a < 1.0)
        np.testing.assert_array_equal(params.b, np.ones(2))

    def test_accumulators_are_kept_per_block(self):
        optimizer = AdaDelta({"a": 1.0, "b": 1.0})
        optimizer.step("a", np.zeros(3), np.ones(3))
        assert set(optimizer.acc_grad) == {"a"}
        assert optimizer.acc_grad["a"].shape == (3,)

    @pytest.mark.parametrize("kwargs", [
        {"learning_rates": {"a": 0.0}},
        {"learning_rates": {"a": 1.0}, "rho": 1.0},
        {"learning_rates": {"a": 1.0}, "eps": 0.0},
    ])
    def test_invalid_settings(self, kwargs):
        with pytest.raises(ValueError):
            AdaDelta(**kwargs)
