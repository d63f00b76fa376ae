"""Numeric kernels: softmax, sigmoid, smoothing, Adam, finite differences."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wtalkit.numerics import (
    AdamState,
    adam_step,
    finite_diff_grad,
    gaussian_kernel,
    gaussian_smooth,
    gaussian_smooth_transpose,
    reflect_index,
    sigmoid,
    softmax,
)


class TestSoftmax:
    def test_symmetric_pair(self):
        np.testing.assert_allclose(softmax(np.array([0.0, 0.0])), [0.5, 0.5])

    def test_uniform(self):
        np.testing.assert_allclose(softmax(np.ones(4)), np.full(4, 0.25))

    def test_large_magnitude_no_overflow(self):
        # the shifted-input evaluation is exact here: e^0/(e^0+e^-1000)
        out = softmax(np.array([1000.0, 0.0]))
        expected = np.array([1.0 / (1.0 + np.exp(-1000.0)),
                             np.exp(-1000.0) / (1.0 + np.exp(-1000.0))])
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out, expected, atol=1e-300)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            softmax(np.array([]))

    @given(st.lists(st.floats(-700, 700), min_size=1, max_size=12))
    def test_sums_to_one_and_order_preserving(self, vals):
        v = np.array(vals)
        out = softmax(v)
        assert abs(out.sum() - 1.0) <= 1e-12
        order = np.argsort(v, kind="stable")
        assert np.all(np.diff(out[order]) >= -1e-15)


class TestSigmoid:
    def test_zero(self):
        assert sigmoid(0.0) == 0.5

    def test_saturation(self):
        assert sigmoid(50.0) == pytest.approx(1.0, abs=1e-12)

    def test_reference_value(self):
        # 1/(1+e^-1) evaluated independently at high precision
        assert sigmoid(1.0) == pytest.approx(0.7310585786300049, abs=1e-12)

    @given(st.floats(-500, 500))
    def test_complement_symmetry(self, x):
        assert abs(sigmoid(-x) - (1.0 - sigmoid(x))) <= 1e-12

    def test_extreme_negative_stays_finite(self):
        assert 0.0 <= sigmoid(-1e4) < 1e-300 or sigmoid(-1e4) == 0.0


class TestReflectIndex:
    @staticmethod
    def _oracle(i, n):
        # bounce between the walls one step at a time
        if n == 1:
            return 0
        while not 0 <= i < n:
            if i < 0:
                i = -i
            else:
                i = 2 * (n - 1) - i
        return i

    @given(st.integers(min_value=-60, max_value=60),
           st.integers(min_value=1, max_value=9))
    def test_matches_bounce_oracle(self, i, n):
        assert reflect_index(i, n) == self._oracle(i, n)

    def test_vectorized(self):
        idx = np.arange(-6, 12)
        out = reflect_index(idx, 5)
        expected = np.array([self._oracle(int(i), 5) for i in idx])
        np.testing.assert_array_equal(out, expected)


class TestGaussianSmooth:
    def test_kernel_normalized_symmetric(self):
        k = gaussian_kernel(1.0, 2)
        assert k.shape == (5,)
        assert k.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(k, k[::-1])

    def test_constant_fixed_point(self):
        seq = np.full(4, 0.3)
        np.testing.assert_allclose(gaussian_smooth(seq), seq, atol=1e-12)

    def test_impulse_symmetric_bump(self):
        # reflect padding keeps constants fixed but duplicates boundary mass,
        # so only shape claims hold: symmetric bump, peak at the impulse
        out = gaussian_smooth(np.array([0.0, 0.0, 1.0, 0.0, 0.0]))
        np.testing.assert_allclose(out, out[::-1])
        assert np.argmax(out) == 2
        assert out[2] > out[1] > out[0] > 0.0

    def test_matches_direct_convolution(self):
        rng = np.random.default_rng(3)
        seq = rng.normal(size=7)
        k = gaussian_kernel(1.0, 2)
        expected = np.empty(7)
        for t in range(7):
            acc = 0.0
            for offset in range(-2, 3):
                acc += k[offset + 2] * seq[reflect_index(t + offset, 7)]
            expected[t] = acc
        np.testing.assert_allclose(gaussian_smooth(seq), expected, atol=1e-12)

    def test_sigma_must_be_positive(self):
        with pytest.raises(ValueError):
            gaussian_smooth(np.ones(3), sigma=0.0)

    def test_range_bounded(self):
        rng = np.random.default_rng(5)
        seq = rng.uniform(-2, 3, size=11)
        out = gaussian_smooth(seq)
        assert out.min() >= seq.min() - 1e-12
        assert out.max() <= seq.max() + 1e-12

    @given(st.integers(min_value=1, max_value=10),
           st.floats(-3, 3), st.floats(-3, 3))
    @settings(max_examples=40)
    def test_linearity(self, t, alpha, beta):
        rng = np.random.default_rng(t)
        x, y = rng.normal(size=(2, t))
        lhs = gaussian_smooth(alpha * x + beta * y)
        rhs = alpha * gaussian_smooth(x) + beta * gaussian_smooth(y)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    @given(st.integers(min_value=1, max_value=12))
    def test_transpose_is_adjoint(self, t):
        rng = np.random.default_rng(t + 100)
        x, y = rng.normal(size=(2, t))
        lhs = np.dot(gaussian_smooth(x), y)
        rhs = np.dot(x, gaussian_smooth_transpose(y))
        assert lhs == pytest.approx(rhs, abs=1e-12)


class TestAdam:
    def test_zero_grad_zero_decay_is_identity(self):
        state = AdamState(shape=(3,), learning_rate=0.1, weight_decay=0.0)
        params = np.array([1.0, -2.0, 0.5])
        out = adam_step(params, np.zeros(3), state)
        np.testing.assert_array_equal(out, params)
        assert state.step == 1

    def test_first_step_delta(self):
        # bias-corrected first step: m_hat=g, v_hat=g^2, delta=-eta*g/(|g|+eps)
        state = AdamState(shape=(1,), learning_rate=0.1, weight_decay=0.0)
        out = adam_step(np.array([0.0]), np.array([1.0]), state)
        expected = -0.1 * 1.0 / (1.0 + 1e-8)
        assert out[0] == pytest.approx(expected, abs=1e-9)

    def test_quadratic_convergence(self):
        state = AdamState(shape=(1,), learning_rate=0.1, weight_decay=0.0)
        w = np.array([1.0])
        for _ in range(100):
            w = adam_step(w, 2.0 * w, state)
        assert abs(w[0]) < 0.05

    def test_decoupled_weight_decay(self):
        # with zero gradient the update is exactly the decay shrink
        state = AdamState(shape=(1,), learning_rate=0.1, weight_decay=1e-3)
        out = adam_step(np.array([2.0]), np.array([0.0]), state)
        assert out[0] == pytest.approx(2.0 * (1.0 - 0.1 * 1e-3), abs=1e-15)

    def test_shape_mismatch(self):
        state = AdamState(shape=(2,), learning_rate=0.1)
        with pytest.raises(ValueError):
            adam_step(np.zeros(3), np.zeros(3), state)


class TestFiniteDiff:
    def test_constant_loss(self):
        grad = finite_diff_grad(lambda w: 7.0, np.ones(4))
        np.testing.assert_allclose(grad, np.zeros(4), atol=1e-6)

    def test_sum_of_squares(self):
        grad = finite_diff_grad(lambda w: float(np.sum(w * w)),
                                np.array([1.0, 2.0]))
        np.testing.assert_allclose(grad, [2.0, 4.0], atol=1e-8)

    @given(st.integers(min_value=1, max_value=6))
    @settings(max_examples=20)
    def test_quadratic_exact_to_roundoff(self, n):
        # central differences are exact on degree-2 polynomials up to roundoff
        rng = np.random.default_rng(n)
        a = rng.normal(size=(n, n))
        b = rng.normal(size=n)
        w = rng.normal(size=n)

        def loss(v):
            return float(v @ a @ v + b @ v)

        grad = finite_diff_grad(loss, w)
        expected = (a + a.T) @ w + b
        np.testing.assert_allclose(grad, expected, atol=1e-6)
