"""
Test suite for the numpy layer kernels, loss, optimizer and gradient checks
"""

import math
import os
import sys

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from errors import LayerStateError, NonFiniteError, ShapeMismatchError
from nn import functional as F
from nn.gradcheck import check_layer, numeric_gradient, relative_error
from nn.layers import make_layer
from nn.loss import mse_dual_loss
from nn.optim import Adam, AdamState, adam_step
from schemas.config import AdamConfig
from schemas.layers import (
    BatchNormSpec, Conv2DSpec, DenseSpec, DepthwiseConv2DSpec, FlattenSpec, GlobalAvgPoolSpec, MaxPoolSpec,
    OutputHeadSpec, PointwiseConvSpec, ReLUSpec,
)

TOLERANCE = 1e-6


def loop_conv(x, w, b, stride):
    """Direct nested-loop cross-correlation with 'same' padding"""
    n, height, width, channels = x.shape
    k, _, _, filters = w.shape
    out_h, top, _ = F.same_padding(height, k, stride)
    out_w, left, _ = F.same_padding(width, k, stride)
    out = np.zeros((n, out_h, out_w, filters))
    for a in range(n):
        for i in range(out_h):
            for j in range(out_w):
                for f in range(filters):
                    total = b[f]
                    for di in range(k):
                        for dj in range(k):
                            r, c = i * stride + di - top, j * stride + dj - left
                            if 0 <= r < height and 0 <= c < width:
                                total += np.dot(x[a, r, c, :], w[di, dj, :, f])
                    out[a, i, j, f] = total
    return out


def loop_depthwise(x, w, b, stride):
    n, height, width, channels = x.shape
    k = w.shape[0]
    out_h, top, _ = F.same_padding(height, k, stride)
    out_w, left, _ = F.same_padding(width, k, stride)
    out = np.zeros((n, out_h, out_w, channels))
    for a in range(n):
        for i in range(out_h):
            for j in range(out_w):
                for ch in range(channels):
                    total = b[ch]
                    for di in range(k):
                        for dj in range(k):
                            r, c = i * stride + di - top, j * stride + dj - left
                            if 0 <= r < height and 0 <= c < width:
                                total += x[a, r, c, ch] * w[di, dj, ch]
                    out[a, i, j, ch] = total
    return out


def built(spec, input_shape, seed=0):
    layer = make_layer(spec)
    layer.build(input_shape, np.random.default_rng(seed), "float64")
    for name, param in layer.params.items():
        # Non-trivial gamma/beta and biases so their gradients are exercised
        param += np.random.default_rng(seed + 1).normal(scale=0.1, size=param.shape)
    return layer


class TestKernels:
    """Test suite for forward kernels against direct loop implementations"""

    @pytest.fixture
    def rng(self):
        """Create a seeded generator"""
        return np.random.default_rng(0)

    def test_same_padding(self):
        """Test output sizes are ceil(size / stride)"""
        assert F.same_padding(24, 3, 1) == (24, 1, 1)
        assert F.same_padding(24, 3, 2) == (12, 0, 1)
        assert F.same_padding(5, 3, 2) == (3, 1, 1)
        assert F.same_padding(1, 3, 2) == (1, 1, 1)

    @pytest.mark.parametrize("stride,shape", [(1, (2, 5, 6, 3)), (2, (2, 5, 6, 3)), (2, (1, 4, 4, 2))])
    def test_conv2d_matches_loops(self, rng, stride, shape):
        """Test the vectorized convolution against the loop oracle"""
        x = rng.normal(size=shape)
        w = rng.normal(size=(3, 3, shape[3], 4))
        b = rng.normal(size=4)
        out, _ = F.conv2d_forward(x, w, b, stride)
        assert np.allclose(out, loop_conv(x, w, b, stride), atol=1e-12)

    @pytest.mark.parametrize("stride", [1, 2])
    def test_depthwise_matches_loops(self, rng, stride):
        """Test the depthwise convolution against the loop oracle"""
        x = rng.normal(size=(2, 5, 7, 3))
        w = rng.normal(size=(3, 3, 3))
        b = rng.normal(size=3)
        out, _ = F.depthwise_forward(x, w, b, stride)
        assert np.allclose(out, loop_depthwise(x, w, b, stride), atol=1e-12)

    def test_conv2d_channel_mismatch(self, rng):
        """Test a weight with the wrong input channel count is refused"""
        with pytest.raises(ShapeMismatchError):
            F.conv2d_forward(rng.normal(size=(1, 4, 4, 3)), rng.normal(size=(3, 3, 2, 4)), np.zeros(4))

    def test_maxpool_floors_odd_extents(self):
        """Test 2 x 2 pooling on odd sizes drops the last row and column"""
        x = np.arange(2 * 5 * 7 * 1, dtype=float).reshape(2, 5, 7, 1)
        out, _ = F.maxpool_forward(x)
        assert out.shape == (2, 2, 3, 1)
        assert out[0, 0, 0, 0] == x[0, 1, 1, 0]

    def test_maxpool_passes_unit_extent(self):
        """Test an axis of extent 1 is not pooled"""
        x = np.arange(8, dtype=float).reshape(1, 1, 8, 1)
        out, _ = F.maxpool_forward(x)
        assert out.shape == (1, 1, 4, 1)
        assert out.ravel().tolist() == [1.0, 3.0, 5.0, 7.0]

    def test_maxpool_routes_gradient_to_argmax(self):
        """Test the backward pass places each gradient at its window maximum"""
        x = np.array([[1.0, 5.0], [3.0, 2.0]]).reshape(1, 2, 2, 1)
        out, cache = F.maxpool_forward(x)
        dx = F.maxpool_backward(np.ones_like(out) * 7.0, cache)
        assert dx.reshape(2, 2).tolist() == [[0.0, 7.0], [0.0, 0.0]]

    def test_batchnorm_training_normalizes(self, rng):
        """Test training mode outputs zero-mean, unit-variance channels and updates running stats"""
        x = rng.normal(loc=3.0, scale=2.0, size=(8, 4, 4, 5))
        running = {"mean": np.zeros(5), "var": np.ones(5)}
        out, _ = F.batchnorm_forward(x, np.ones(5), np.zeros(5), running, True, 0.99, 1e-3)

        assert np.allclose(out.mean(axis=(0, 1, 2)), 0.0, atol=1e-10)
        assert np.allclose(out.var(axis=(0, 1, 2)), x.var(axis=(0, 1, 2)) / (x.var(axis=(0, 1, 2)) + 1e-3))
        assert np.allclose(running["mean"], 0.01 * x.mean(axis=(0, 1, 2)))
        assert np.allclose(running["var"], 0.99 + 0.01 * x.var(axis=(0, 1, 2)))

    def test_batchnorm_inference_uses_running_stats(self):
        """Test inference mode is the fixed affine map of the running statistics"""
        x = np.full((1, 2, 2, 1), 4.0)
        running = {"mean": np.array([2.0]), "var": np.array([3.999])}
        out, _ = F.batchnorm_forward(x, np.array([2.0]), np.array([1.0]), running, False, 0.99, 1e-3)
        assert np.allclose(out, 2.0 * (4.0 - 2.0) / 2.0 + 1.0)
        assert running["mean"].tolist() == [2.0]

    def test_batchnorm_needs_two_samples(self):
        """Test training statistics over a single sample are refused"""
        running = {"mean": np.zeros(2), "var": np.ones(2)}
        with pytest.raises(ValueError):
            F.batchnorm_forward(np.ones((1, 3, 3, 2)), np.ones(2), np.zeros(2), running, True)

    def test_global_avg_pool_and_flatten(self, rng):
        """Test pooling averages each channel and flatten is row-major"""
        x = rng.normal(size=(2, 3, 4, 5))
        pooled, _ = F.global_avg_pool_forward(x)
        flat, _ = F.flatten_forward(x)
        assert np.allclose(pooled, x.mean(axis=(1, 2)))
        assert flat.shape == (2, 60)
        assert flat[1, 5] == x[1, 0, 1, 0]


class TestGradients:
    """Test suite for analytic gradients against central differences"""

    @pytest.mark.parametrize(
        "spec,shape",
        [
            (Conv2DSpec(out_channels=3, stride=1), (4, 5, 2)),
            (Conv2DSpec(out_channels=2, stride=2), (5, 6, 3)),
            (DepthwiseConv2DSpec(stride=1), (4, 5, 3)),
            (DepthwiseConv2DSpec(stride=2), (5, 5, 2)),
            (PointwiseConvSpec(out_channels=4), (3, 3, 3)),
            (MaxPoolSpec(), (4, 6, 2)),
            (MaxPoolSpec(), (5, 3, 2)),
            (ReLUSpec(), (3, 4, 2)),
            (GlobalAvgPoolSpec(), (3, 4, 2)),
            (FlattenSpec(), (2, 3, 2)),
            (DenseSpec(units=5), (7,)),
            (OutputHeadSpec(), (6,)),
        ],
    )
    def test_layer_gradients(self, spec, shape):
        """Test every parameter and the input gradient of one layer"""
        layer = built(spec, shape)
        x = np.random.default_rng(3).normal(size=(3,) + shape)
        errors = check_layer(layer, x, training=True, seed=4)
        assert max(errors.values()) < TOLERANCE, errors

    @pytest.mark.parametrize("training", [True, False])
    def test_batchnorm_gradients(self, training):
        """Test batch norm gradients in both modes"""
        layer = built(BatchNormSpec(), (3, 3, 4))
        layer.buffers["mean"][...] = 0.3
        layer.buffers["var"][...] = 1.7
        x = np.random.default_rng(5).normal(size=(4, 3, 3, 4))
        errors = check_layer(layer, x, training=training, seed=6)
        assert max(errors.values()) < 1e-5, errors

    def test_backward_before_forward(self):
        """Test backward without a cached forward is a state error"""
        layer = built(DenseSpec(units=2), (3,))
        with pytest.raises(LayerStateError):
            layer.backward(np.ones((1, 2)))

    def test_backward_overwrites_gradients(self):
        """Test repeated backward passes do not accumulate"""
        layer = built(DenseSpec(units=2), (3,))
        x = np.ones((2, 3))
        layer.forward(x)
        layer.backward(np.ones((2, 2)))
        first = layer.grads["kernel"].copy()
        layer.forward(x)
        layer.backward(np.ones((2, 2)))
        assert np.array_equal(layer.grads["kernel"], first)

    def test_forward_checks_input_shape(self):
        """Test a built layer refuses inputs of another shape"""
        layer = built(Conv2DSpec(out_channels=2), (4, 4, 3))
        with pytest.raises(ShapeMismatchError):
            layer.forward(np.zeros((1, 4, 5, 3)))

    def test_numeric_gradient_of_quadratic(self):
        """Test the finite-difference helper on a known function"""
        values = np.array([1.0, -2.0, 0.5])
        grad = numeric_gradient(lambda: float(np.sum(values ** 2)), values)
        assert np.allclose(grad, 2.0 * values, atol=1e-8)
        assert values.tolist() == [1.0, -2.0, 0.5]

    def test_relative_error_scale(self):
        """Test the relative error of identical and zero gradients"""
        assert relative_error(np.ones(3), np.ones(3)) == 0.0
        assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
        assert relative_error(np.array([2.0]), np.array([1.0])) == pytest.approx(0.5)

    def test_relative_error_sees_small_entries(self):
        """Test a wrong small entry is not masked by a large one, while round-off is"""
        analytic = np.array([10.0, 1e-4, 1e-12])
        assert relative_error(analytic, np.array([10.0, 2e-4, 1e-12])) > 1e-4
        assert relative_error(analytic, np.array([10.0, 1e-4, 3e-12])) < 1e-9
        assert relative_error(np.array([1e-3, -2.0]), np.array([-1e-3, -2.0])) == pytest.approx(0.1)


class TestLoss:
    """Test suite for the dual mean squared error"""

    def test_value_and_gradient(self):
        """Test the loss averages over batch and both outputs"""
        pred = np.array([[1.0, 2.0], [3.0, 4.0]])
        loss, grad = mse_dual_loss(pred, np.zeros((2, 2)))
        assert loss == pytest.approx(7.5)
        assert np.allclose(grad, pred / 2.0)

    def test_perfect_prediction(self):
        """Test a perfect prediction has zero loss and gradient"""
        target = np.array([[0.1, -0.2]])
        loss, grad = mse_dual_loss(target.copy(), target)
        assert loss == 0.0
        assert not grad.any()

    def test_shape_mismatch(self):
        """Test mismatched or non-dual shapes are refused"""
        with pytest.raises(ShapeMismatchError):
            mse_dual_loss(np.zeros((2, 2)), np.zeros((3, 2)))
        with pytest.raises(ShapeMismatchError):
            mse_dual_loss(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_non_finite_prediction(self):
        """Test NaN predictions raise instead of propagating"""
        with pytest.raises(NonFiniteError):
            mse_dual_loss(np.array([[np.nan, 0.0]]), np.zeros((1, 2)))


class TestAdam:
    """Test suite for the Adam update"""

    def test_scalar_oracle(self):
        """Test two steps against the update written out by hand"""
        params = {"w": np.array([1.0])}
        state = AdamState()
        alpha, b1, b2, eps = 1e-3, 0.9, 0.999, 1e-8

        expected = 1.0
        m = v = 0.0
        for t, g in enumerate([0.5, -0.25], start=1):
            adam_step(params, {"w": np.array([g])}, state)
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            expected -= alpha * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)

        assert state.t == 2
        assert params["w"][0] == pytest.approx(expected, rel=1e-12)
        assert state.m["w"][0] == pytest.approx(m)

    def test_first_step_moves_by_alpha(self):
        """Test bias correction makes the first step size alpha in every coordinate"""
        params = {"w": np.array([0.0, 0.0, 0.0])}
        adam_step(params, {"w": np.array([3.0, -0.001, 200.0])}, AdamState(alpha=0.01))
        assert np.allclose(params["w"], [-0.01, 0.01, -0.01], atol=1e-7)

    def test_non_finite_gradient_leaves_state(self):
        """Test a rejected step modifies neither parameters nor moments"""
        params = {"a": np.array([1.0]), "b": np.array([2.0])}
        state = AdamState()
        with pytest.raises(NonFiniteError):
            adam_step(params, {"a": np.array([0.1]), "b": np.array([np.inf])}, state)
        assert state.t == 0
        assert state.m == {}
        assert params["a"][0] == 1.0

    def test_gradient_shape_checked(self):
        """Test a gradient of the wrong shape is refused"""
        with pytest.raises(ShapeMismatchError):
            adam_step({"w": np.zeros(3)}, {"w": np.zeros(2)}, AdamState())

    def test_optimizer_wrapper(self):
        """Test the bound optimizer descends a quadratic"""
        params = {"w": np.array([5.0])}
        optimizer = Adam(params, AdamConfig(alpha=0.1))
        for _ in range(200):
            optimizer.step({"w": 2.0 * params["w"]})
        assert abs(params["w"][0]) < 0.5
        assert optimizer.state.t == 200


class TestProperties:
    """Test suite for algebraic properties of the kernels and optimizer"""

    def test_conv_oracle_on_random_shapes(self):
        """Test both convolutions against the loop oracles on 50 random shapes"""
        rng = np.random.default_rng(50)
        for _ in range(50):
            n, h, w, c = (int(v) for v in rng.integers(1, 5, size=4))
            h, w = h + 1, w + 2
            stride = int(rng.integers(1, 3))
            x = rng.normal(size=(n, h, w, c))
            kernel = rng.normal(size=(3, 3, c, 2))
            depth = rng.normal(size=(3, 3, c))
            out, _ = F.conv2d_forward(x, kernel, np.zeros(2), stride)
            assert np.allclose(out, loop_conv(x, kernel, np.zeros(2), stride), atol=1e-12, rtol=0)
            out, _ = F.depthwise_forward(x, depth, np.ones(c), stride)
            assert np.allclose(out, loop_depthwise(x, depth, np.ones(c), stride), atol=1e-12, rtol=0)

    def test_convolutions_are_linear(self):
        """Test f(ax + by) = a f(x) + b f(y) without bias"""
        rng = np.random.default_rng(7)
        x, y = rng.normal(size=(2, 2, 6, 7, 3))
        w, d = rng.normal(size=(3, 3, 3, 4)), rng.normal(size=(3, 3, 3))
        for forward, weight, bias in ((F.conv2d_forward, w, np.zeros(4)), (F.depthwise_forward, d, np.zeros(3))):
            combined, _ = forward(2.5 * x - 0.5 * y, weight, bias, 2)
            fx, _ = forward(x, weight, bias, 2)
            fy, _ = forward(y, weight, bias, 2)
            assert np.allclose(combined, 2.5 * fx - 0.5 * fy, atol=1e-10)

    def test_pooling_bounds(self):
        """Test max pooling never exceeds the input max and average pooling keeps channel means"""
        x = np.random.default_rng(8).normal(size=(3, 7, 9, 4))
        pooled, _ = F.maxpool_forward(x)
        averaged, _ = F.global_avg_pool_forward(x)
        assert pooled.max() <= x.max()
        assert np.allclose(averaged.mean(axis=0), x.mean(axis=(0, 1, 2)))

    def test_batchnorm_inference_is_deterministic(self):
        """Test two identical inputs give identical inference outputs"""
        layer = built(BatchNormSpec(), (2, 2, 3))
        x = np.random.default_rng(9).normal(size=(2, 2, 2, 3))
        assert np.array_equal(layer.forward(x, training=False), layer.forward(x.copy(), training=False))

    def test_dense_zero_output_gradient(self):
        """Test a zero upstream gradient gives zero parameter gradients"""
        layer = built(DenseSpec(units=3), (4,))
        layer.forward(np.ones((2, 4)), training=True)
        layer.backward(np.zeros((2, 3)))
        assert not layer.grads["kernel"].any()
        assert not layer.grads["bias"].any()

    def test_adam_zero_gradient(self):
        """Test a zero gradient on a fresh state leaves parameters unchanged"""
        params = {"w": np.array([0.3, -0.7])}
        adam_step(params, {"w": np.zeros(2)}, AdamState())
        assert params["w"].tolist() == [0.3, -0.7]

    def test_adam_quadratic_trajectory(self):
        """Test 100 steps on f(x) = x^2 from x = 1 against a scalar Adam"""
        params = {"x": np.array([1.0])}
        state = AdamState()
        x, m, v = 1.0, 0.0, 0.0
        for t in range(1, 101):
            g = 2.0 * x
            adam_step(params, {"x": np.array([2.0 * params["x"][0]])}, state)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            x = x - 1e-3 * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
            assert abs(params["x"][0] - x) < 1e-12

    def test_linear_model_loss_decreases(self):
        """Test Adam on a two-parameter linear least squares problem descends monotonically"""
        rng = np.random.default_rng(10)
        features = rng.normal(size=32)
        targets = 1.5 * features - 0.25
        params = {"a": np.array([0.0]), "b": np.array([0.0])}
        state = AdamState(alpha=0.01)
        losses = []
        for _ in range(60):
            residual = params["a"][0] * features + params["b"][0] - targets
            losses.append(float(np.mean(residual ** 2)))
            grads = {"a": np.array([2.0 * np.mean(residual * features)]), "b": np.array([2.0 * np.mean(residual)])}
            adam_step(params, grads, state)
        assert all(later < earlier for earlier, later in zip(losses[10:], losses[11:]))
