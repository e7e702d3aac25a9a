import numpy as np
import pytest
from helpers import central_difference, conv_loop, max_rel_error

from aleatoric_ehr import layers as L
from aleatoric_ehr.errors import ContractError, DimensionError, StateError
from aleatoric_ehr.tensor import RngStream


def conv(kernel, bias=0.0):
    k = np.asarray(kernel, dtype=float)
    return L.Conv1dParams(k.reshape(1, 1, -1), np.array([bias]))


class TestConv1d:
    def test_center_tap_identity(self):
        out = L.conv1d_forward(np.array([[1.0, 2.0, 3.0, 4.0]]), conv([0, 1, 0]))
        np.testing.assert_array_equal(out, [[1, 2, 3, 4]])

    def test_ones_kernel_counts_window(self):
        out = L.conv1d_forward(np.ones((1, 4)), conv([1, 1, 1]))
        np.testing.assert_array_equal(out, [[2, 3, 3, 2]])

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((3, 9))
        p = L.Conv1dParams(rng.standard_normal((4, 3, 3)), rng.standard_normal(4))
        np.testing.assert_allclose(L.conv1d_forward(x, p), conv_loop(x, p.kernels, p.bias), rtol=0, atol=1e-14)

    def test_batched_equals_per_instance(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((5, 3, 7))
        p = L.Conv1dParams(rng.standard_normal((2, 3, 3)), rng.standard_normal(2))
        batched = L.conv1d_forward(x, p)
        for i in range(5):
            np.testing.assert_allclose(batched[i], L.conv1d_forward(x[i], p), rtol=0, atol=1e-14)

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError):
            L.conv1d_forward(np.ones((2, 5)), conv([0, 1, 0]))

    def test_backward_without_forward(self):
        with pytest.raises(StateError):
            L.conv1d_backward(np.ones((1, 4)), {})

    def test_zero_grad(self):
        rng = np.random.default_rng(2)
        p = L.Conv1dParams(rng.standard_normal((2, 3, 3)), rng.standard_normal(2))
        cache = {}
        L.conv1d_forward(rng.standard_normal((3, 6)), p, cache)
        dx, g = L.conv1d_backward(np.zeros((2, 6)), cache)
        assert not dx.any() and not g.kernels.any() and not g.bias.any()

    def test_scalar_product_rule(self):
        # width-1 kernel on a single sample: out = k * x + b
        p = L.Conv1dParams(np.array([[[3.0]]]), np.array([0.5]))
        cache = {}
        L.conv1d_forward(np.array([[2.0]]), p, cache)
        dx, g = L.conv1d_backward(np.array([[1.0]]), cache)
        assert dx[0, 0] == 3.0 and g.kernels[0, 0, 0] == 2.0 and g.bias[0] == 1.0

    def test_finite_differences(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((2, 3, 8))
        p = L.Conv1dParams(rng.standard_normal((4, 3, 3)), rng.standard_normal(4))
        w = rng.standard_normal((2, 4, 8))

        def f():
            return float(np.sum(w * L.conv1d_forward(x, p)))

        cache = {}
        L.conv1d_forward(x, p, cache)
        dx, g = L.conv1d_backward(w, cache)
        assert max_rel_error(dx, central_difference(f, x)) < 1e-6
        assert max_rel_error(g.kernels, central_difference(f, p.kernels)) < 1e-6
        assert max_rel_error(g.bias, central_difference(f, p.bias)) < 1e-6

    def test_linear_in_input(self):
        rng = np.random.default_rng(4)
        p = L.Conv1dParams(rng.standard_normal((3, 2, 3)), rng.standard_normal(3))
        x, y = rng.standard_normal((2, 10)), rng.standard_normal((2, 10))
        a, b = 1.7, -0.4
        b0 = p.bias[:, None]
        lhs = L.conv1d_forward(a * x + b * y, p) - b0
        rhs = a * (L.conv1d_forward(x, p) - b0) + b * (L.conv1d_forward(y, p) - b0)
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)


class TestElementwise:
    def test_relu(self):
        cache = {}
        out = L.relu_forward(np.array([-1.0, 2.0]), cache)
        np.testing.assert_array_equal(out, [0, 2])
        np.testing.assert_array_equal(L.relu_backward(np.array([5.0, 7.0]), cache), [0, 7])

    def test_dense_finite_differences(self):
        rng = np.random.default_rng(5)
        x, w, b = rng.standard_normal((4, 3)), rng.standard_normal((2, 3)), rng.standard_normal(2)
        up = rng.standard_normal((4, 2))
        cache = {}
        L.dense_forward(x, w, b, cache)
        dx, dw, db = L.dense_backward(up, cache)

        def f():
            return float(np.sum(up * L.dense_forward(x, w, b)))

        for analytic, arr in ((dx, x), (dw, w), (db, b)):
            assert max_rel_error(analytic, central_difference(f, arr)) < 1e-8


class TestDropout:
    def test_keep_one_is_identity(self):
        x = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(L.dropout_forward(x, 1.0, RngStream(0), training=True), x)
        np.testing.assert_array_equal(L.dropout_forward(x, 1.0, training=False), x)

    def test_inference_rejects_rng(self):
        with pytest.raises(ContractError):
            L.dropout_forward(np.ones(3), 0.5, RngStream(0), training=False)

    def test_training_needs_rng(self):
        with pytest.raises(ContractError):
            L.dropout_forward(np.ones(3), 0.5, None, training=True)

    def test_mask_scaling_and_backward(self):
        cache = {}
        out = L.dropout_forward(np.ones((100, 100)), 0.5, RngStream(1), training=True, cache=cache)
        assert set(np.unique(out)) <= {0.0, 2.0}
        assert abs(out.mean() - 1.0) < 0.05
        np.testing.assert_array_equal(L.dropout_backward(np.ones((100, 100)), cache), out)


class TestPooling:
    def test_full_axis_and_ties(self):
        x = np.array([[[1.0, 3.0, 3.0, 2.0]]])
        cache = {}
        out = L.max_pool1d_forward(x, None, cache)
        assert out.shape == (1, 1) and out[0, 0] == 3.0
        dx = L.max_pool1d_backward(np.array([[5.0]]), cache)
        np.testing.assert_array_equal(dx, [[[0, 5, 0, 0]]])  # lowest index wins the tie

    def test_each_gradient_goes_to_one_position(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((3, 4, 12))
        cache = {}
        L.max_pool1d_forward(x, 3, cache)
        g = rng.standard_normal((3, 4, 4))
        dx = L.max_pool1d_backward(g, cache)
        blocks = dx.reshape(3, 4, 4, 3)
        assert np.all((blocks != 0).sum(axis=3) == 1)
        np.testing.assert_array_equal(blocks.sum(axis=3), g)
        np.testing.assert_array_equal(np.take_along_axis(x.reshape(3, 4, 4, 3), cache["arg"][..., None], 3)[..., 0],
                                      x.reshape(3, 4, 4, 3).max(axis=3))

    def test_average_pool_gradient(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((2, 3, 5))
        up = rng.standard_normal((2, 3))
        cache = {}
        L.avg_pool1d_forward(x, cache)

        def f():
            return float(np.sum(up * L.avg_pool1d_forward(x)))

        assert max_rel_error(L.avg_pool1d_backward(up, cache), central_difference(f, x)) < 1e-8


class TestBatchNorm:
    def test_zero_variance_channel(self):
        x = np.array([[1.0, 4.0], [1.0, 6.0], [1.0, 8.0]])
        state = L.BatchNormState.fresh(2)
        out = L.batch_norm1d_forward(x, state, training=True)
        # constant channel: (x - mean) / sqrt(0 + eps) = 0 exactly
        np.testing.assert_array_equal(out[:, 0], [0.0, 0.0, 0.0])
        # other channel: (x - 6) / sqrt(8/3 + 1e-5)
        np.testing.assert_allclose(out[:, 1], np.array([-2.0, 0.0, 2.0]) / np.sqrt(8 / 3 + L.BN_EPS), rtol=1e-15)
        assert abs(out.mean(axis=0)).max() < 1e-15

    def test_running_statistics(self):
        state = L.BatchNormState.fresh(1)
        L.batch_norm1d_forward(np.array([[2.0], [4.0]]), state, training=True)
        np.testing.assert_allclose(state.running_mean, [0.3])
        np.testing.assert_allclose(state.running_var, [0.9 + 0.1 * 1.0])
        out = L.batch_norm1d_forward(np.array([[0.3]]), state, training=False)
        assert abs(out[0, 0]) < 1e-15

    @pytest.mark.parametrize("shape", [(6, 3), (4, 3, 5)])
    @pytest.mark.parametrize("training", [True, False])
    def test_finite_differences(self, shape, training):
        rng = np.random.default_rng(8)
        x = rng.standard_normal(shape)
        c = shape[1]
        state = L.BatchNormState(rng.uniform(0.5, 2, c), rng.standard_normal(c), rng.standard_normal(c), rng.uniform(0.5, 2, c))
        up = rng.standard_normal(shape)

        def f():
            s = L.BatchNormState(state.gamma, state.beta, state.running_mean.copy(), state.running_var.copy())
            return float(np.sum(up * L.batch_norm1d_forward(x, s, training=training)))

        cache = {}
        s = L.BatchNormState(state.gamma, state.beta, state.running_mean.copy(), state.running_var.copy())
        L.batch_norm1d_forward(x, s, training=training, cache=cache)
        dx, dg, db = L.batch_norm1d_backward(up, cache)
        assert max_rel_error(dx, central_difference(f, x)) < 1e-6
        assert max_rel_error(dg, central_difference(f, state.gamma)) < 1e-6
        assert max_rel_error(db, central_difference(f, state.beta)) < 1e-6


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_array_equal(L.softmax(np.zeros(2)), [0.5, 0.5])

    def test_shift_invariance(self):
        x = np.random.default_rng(9).standard_normal(6)
        np.testing.assert_allclose(L.softmax(x + 37.5), L.softmax(x), atol=1e-12)

    def test_sums_to_one(self):
        p = L.softmax(np.random.default_rng(10).standard_normal(5) * 10)
        assert np.all(p > 0) and abs(p.sum() - 1) < 1e-12
