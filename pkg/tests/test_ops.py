"""Layer kernels against brute-force oracles and the worked examples."""

import numpy as np
import pytest

from balloonseg import ops
from balloonseg.tensor import ShapeError


def conv2d_oracle(x, w, b=None, stride=1, pad=0):
    """Direct sliding-window cross-correlation, one output element at a time."""
    n, ci, h, ww_ = x.shape
    co, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (ww_ + 2 * pad - kw) // stride + 1
    y = np.zeros((n, co, oh, ow))
    for ni in range(n):
        for o in range(co):
            for i in range(oh):
                for j in range(ow):
                    window = xp[ni, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    y[ni, o, i, j] = (window * w[o]).sum()
            if b is not None:
                y[ni, o] += b[o]
    return y


def conv2d_transpose_oracle(x, w, b=None, stride=2):
    """Scatter-accumulate every input element through the kernel."""
    n, ci, h, ww_ = x.shape
    _, co, kh, kw = w.shape
    y = np.zeros((n, co, (h - 1) * stride + kh, (ww_ - 1) * stride + kw))
    for ni in range(n):
        for c in range(ci):
            for i in range(h):
                for j in range(ww_):
                    y[ni, :, i * stride:i * stride + kh, j * stride:j * stride + kw] += (
                        x[ni, c, i, j] * w[c]
                    )
    if b is not None:
        y += b.reshape(1, co, 1, 1)
    return y


def maxpool2_oracle(x):
    n, c, h, w = x.shape
    y = np.zeros((n, c, h // 2, w // 2))
    for i in range(h // 2):
        for j in range(w // 2):
            y[:, :, i, j] = x[:, :, 2 * i:2 * i + 2, 2 * j:2 * j + 2].max(axis=(2, 3))
    return y


class TestConv2d:
    def test_same_pad_all_ones_kernel(self):
        # 3x3 ramp under an all-ones kernel: center = 45, corner = 12
        x = np.arange(1.0, 10.0).reshape(1, 1, 3, 3)
        w = np.ones((1, 1, 3, 3))
        y, _ = ops.conv2d_forward(x, w, padding="same")
        assert y[0, 0, 1, 1] == pytest.approx(45.0)
        assert y[0, 0, 0, 0] == pytest.approx(12.0)
        np.testing.assert_allclose(y, conv2d_oracle(x, w, pad=1))

    def test_identity_kernel(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(2, 1, 5, 4))
        w = np.ones((1, 1, 1, 1))
        y, _ = ops.conv2d_forward(x, w, padding="same")
        np.testing.assert_allclose(y, x)

    def test_zero_input_gives_bias(self):
        x = np.zeros((1, 2, 4, 4))
        w = np.ones((3, 2, 3, 3))
        b = np.array([1.0, -2.0, 0.5])
        y, _ = ops.conv2d_forward(x, w, b, padding="same")
        for o in range(3):
            np.testing.assert_allclose(y[0, o], b[o])
        y0, _ = ops.conv2d_forward(x, w, padding="same")
        np.testing.assert_allclose(y0, 0.0)

    @pytest.mark.parametrize("shape,co,stride,padding", [
        ((2, 3, 5, 5), 4, 1, "same"),
        ((1, 2, 6, 8), 3, 1, "same"),
        ((2, 3, 6, 6), 2, 2, "valid"),
        ((1, 4, 7, 5), 1, 1, "valid"),
    ])
    def test_matches_oracle(self, shape, co, stride, padding):
        rng = np.random.default_rng(7)
        k = 3 if padding == "same" else 2
        x = rng.normal(size=shape)
        w = rng.normal(size=(co, shape[1], k, k))
        b = rng.normal(size=co)
        y, _ = ops.conv2d_forward(x, w, b, stride, padding)
        pad = k // 2 if padding == "same" else 0
        np.testing.assert_allclose(y, conv2d_oracle(x, w, b, stride, pad), atol=1e-12)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            ops.conv2d_forward(np.zeros((1, 2, 4, 4)), np.ones((1, 3, 3, 3)))

    def test_zero_size_input(self):
        with pytest.raises(ShapeError):
            ops.conv2d_forward(np.zeros((1, 3, 0, 4)), np.ones((1, 3, 3, 3)))


class TestConvTranspose2d:
    def test_single_pixel(self):
        x = np.ones((1, 1, 1, 1))
        w = np.ones((1, 1, 2, 2))
        y, _ = ops.conv2d_transpose_forward(x, w, stride=2)
        np.testing.assert_allclose(y, np.ones((1, 1, 2, 2)))

    def test_2x2_block_upsample(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
        w = np.ones((1, 1, 2, 2))
        y, _ = ops.conv2d_transpose_forward(x, w, stride=2)
        expected = np.array([
            [1, 1, 2, 2],
            [1, 1, 2, 2],
            [3, 3, 4, 4],
            [3, 3, 4, 4],
        ], dtype=float).reshape(1, 1, 4, 4)
        np.testing.assert_allclose(y, expected)

    def test_zeros(self):
        y, _ = ops.conv2d_transpose_forward(np.zeros((1, 3, 4, 4)), np.ones((3, 2, 2, 2)))
        np.testing.assert_allclose(y, 0.0)

    @pytest.mark.parametrize("shape,co", [((1, 2, 3, 3), 2), ((2, 3, 4, 5), 1)])
    def test_matches_scatter_oracle(self, shape, co):
        rng = np.random.default_rng(3)
        x = rng.normal(size=shape)
        w = rng.normal(size=(shape[1], co, 2, 2))
        b = rng.normal(size=co)
        y, _ = ops.conv2d_transpose_forward(x, w, b, stride=2)
        np.testing.assert_allclose(y, conv2d_transpose_oracle(x, w, b), atol=1e-12)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            ops.conv2d_transpose_forward(np.zeros((1, 2, 4, 4)), np.ones((3, 1, 2, 2)))


class TestAdjointIdentity:
    def test_conv_stride2_and_transpose_are_adjoint(self):
        # <conv(x, k), y> == <x, convT(y, k)> with the very same kernel array
        rng = np.random.default_rng(11)
        for _ in range(20):
            ci, co = rng.integers(1, 4, size=2)
            h, w = 2 * rng.integers(1, 5), 2 * rng.integers(1, 5)
            x = rng.normal(size=(1, ci, h, w))
            k = rng.normal(size=(co, ci, 2, 2))
            y = rng.normal(size=(1, co, h // 2, w // 2))
            conv_out, _ = ops.conv2d_forward(x, k, stride=2, padding="valid")
            tr_out, _ = ops.conv2d_transpose_forward(y, k, stride=2)
            lhs = float((conv_out * y).sum())
            rhs = float((x * tr_out).sum())
            assert lhs == pytest.approx(rhs, abs=1e-10)


class TestMaxPool2:
    def test_single_window(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
        y, _ = ops.maxpool2_forward(x)
        assert y.shape == (1, 1, 1, 1)
        assert y[0, 0, 0, 0] == 4.0

    def test_constant_input(self):
        x = np.full((1, 2, 4, 6), 3.25)
        y, _ = ops.maxpool2_forward(x)
        assert y.shape == (1, 2, 2, 3)
        np.testing.assert_allclose(y, 3.25)

    def test_matches_window_oracle(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(2, 3, 4, 4))
        y, _ = ops.maxpool2_forward(x)
        np.testing.assert_allclose(y, maxpool2_oracle(x))

    def test_odd_dims_rejected(self):
        with pytest.raises(ShapeError):
            ops.maxpool2_forward(np.zeros((1, 1, 3, 4)))

    def test_tie_routes_to_first_in_row_major(self):
        x = np.zeros((1, 1, 2, 2))
        _, (idx, _) = ops.maxpool2_forward(x)
        assert idx[0, 0, 0, 0] == 0


class TestActivations:
    def test_sigmoid_at_zero(self):
        y, _ = ops.sigmoid_forward(np.zeros((1, 1, 1, 1)))
        assert y[0, 0, 0, 0] == pytest.approx(0.5)

    def test_sigmoid_backward_at_zero(self):
        y, cache = ops.sigmoid_forward(np.zeros((1, 1, 1, 1)))
        g = ops.sigmoid_backward(np.ones_like(y), cache)
        assert g[0, 0, 0, 0] == pytest.approx(0.25)

    def test_sigmoid_stable_at_extremes(self):
        x = np.array([[-1e4, 1e4]], dtype=np.float64).reshape(1, 1, 1, 2)
        y, _ = ops.sigmoid_forward(x)
        assert np.isfinite(y).all()
        # strictly inside (0, 1) even where exp underflows
        assert 0.0 < y[0, 0, 0, 0] < 1e-30
        assert 0.5 < y[0, 0, 0, 1] < 1.0

    def test_relu(self):
        x = np.array([-3.0, 3.0]).reshape(1, 1, 1, 2)
        y, _ = ops.relu_forward(x)
        np.testing.assert_allclose(y.ravel(), [0.0, 3.0])

    def test_relu_range_property(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(2, 2, 4, 4))
        y, _ = ops.relu_forward(x)
        assert (y >= 0).all()
        np.testing.assert_allclose(np.minimum(x, 0) + y, x)


class TestConcat:
    def test_shapes(self):
        a = np.zeros((1, 2, 4, 4))
        b = np.zeros((1, 3, 4, 4))
        y, _ = ops.concat_channels_forward(a, b)
        assert y.shape == (1, 5, 4, 4)

    def test_empty_channel_side(self):
        a = np.random.default_rng(0).normal(size=(1, 2, 3, 3))
        b = np.zeros((1, 0, 3, 3))
        y, _ = ops.concat_channels_forward(a, b)
        np.testing.assert_allclose(y, a)

    def test_backward_splits_ones(self):
        a = np.zeros((1, 2, 3, 3))
        b = np.zeros((1, 4, 3, 3))
        y, ca = ops.concat_channels_forward(a, b)
        da, db = ops.concat_channels_backward(np.ones_like(y), ca)
        np.testing.assert_allclose(da, 1.0)
        np.testing.assert_allclose(db, 1.0)
        assert da.shape == a.shape and db.shape == b.shape

    def test_spatial_mismatch(self):
        with pytest.raises(ShapeError):
            ops.concat_channels_forward(np.zeros((1, 1, 4, 4)), np.zeros((1, 1, 4, 5)))


class TestBatchNorm2d:
    def test_constant_channel_maps_to_zero(self):
        x = np.full((2, 3, 4, 4), 7.0)
        g, b = np.ones(3), np.zeros(3)
        rm, rv = np.zeros(3), np.ones(3)
        y, _ = ops.batchnorm2d_forward(x, g, b, rm, rv, train=True)
        np.testing.assert_allclose(y, 0.0, atol=1e-6)

    def test_normalizes_mean_and_variance(self):
        rng = np.random.default_rng(13)
        x = rng.normal(2.0, 3.0, size=(2, 3, 8, 8))
        g, b = np.ones(3), np.zeros(3)
        rm, rv = np.zeros(3), np.ones(3)
        y, _ = ops.batchnorm2d_forward(x, g, b, rm, rv, train=True)
        mean = y.mean(axis=(0, 2, 3))
        var = y.var(axis=(0, 2, 3))
        assert np.abs(mean).max() < 1e-6
        np.testing.assert_allclose(var, 1.0, atol=1e-4)

    def test_eval_before_training_uses_init_stats(self):
        x = np.array([[[[2.0, 4.0], [6.0, 8.0]]]])
        g, b = np.ones(1), np.zeros(1)
        rm, rv = np.zeros(1), np.ones(1)
        y, _ = ops.batchnorm2d_forward(x, g, b, rm, rv, train=False)
        np.testing.assert_allclose(y, x / np.sqrt(1.0 + ops.BN_EPS), rtol=1e-6)

    def test_running_stats_updated(self):
        rng = np.random.default_rng(17)
        x = rng.normal(5.0, 2.0, size=(4, 2, 8, 8))
        g, b = np.ones(2), np.zeros(2)
        rm, rv = np.zeros(2), np.ones(2)
        ops.batchnorm2d_forward(x, g, b, rm, rv, train=True, momentum=1.0)
        np.testing.assert_allclose(rm, x.mean(axis=(0, 2, 3)))
        np.testing.assert_allclose(rv, x.var(axis=(0, 2, 3)))

    def test_train_needs_two_values(self):
        with pytest.raises(ShapeError):
            ops.batchnorm2d_forward(np.zeros((1, 1, 1, 1)), np.ones(1), np.zeros(1),
                                    np.zeros(1), np.ones(1), train=True)


class TestShapeProperties:
    def test_random_shape_arithmetic(self):
        rng = np.random.default_rng(23)
        for _ in range(25):
            n = int(rng.integers(1, 3))
            c = int(rng.integers(1, 5))
            h = 2 * int(rng.integers(1, 7))
            w = 2 * int(rng.integers(1, 7))
            x = rng.normal(size=(n, c, h, w))
            y, _ = ops.relu_forward(x)
            assert y.shape == x.shape
            y, _ = ops.sigmoid_forward(x)
            assert y.shape == x.shape
            y, _ = ops.maxpool2_forward(x)
            assert y.shape == (n, c, h // 2, w // 2)
            c2 = int(rng.integers(0, 4))
            y, _ = ops.concat_channels_forward(x, rng.normal(size=(n, c2, h, w)))
            assert y.shape == (n, c + c2, h, w)

    def test_no_nan_for_finite_inputs(self):
        rng = np.random.default_rng(29)
        x = rng.normal(size=(1, 2, 4, 4)) * 1e6
        for fwd in (ops.relu_forward, ops.sigmoid_forward, ops.maxpool2_forward):
            y, _ = fwd(x)
            assert np.isfinite(y).all()
