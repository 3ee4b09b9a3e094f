"""Forward and backward passes for the fixed layer set of the segmenter.

All kernels are pure functions on numpy arrays returning ``(out, cache)``;
the ``cache`` feeds the matching ``*_backward``. Convolutions run as
im2col + GEMM so the training loop stays CPU-feasible; the backward input
gradient is a col2im scatter, which keeps forward/backward exact adjoints
of each other.

Layer classes at the bottom wrap the kernels for the network graph. They
hold parameters but never forward state: caches live in a per-call ``ctx``
dict, so concurrent eval-mode forwards on one network are safe.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .tensor import DEFAULT_DTYPE, LayerParams, ShapeError, Tensor, check_finite

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def _check_nonempty(x: np.ndarray) -> None:
    if x.ndim != 4:
        raise ShapeError(f"expected 4-D (n, c, h, w) input, got shape {x.shape}")
    if min(x.shape) <= 0:
        raise ShapeError(f"zero-size input {x.shape}")


def _pad_hw(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def _windows(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Strided (n, c, oh, ow, kh, kw) view of all kernel-sized windows."""
    v = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    return v[:, :, ::stride, ::stride]


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int) -> tuple[np.ndarray, int, int]:
    win = _windows(x, kh, kw, stride)
    n, c, oh, ow = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    return np.ascontiguousarray(cols), oh, ow


def _col2im(cols: np.ndarray, out_shape, kh: int, kw: int, stride: int,
            oh: int, ow: int) -> np.ndarray:
    """Adjoint of :func:`_im2col`: scatter-add window columns back onto a grid."""
    n, c, hh, ww = out_shape
    win = cols.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    out = np.zeros(out_shape, dtype=cols.dtype)
    for a in range(kh):
        for b in range(kw):
            out[:, :, a:a + (oh - 1) * stride + 1:stride,
                b:b + (ow - 1) * stride + 1:stride] += win[:, :, :, :, a, b]
    return out


# ---------------------------------------------------------------------------
# conv2d


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: Optional[np.ndarray] = None,
                   stride: int = 1, padding: str = "same"):
    """Cross-correlate ``x`` (n, ci, h, w) with kernels ``w`` (co, ci, kh, kw).

    ``padding="same"`` (odd kernels only) preserves spatial dims at stride 1;
    ``"valid"`` applies no padding.
    """
    _check_nonempty(x)
    co, ci, kh, kw = w.shape
    if x.shape[1] != ci:
        raise ShapeError(f"input has {x.shape[1]} channels, kernel expects {ci}")
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError("same-padding requires odd kernel dims")
        ph, pw = kh // 2, kw // 2
    elif padding == "valid":
        ph = pw = 0
    else:
        raise ValueError(f"unknown padding {padding!r}")
    xp = _pad_hw(x, ph, pw)
    if xp.shape[2] < kh or xp.shape[3] < kw:
        raise ShapeError(f"input {x.shape} smaller than kernel ({kh}, {kw})")
    cols, oh, ow = _im2col(xp, kh, kw, stride)
    y = cols @ w.reshape(co, -1).T
    if b is not None:
        y += b
    n = x.shape[0]
    y = np.ascontiguousarray(y.reshape(n, oh, ow, co).transpose(0, 3, 1, 2))
    cache = (cols, xp.shape, w, stride, (ph, pw), oh, ow, b is not None)
    return check_finite(y, "conv2d output"), cache


def conv2d_backward(dout: np.ndarray, cache):
    cols, xp_shape, w, stride, (ph, pw), oh, ow, has_bias = cache
    co = w.shape[0]
    n = xp_shape[0]
    dmat = dout.transpose(0, 2, 3, 1).reshape(n * oh * ow, co)
    dw = (dmat.T @ cols).reshape(w.shape)
    db = dout.sum(axis=(0, 2, 3)) if has_bias else None
    dcols = dmat @ w.reshape(co, -1)
    dxp = _col2im(dcols, xp_shape, w.shape[2], w.shape[3], stride, oh, ow)
    if ph or pw:
        dxp = dxp[:, :, ph:xp_shape[2] - ph, pw:xp_shape[3] - pw]
    return np.ascontiguousarray(dxp), dw, db


# ---------------------------------------------------------------------------
# conv2d_transpose


def conv2d_transpose_forward(x: np.ndarray, w: np.ndarray,
                             b: Optional[np.ndarray] = None, stride: int = 2):
    """Transposed convolution: the exact adjoint of a valid strided conv2d.

    ``w`` has shape (ci, co, kh, kw) with ci = input channels of this op,
    i.e. the same array a strided conv2d mapping co -> ci channels would use.
    Output spatial dims are (h-1)*stride + kh (= 2h for the 2x2/stride-2
    kernels the decoder uses).
    """
    _check_nonempty(x)
    ci, co, kh, kw = w.shape
    n, c, h, ww_ = x.shape
    if c != ci:
        raise ShapeError(f"input has {c} channels, kernel expects {ci}")
    xmat = x.transpose(0, 2, 3, 1).reshape(n * h * ww_, ci)
    cols = xmat @ w.reshape(ci, -1)
    out_shape = (n, co, (h - 1) * stride + kh, (ww_ - 1) * stride + kw)
    y = _col2im(cols, out_shape, kh, kw, stride, h, ww_)
    if b is not None:
        y += b.reshape(1, co, 1, 1)
    cache = (xmat, x.shape, w, stride, b is not None)
    return check_finite(y, "conv2d_transpose output"), cache


def conv2d_transpose_backward(dout: np.ndarray, cache):
    xmat, x_shape, w, stride, has_bias = cache
    ci, co, kh, kw = w.shape
    n, _, h, ww_ = x_shape
    dcols, oh, ow = _im2col(dout, kh, kw, stride)
    # windows of dout at the input grid positions: oh == h, ow == w
    dw = (xmat.T @ dcols).reshape(w.shape)
    db = dout.sum(axis=(0, 2, 3)) if has_bias else None
    dx = (dcols @ w.reshape(ci, -1).T).reshape(n, h, ww_, ci).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(dx), dw, db


# ---------------------------------------------------------------------------
# pooling / activations / concat


def maxpool2_forward(x: np.ndarray):
    """2x2 max pooling, stride 2. Requires even spatial dims."""
    _check_nonempty(x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2 needs even spatial dims, got {h}x{w}")
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = win.reshape(n, c, h // 2, w // 2, 4)
    # argmax returns the first maximum, i.e. row-major tie-breaking
    idx = flat.argmax(axis=-1)
    y = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(y), (idx, x.shape)


def maxpool2_backward(dout: np.ndarray, cache):
    idx, x_shape = cache
    n, c, h, w = x_shape
    dwin = np.zeros((n, c, h // 2, w // 2, 4), dtype=dout.dtype)
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    dx = dwin.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(dx.reshape(x_shape))


def relu_forward(x: np.ndarray):
    y = np.maximum(x, 0)
    return y, (x > 0)


def relu_backward(dout: np.ndarray, cache):
    return dout * cache


def sigmoid_forward(x: np.ndarray):
    """Numerically stable logistic; large |x| never sees exp overflow.

    Output is clamped to the open interval: saturated values land on the
    closest representable number inside (0, 1) instead of 0.0 / 1.0.
    """
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    fi = np.finfo(y.dtype)
    np.clip(y, fi.tiny, 1.0 - fi.epsneg, out=y)
    return check_finite(y, "sigmoid output"), y


def sigmoid_backward(dout: np.ndarray, cache):
    y = cache
    return dout * y * (1.0 - y)


def concat_channels_forward(a: np.ndarray, b: np.ndarray):
    _check_nonempty(a)
    if b.ndim != 4:
        raise ShapeError(f"expected 4-D input, got shape {b.shape}")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"concat spatial mismatch: {a.shape} vs {b.shape}")
    return np.concatenate([a, b], axis=1), a.shape[1]


def concat_channels_backward(dout: np.ndarray, cache):
    ca = cache
    return np.ascontiguousarray(dout[:, :ca]), np.ascontiguousarray(dout[:, ca:])


# ---------------------------------------------------------------------------
# batch normalization


def batchnorm2d_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                        running_mean: np.ndarray, running_var: np.ndarray,
                        train: bool, momentum: float = BN_MOMENTUM,
                        eps: float = BN_EPS):
    """Per-channel normalization over (n, h, w).

    Train mode normalizes with batch statistics (biased variance) and updates
    the running buffers in place; eval mode uses the running buffers, which
    start at mean 0 / var 1 before any training step.
    """
    _check_nonempty(x)
    n, c, h, w = x.shape
    g = gamma.reshape(1, c, 1, 1)
    if train:
        m = n * h * w
        if m < 2:
            raise ShapeError("batch-norm training needs at least 2 values per channel")
        mu = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
    y = g * xhat + beta.reshape(1, c, 1, 1)
    cache = (xhat, inv_std, gamma, train)
    return check_finite(y, "batchnorm output"), cache


def batchnorm2d_backward(dout: np.ndarray, cache):
    xhat, inv_std, gamma, train = cache
    n, c, h, w = dout.shape
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * gamma.reshape(1, c, 1, 1)
    istd = inv_std.reshape(1, c, 1, 1)
    if not train:
        return dxhat * istd, dgamma, dbeta
    m = n * h * w
    s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
    s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
    dx = istd / m * (m * dxhat - s1 - xhat * s2)
    return dx, dgamma, dbeta


# ---------------------------------------------------------------------------
# layer wrappers


def _he_kernel(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(dtype)


class Conv2d:
    """3x3/1x1 convolution layer with He-initialized kernel and zero bias."""

    def __init__(self, name: str, in_ch: int, out_ch: int, ksize: int = 3,
                 stride: int = 1, padding: str = "same", bias: bool = True,
                 regularized: bool = False, rng: Optional[np.random.Generator] = None,
                 dtype=DEFAULT_DTYPE):
        rng = rng if rng is not None else np.random.default_rng(0)
        w = _he_kernel(rng, (out_ch, in_ch, ksize, ksize), in_ch * ksize * ksize, dtype)
        b = Tensor(np.zeros(out_ch, dtype=dtype)) if bias else None
        self.params = LayerParams(name, Tensor(w), b, regularized=regularized)
        self.stride = stride
        self.padding = padding

    def forward(self, x: np.ndarray, ctx: Optional[dict] = None, train: bool = False):
        b = self.params.bias.data if self.params.bias is not None else None
        y, cache = conv2d_forward(x, self.params.weights.data, b, self.stride, self.padding)
        if ctx is not None:
            ctx[self] = cache
        return y

    def backward(self, dout: np.ndarray, ctx: dict) -> np.ndarray:
        dx, dw, db = conv2d_backward(dout, ctx.pop(self))
        self.params.weights.add_grad(dw)
        if db is not None:
            self.params.bias.add_grad(db)
        return dx


class ConvTranspose2d:
    """2x2 stride-2 transposed convolution: doubles spatial dims."""

    def __init__(self, name: str, in_ch: int, out_ch: int, ksize: int = 2,
                 stride: int = 2, bias: bool = True,
                 rng: Optional[np.random.Generator] = None, dtype=DEFAULT_DTYPE):
        rng = rng if rng is not None else np.random.default_rng(0)
        w = _he_kernel(rng, (in_ch, out_ch, ksize, ksize), in_ch * ksize * ksize, dtype)
        b = Tensor(np.zeros(out_ch, dtype=dtype)) if bias else None
        self.params = LayerParams(name, Tensor(w), b)
        self.stride = stride

    def forward(self, x: np.ndarray, ctx: Optional[dict] = None, train: bool = False):
        b = self.params.bias.data if self.params.bias is not None else None
        y, cache = conv2d_transpose_forward(x, self.params.weights.data, b, self.stride)
        if ctx is not None:
            ctx[self] = cache
        return y

    def backward(self, dout: np.ndarray, ctx: dict) -> np.ndarray:
        dx, dw, db = conv2d_transpose_backward(dout, ctx.pop(self))
        self.params.weights.add_grad(dw)
        if db is not None:
            self.params.bias.add_grad(db)
        return dx


class BatchNorm2d:
    """Batch norm with gamma/beta parameters and running-stat buffers."""

    def __init__(self, name: str, channels: int, momentum: float = BN_MOMENTUM,
                 eps: float = BN_EPS, dtype=DEFAULT_DTYPE):
        self.params = LayerParams(
            name,
            Tensor(np.ones(channels, dtype=dtype)),
            Tensor(np.zeros(channels, dtype=dtype)),
        )
        self.params.buffers["running_mean"] = np.zeros(channels, dtype=dtype)
        self.params.buffers["running_var"] = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x: np.ndarray, ctx: Optional[dict] = None, train: bool = False):
        y, cache = batchnorm2d_forward(
            x, self.params.weights.data, self.params.bias.data,
            self.params.buffers["running_mean"], self.params.buffers["running_var"],
            train, self.momentum, self.eps)
        if ctx is not None:
            ctx[self] = cache
        return y

    def backward(self, dout: np.ndarray, ctx: dict) -> np.ndarray:
        dx, dgamma, dbeta = batchnorm2d_backward(dout, ctx.pop(self))
        self.params.weights.add_grad(dgamma)
        self.params.bias.add_grad(dbeta)
        return dx


class MaxPool2:
    def forward(self, x: np.ndarray, ctx: Optional[dict] = None, train: bool = False):
        y, cache = maxpool2_forward(x)
        if ctx is not None:
            ctx[self] = cache
        return y

    def backward(self, dout: np.ndarray, ctx: dict) -> np.ndarray:
        return maxpool2_backward(dout, ctx.pop(self))


class ReLU:
    def forward(self, x: np.ndarray, ctx: Optional[dict] = None, train: bool = False):
        y, cache = relu_forward(x)
        if ctx is not None:
            ctx[self] = cache
        return y

    def backward(self, dout: np.ndarray, ctx: dict) -> np.ndarray:
        return relu_backward(dout, ctx.pop(self))


class Sigmoid:
    def forward(self, x: np.ndarray, ctx: Optional[dict] = None, train: bool = False):
        y, cache = sigmoid_forward(x)
        if ctx is not None:
            ctx[self] = cache
        return y

    def backward(self, dout: np.ndarray, ctx: dict) -> np.ndarray:
        return sigmoid_backward(dout, ctx.pop(self))
