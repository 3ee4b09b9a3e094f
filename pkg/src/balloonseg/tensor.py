"""Dense tensors and named parameters for the segmentation network.

Everything downstream works on plain numpy arrays in (n, c, h, w) layout;
``Tensor`` only adds an optional gradient buffer and a few invariant checks.
There is no taped autograd: each op in :mod:`balloonseg.ops` knows its own
backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

DEFAULT_DTYPE = np.float32

# Flipped on in tests / deterministic runs; scans every op output for NaN/Inf.
_FINITE_CHECKS = False


class ShapeError(ValueError):
    """Raised when tensor dimensions do not satisfy an op's contract."""


def set_finite_checks(enabled: bool) -> None:
    """Globally enable per-op finiteness scans (cheap, but off by default)."""
    global _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)


def finite_checks_enabled() -> bool:
    return _FINITE_CHECKS


def check_finite(a: np.ndarray, what: str = "array") -> np.ndarray:
    """Validate that ``a`` contains no NaN/Inf when finite checks are on."""
    if _FINITE_CHECKS and not np.isfinite(a).all():
        raise FloatingPointError(f"non-finite values in {what}")
    return a


class Tensor:
    """A dense real array paired with an optional same-shape gradient buffer.

    Activations are (n, c, h, w); parameters may be any rank (conv kernels
    are 4-D, biases and batch-norm vectors 1-D).
    """

    __slots__ = ("data", "grad")

    def __init__(self, data, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data: np.ndarray = np.ascontiguousarray(arr)
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def add_grad(self, g: np.ndarray) -> None:
        """Accumulate ``g`` into the gradient buffer, allocating on first use."""
        if g.shape != self.data.shape:
            raise ShapeError(
                f"gradient shape {g.shape} does not match data shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def copy(self) -> "Tensor":
        t = Tensor(self.data.copy())
        if self.grad is not None:
            t.grad = self.grad.copy()
        return t

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype))

    def __repr__(self) -> str:  # pragma: no cover - debugging helper
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name})"


@dataclass
class LayerParams:
    """A named, trainable tensor group: kernel plus optional bias.

    ``regularized`` marks kernels that participate in the L2 weight-decay
    penalty (only the final conv of each decoding step).
    """

    name: str
    weights: Tensor
    bias: Optional[Tensor] = None
    regularized: bool = False
    # non-trainable state saved alongside the params (batch-norm running stats)
    buffers: dict = field(default_factory=dict)

    def tensors(self):
        """Yield (suffix, Tensor) pairs for every trainable tensor."""
        yield "weight", self.weights
        if self.bias is not None:
            yield "bias", self.bias

    def zero_grad(self) -> None:
        self.weights.zero_grad()
        if self.bias is not None:
            self.bias.zero_grad()


def as_nchw(x, dtype=None) -> np.ndarray:
    """Coerce ``x`` (Tensor or array) to a 4-D float array, validating rank."""
    arr = x.data if isinstance(x, Tensor) else np.asarray(x)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    if arr.ndim != 4:
        raise ShapeError(f"expected (n, c, h, w) input, got shape {arr.shape}")
    return arr
