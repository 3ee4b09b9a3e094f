"""Central finite-difference verification of every hand-derived backward pass.

``check_gradients`` is the generic engine; ``grad_check`` dispatches it over
the fixed op set by name so the acceptance suite (and anyone touching the
kernels) can audit all gradients in one call. Everything runs in double
precision with step 1e-5.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import losses, ops

FD_STEP = 1e-5


@dataclass
class GradCheckReport:
    op: str
    max_rel_err: float
    per_input: dict = field(default_factory=dict)

    def ok(self, tolerance: float = 1e-4) -> bool:
        return self.max_rel_err < tolerance


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1.0)
    return float((np.abs(analytic - numeric) / denom).max(initial=0.0))


def check_gradients(f: Callable[[dict], tuple], inputs: dict,
                    step: float = FD_STEP, op: str = "op") -> GradCheckReport:
    """Compare analytic gradients to central differences, element by element.

    ``f`` maps the input dict to ``(scalar_loss, grads)`` with ``grads``
    keyed like ``inputs``. Inputs are perturbed in place one element at a
    time; all arrays must be float64.
    """
    _, analytic = f(inputs)
    per_input = {}
    for name, arr in inputs.items():
        numeric = np.zeros_like(arr)
        flat = arr.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi, _ = f(inputs)
            flat[i] = orig - step
            lo, _ = f(inputs)
            flat[i] = orig
            nflat[i] = (hi - lo) / (2.0 * step)
        per_input[name] = _rel_err(analytic[name], numeric)
    return GradCheckReport(op, max(per_input.values(), default=0.0), per_input)


def _projection(rng: np.random.Generator, shape) -> np.ndarray:
    # fixed random cotangent turns a tensor-valued op into a scalar objective
    return rng.normal(size=shape)


def _conv2d_case(shape, rng, stride=1, padding="same", ksize=3, out_ch=2):
    n, c, h, w = shape
    inputs = {
        "x": rng.normal(size=shape),
        "w": rng.normal(size=(out_ch, c, ksize, ksize)) * 0.5,
        "b": rng.normal(size=out_ch),
    }
    proj = {}

    def f(v):
        y, cache = ops.conv2d_forward(v["x"], v["w"], v["b"], stride, padding)
        if "r" not in proj:
            proj["r"] = _projection(rng, y.shape)
        dx, dw, db = ops.conv2d_backward(proj["r"], cache)
        return float((y * proj["r"]).sum()), {"x": dx, "w": dw, "b": db}

    return f, inputs


def _conv2d_transpose_case(shape, rng, stride=2, ksize=2, out_ch=2):
    n, c, h, w = shape
    inputs = {
        "x": rng.normal(size=shape),
        "w": rng.normal(size=(c, out_ch, ksize, ksize)) * 0.5,
        "b": rng.normal(size=out_ch),
    }
    proj = {}

    def f(v):
        y, cache = ops.conv2d_transpose_forward(v["x"], v["w"], v["b"], stride)
        if "r" not in proj:
            proj["r"] = _projection(rng, y.shape)
        dx, dw, db = ops.conv2d_transpose_backward(proj["r"], cache)
        return float((y * proj["r"]).sum()), {"x": dx, "w": dw, "b": db}

    return f, inputs


def _maxpool2_case(shape, rng):
    # well-separated values keep finite differencing away from argmax ties
    x = rng.permutation(np.arange(np.prod(shape), dtype=np.float64))
    inputs = {"x": (x * 0.37).reshape(shape)}
    proj = {}

    def f(v):
        y, cache = ops.maxpool2_forward(v["x"])
        if "r" not in proj:
            proj["r"] = _projection(rng, y.shape)
        return float((y * proj["r"]).sum()), {"x": ops.maxpool2_backward(proj["r"], cache)}

    return f, inputs


def _batchnorm2d_case(shape, rng):
    c = shape[1]
    inputs = {
        "x": rng.normal(size=shape),
        "gamma": rng.normal(size=c) * 0.5 + 1.0,
        "beta": rng.normal(size=c) * 0.5,
    }
    proj = {}

    def f(v):
        rm, rv = np.zeros(c), np.ones(c)
        y, cache = ops.batchnorm2d_forward(v["x"], v["gamma"], v["beta"], rm, rv, train=True)
        if "r" not in proj:
            proj["r"] = _projection(rng, y.shape)
        dx, dg, db = ops.batchnorm2d_backward(proj["r"], cache)
        return float((y * proj["r"]).sum()), {"x": dx, "gamma": dg, "beta": db}

    return f, inputs


def _sigmoid_bce_case(shape, rng):
    inputs = {"z": rng.normal(size=shape) * 2.0}
    target = (rng.random(shape) < 0.5).astype(np.float64)

    def f(v):
        y, cache = ops.sigmoid_forward(v["z"])
        loss, dy = losses.bce_loss(target, y)
        return loss, {"z": ops.sigmoid_backward(dy, cache)}

    return f, inputs


def _dice_case(shape, rng):
    # keep predictions comfortably inside (0,1)
    inputs = {"yhat": rng.uniform(0.05, 0.95, size=shape)}
    target = (rng.random(shape) < 0.5).astype(np.float64)

    def f(v):
        loss, dy = losses.dice_loss(target, v["yhat"])
        return loss, {"yhat": dy}

    return f, inputs


_CASES = {
    "conv2d": _conv2d_case,
    "conv2d_transpose": _conv2d_transpose_case,
    "maxpool2": _maxpool2_case,
    "batchnorm2d": _batchnorm2d_case,
    "sigmoid_bce": _sigmoid_bce_case,
    "dice": _dice_case,
}

GRAD_CHECK_OPS = tuple(_CASES)


def grad_check(op: str, shape=(2, 3, 6, 6), tolerance: float = 1e-4,
               seed: int = 0, **kwargs) -> GradCheckReport:
    """Run the finite-difference audit for one named op on a random case."""
    if op not in _CASES:
        raise ValueError(f"unknown op {op!r}; choose from {sorted(_CASES)}")
    rng = np.random.default_rng(seed)
    f, inputs = _CASES[op](shape, rng, **kwargs)
    report = check_gradients(f, inputs, op=op)
    return report
