"""Encoder/decoder network: VGG-16-style encoder, U-Net-style decoder.

The encoder is the convolutional part of VGG-16 (blocks of 2,2,3,3,3 convs,
each followed by 2x2 max pooling); the five pre-pool block outputs are kept
as skip connections. Each decoder step doubles resolution with a 2x2
stride-2 transposed conv, concatenates the matching skip, applies one 3x3
merge conv + ReLU, then batch norm. A 1x1 conv + sigmoid head emits the
per-pixel balloon probability.

Only the merge conv kernel of each decoder step carries the L2 weight-decay
penalty.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import ops
from .tensor import DEFAULT_DTYPE, LayerParams, ShapeError

ENCODER_CONVS_PER_BLOCK = (2, 2, 3, 3, 3)
WIDTH_MULTIPLIERS = (1, 2, 4, 8, 8)


@dataclass
class ModelConfig:
    """Architecture scale. Defaults are desk scale; base_width=64 is full scale."""

    input_h: int = 128
    input_w: int = 192
    base_width: int = 8
    block_widths: Optional[tuple] = None
    l2_lambda: float = 0.001

    def __post_init__(self):
        if self.input_h % 32 or self.input_w % 32:
            raise ShapeError(
                f"input dims must be divisible by 32 (five halvings), "
                f"got {self.input_h}x{self.input_w}")
        if self.block_widths is None:
            self.block_widths = tuple(self.base_width * m for m in WIDTH_MULTIPLIERS)
        self.block_widths = tuple(int(w) for w in self.block_widths)
        if len(self.block_widths) != 5 or min(self.block_widths) <= 0:
            raise ValueError(f"block_widths needs 5 positive entries, got {self.block_widths}")


class _DecoderStep:
    def __init__(self, i: int, in_ch: int, skip_ch: int,
                 rng: np.random.Generator, dtype):
        self.up = ops.ConvTranspose2d(f"dec{i}_up", in_ch, skip_ch, rng=rng, dtype=dtype)
        self.conv = ops.Conv2d(f"dec{i}_conv", 2 * skip_ch, skip_ch,
                               regularized=True, rng=rng, dtype=dtype)
        self.act = ops.ReLU()
        self.bn = ops.BatchNorm2d(f"dec{i}_bn", skip_ch, dtype=dtype)


class Network:
    """The full segmenter with an ordered parameter registry.

    Forward caches live in a per-call ``ctx`` dict, so eval-mode forwards
    (``train=False`` and no ctx) are safe to run concurrently; training
    mutates parameters and batch-norm running stats and needs one writer.
    """

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=DEFAULT_DTYPE):
        self.config = config
        rng = np.random.default_rng(seed)
        widths = config.block_widths

        self.enc_blocks = []
        self.pools = []
        in_ch = 3
        for b, (n_convs, w) in enumerate(zip(ENCODER_CONVS_PER_BLOCK, widths), start=1):
            block = []
            for ci in range(1, n_convs + 1):
                block.append(ops.Conv2d(f"enc{b}_conv{ci}", in_ch, w, rng=rng, dtype=dtype))
                block.append(ops.ReLU())
                in_ch = w
            self.enc_blocks.append(block)
            self.pools.append(ops.MaxPool2())

        # decoder step i upsamples to the resolution of encoder block 5-i+1
        self.dec_steps = []
        dec_in = widths[4]
        for i, skip_ch in enumerate(reversed(widths), start=1):
            self.dec_steps.append(_DecoderStep(i, dec_in, skip_ch, rng, dtype))
            dec_in = skip_ch

        self.head = ops.Conv2d("head", widths[0], 1, ksize=1, rng=rng, dtype=dtype)
        self.sigmoid = ops.Sigmoid()

        self._registry: dict[str, LayerParams] = {}
        for p in self._iter_params():
            if p.name in self._registry:
                raise ValueError(f"duplicate parameter name {p.name!r}")
            self._registry[p.name] = p

    def _iter_params(self):
        for block in self.enc_blocks:
            for layer in block:
                if isinstance(layer, ops.Conv2d):
                    yield layer.params
        for step in self.dec_steps:
            yield step.up.params
            yield step.conv.params
            yield step.bn.params
        yield self.head.params

    @property
    def registry(self) -> dict[str, LayerParams]:
        return self._registry

    def parameters(self):
        return list(self._registry.values())

    def parameter_count(self, prefix: str = "") -> int:
        total = 0
        for p in self._registry.values():
            if not p.name.startswith(prefix):
                continue
            total += p.weights.data.size
            if p.bias is not None:
                total += p.bias.data.size
        return total

    def zero_grad(self) -> None:
        for p in self._registry.values():
            p.zero_grad()

    # ------------------------------------------------------------------
    # forward / backward

    def forward(self, x: np.ndarray, train: bool = False,
                ctx: Optional[dict] = None) -> np.ndarray:
        """Map an (n, 3, H, W) image batch in [0,1] to (n, 1, H, W) probabilities."""
        if x.ndim != 4 or x.shape[1] != 3:
            raise ShapeError(f"expected (n, 3, h, w) input, got {x.shape}")
        if x.shape[2] % 32 or x.shape[3] % 32:
            raise ShapeError(
                f"spatial dims must be divisible by 32, got {x.shape[2]}x{x.shape[3]}")
        skips = []
        h = x
        for block, pool in zip(self.enc_blocks, self.pools):
            for layer in block:
                h = layer.forward(h, ctx, train)
            skips.append(h)
            h = pool.forward(h, ctx, train)
        for j, step in enumerate(self.dec_steps):
            h = step.up.forward(h, ctx, train)
            h, split = ops.concat_channels_forward(h, skips[4 - j])
            if ctx is not None:
                ctx[("concat", j)] = split
            h = step.conv.forward(h, ctx, train)
            h = step.act.forward(h, ctx, train)
            h = step.bn.forward(h, ctx, train)
        h = self.head.forward(h, ctx, train)
        return self.sigmoid.forward(h, ctx, train)

    def backward(self, dpred: np.ndarray, ctx: dict) -> np.ndarray:
        """Propagate a prediction gradient back to the input, accumulating
        parameter gradients along the way. ``ctx`` must come from a forward
        call on this network."""
        d = self.sigmoid.backward(dpred, ctx)
        d = self.head.backward(d, ctx)
        dskips = [None] * 5
        for j in reversed(range(5)):
            step = self.dec_steps[j]
            d = step.bn.backward(d, ctx)
            d = step.act.backward(d, ctx)
            d = step.conv.backward(d, ctx)
            d, dskip = ops.concat_channels_backward(d, ctx.pop(("concat", j)))
            dskips[4 - j] = dskip
            d = step.up.backward(d, ctx)
        for b in reversed(range(5)):
            d = self.pools[b].backward(d, ctx)
            d = d + dskips[b]
            for layer in reversed(self.enc_blocks[b]):
                d = layer.backward(d, ctx)
        return d

    # ------------------------------------------------------------------

    def l2_penalty(self) -> float:
        """lambda * sum of squared kernel values over regularized convs."""
        lam = self.config.l2_lambda
        total = 0.0
        for p in self._registry.values():
            if p.regularized:
                w = p.weights.data
                total += float(np.dot(w.ravel(), w.ravel()))
        return lam * total

    def apply_l2_gradient(self) -> None:
        """Add d(penalty)/dw = 2*lambda*w to each regularized kernel's grad."""
        lam = self.config.l2_lambda
        for p in self._registry.values():
            if p.regularized:
                p.weights.add_grad((2.0 * lam) * p.weights.data)

    # ------------------------------------------------------------------
    # named tensors for serialization

    def state_tensors(self) -> dict[str, np.ndarray]:
        """Ordered name -> array mapping: all parameters plus BN buffers."""
        out: dict[str, np.ndarray] = {}
        for p in self._registry.values():
            for suffix, t in p.tensors():
                out[f"{p.name}.{suffix}"] = t.data
            for bname, arr in p.buffers.items():
                out[f"{p.name}.{bname}"] = arr
        return out

    def load_state_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        """Assign values into the live arrays (shapes already validated)."""
        state = self.state_tensors()
        for name, arr in tensors.items():
            state[name][...] = arr.astype(state[name].dtype, copy=False)
