"""Training-time augmentation: HSV hue rotation, integer shifts, flips.

The draw order from the per-sample RNG is fixed (hue, dy, dx, hflip, vflip)
so streams stay aligned across configurations. Geometric transforms apply
identically to image and mask; the hue rotation touches the image only.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np


@dataclass
class AugmentConfig:
    hue_range: float = 0.3
    shift_range: float = 0.2
    hflip: bool = True
    vflip: bool = True

    def __post_init__(self):
        if not 0.0 <= self.hue_range < 1.0:
            raise ValueError(f"hue_range must be in [0,1), got {self.hue_range}")
        if not 0.0 <= self.shift_range < 1.0:
            raise ValueError(f"shift_range must be in [0,1), got {self.shift_range}")


def sample_rng(seed: int, epoch: int, page_id: str) -> np.random.Generator:
    """Per-(run, epoch, page) stream; independent of scheduling order."""
    tag = zlib.crc32(page_id.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([seed, epoch, tag]))


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    d = mx - mn
    h = np.zeros_like(mx)
    nz = d > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        rm = nz & (mx == r)
        h[rm] = ((g[rm] - b[rm]) / d[rm]) % 6.0
        gm = nz & (mx == g) & ~rm
        h[gm] = (b[gm] - r[gm]) / d[gm] + 2.0
        bm = nz & ~rm & ~gm
        h[bm] = (r[bm] - g[bm]) / d[bm] + 4.0
    h /= 6.0
    s = np.where(mx > 0, d / np.maximum(mx, 1e-20), 0.0)
    return np.stack([h, s, mx], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    h6 = (h % 1.0) * 6.0
    i = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    channels = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)]
    out = np.zeros(hsv.shape, dtype=hsv.dtype)
    for k, (rr, gg, bb) in enumerate(channels):
        m = i == k
        out[..., 0][m] = rr[m]
        out[..., 1][m] = gg[m]
        out[..., 2][m] = bb[m]
    return out


def rotate_hue(image: np.ndarray, amount: float) -> np.ndarray:
    """Add ``amount`` (mod 1) to the hue channel; gray pixels are unchanged."""
    if amount == 0.0:
        return image.copy()
    hsv = rgb_to_hsv(image)
    hsv[..., 0] = (hsv[..., 0] + amount) % 1.0
    return hsv_to_rgb(hsv)


def shift2d(a: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Translate by whole pixels, vacated area filled with 0."""
    out = np.zeros_like(a)
    h, w = a.shape[:2]
    if abs(dy) >= h or abs(dx) >= w:
        return out
    src_y = slice(max(0, -dy), h - max(0, dy))
    dst_y = slice(max(0, dy), h - max(0, -dy))
    src_x = slice(max(0, -dx), w - max(0, dx))
    dst_x = slice(max(0, dx), w - max(0, -dx))
    out[dst_y, dst_x] = a[src_y, src_x]
    return out


def augment(image: np.ndarray, mask: np.ndarray, cfg: AugmentConfig,
            rng: np.random.Generator):
    """Apply one random augmentation draw to an image/mask pair.

    ``image`` is (h, w, 3) in [0,1]; ``mask`` is (h, w) binary. Returns new
    arrays; inputs are untouched.
    """
    if image.shape[:2] != mask.shape:
        raise ValueError(f"image {image.shape[:2]} and mask {mask.shape} disagree")
    h, w = mask.shape
    hue = float(rng.uniform(0.0, cfg.hue_range))
    max_dy = int(cfg.shift_range * h)
    max_dx = int(cfg.shift_range * w)
    dy = int(rng.integers(-max_dy, max_dy + 1))
    dx = int(rng.integers(-max_dx, max_dx + 1))
    do_h = bool(cfg.hflip and rng.random() < 0.5)
    do_v = bool(cfg.vflip and rng.random() < 0.5)

    img = rotate_hue(image, hue)
    if dy or dx:
        img = shift2d(img, dy, dx)
        mask = shift2d(mask, dy, dx)
    else:
        mask = mask.copy()
    if do_h:
        img = img[:, ::-1]
        mask = mask[:, ::-1]
    if do_v:
        img = img[::-1]
        mask = mask[::-1]
    return np.ascontiguousarray(img), np.ascontiguousarray(mask)
