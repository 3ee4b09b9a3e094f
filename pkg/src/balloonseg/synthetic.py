"""Synthetic comic pages: the desk-scale stand-in for a real annotated corpus.

Each page gets a textured paper background, a panel grid with dark frames,
caption boxes with text-like strokes (the negative class), and speech
balloons: a white ellipse carrier merged with a triangular tail into a
single polygon outline, dark rim drawn just outside the outline, and thin
interior strokes mimicking text. The ground-truth polygon is exactly the
painted carrier+tail outline, so generated annotations and pixels agree by
construction. Pages are deterministic per seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import PageSample, PolygonAnnotation, fill_polygon

# paint levels chosen so "white carrier" is separable from everything else
BACKGROUND_MAX = 0.92
CAPTION_FILL = (0.88, 0.93)
BALLOON_WHITE = 1.0
INK_DARK = (0.05, 0.2)
STROKE_BUDGET_FRAC = 0.012  # interior text strokes eat at most this area share


@dataclass
class SynthSpec:
    page_w: int = 384
    page_h: int = 256
    panel_rows: tuple = (2, 3)
    panel_cols: tuple = (2, 3)
    balloons_per_page: tuple = (2, 5)
    captions_per_page: tuple = (1, 3)
    balloon_frac_bounds: tuple = (0.0, 0.40)

    def __post_init__(self):
        if self.page_w <= 0 or self.page_h <= 0:
            raise ValueError(f"page dims must be positive, got {self.page_w}x{self.page_h}")


def _rand_range(rng, lo_hi) -> int:
    lo, hi = lo_hi
    return int(rng.integers(lo, hi + 1))


def _rect(canvas, y0, y1, x0, x1, value):
    h, w = canvas.shape[:2]
    y0, y1 = max(0, y0), min(h, y1)
    x0, x1 = max(0, x0), min(w, x1)
    if y1 > y0 and x1 > x0:
        canvas[y0:y1, x0:x1] = value


def _rect_border(canvas, y0, y1, x0, x1, value, t=2):
    _rect(canvas, y0, y0 + t, x0, x1, value)
    _rect(canvas, y1 - t, y1, x0, x1, value)
    _rect(canvas, y0, y1, x0, x0 + t, value)
    _rect(canvas, y0, y1, x1 - t, x1, value)


def _dilate1(mask: np.ndarray) -> np.ndarray:
    """8-neighborhood dilation by one pixel."""
    out = mask.copy()
    out[1:] |= mask[:-1]
    out[:-1] |= mask[1:]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    out[1:, 1:] |= mask[:-1, :-1]
    out[1:, :-1] |= mask[:-1, 1:]
    out[:-1, 1:] |= mask[1:, :-1]
    out[:-1, :-1] |= mask[1:, 1:]
    return out


def balloon_polygon(cx: float, cy: float, rx: float, ry: float,
                    tail_angle: float, tail_len: float,
                    arc_halfwidth: float = 0.22, points: int = 28) -> list:
    """Ellipse carrier spliced with a triangular tail into one closed outline.

    The outline runs the long way around the ellipse between the two tail
    base points, then out to the apex, which sits ``tail_len`` ellipse-radii
    beyond the rim along ``tail_angle``.
    """
    start = tail_angle + arc_halfwidth
    end = tail_angle - arc_halfwidth + 2.0 * math.pi
    verts = []
    for k in range(points):
        a = start + (end - start) * k / (points - 1)
        verts.append((cx + rx * math.cos(a), cy + ry * math.sin(a)))
    apex = (cx + rx * (1.0 + tail_len) * math.cos(tail_angle),
            cy + ry * (1.0 + tail_len) * math.sin(tail_angle))
    verts.append(apex)
    return verts


def _bbox(verts):
    xs = [p[0] for p in verts]
    ys = [p[1] for p in verts]
    return min(xs), min(ys), max(xs), max(ys)


def _boxes_overlap(a, b, margin=3.0):
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    return not (ax1 + margin < bx0 or bx1 + margin < ax0 or
                ay1 + margin < by0 or by1 + margin < ay0)


def _paint_texture(canvas, rng, y0, y1, x0, x1):
    tone = rng.uniform(0.55, 0.85)
    patch = np.full((y1 - y0, x1 - x0, 3), tone, dtype=np.float32)
    style = rng.integers(0, 3)
    if style == 0:
        patch += rng.normal(0.0, 0.02, patch.shape).astype(np.float32)
    elif style == 1:
        step = int(rng.integers(4, 9))
        patch[::step] -= rng.uniform(0.08, 0.2)
    else:
        tint = rng.uniform(-0.08, 0.08, size=3).astype(np.float32)
        patch += tint
    canvas[y0:y1, x0:x1] = np.clip(patch, 0.0, BACKGROUND_MAX)


def _paint_caption(canvas, rng, panel):
    py0, py1, px0, px1 = panel
    cw = int(rng.uniform(0.35, 0.6) * (px1 - px0))
    ch = int(rng.uniform(0.15, 0.3) * (py1 - py0))
    if cw < 14 or ch < 8:
        return None
    x0 = int(rng.integers(px0 + 3, max(px0 + 4, px1 - cw - 3)))
    y0 = int(rng.integers(py0 + 3, max(py0 + 4, py1 - ch - 3)))
    x1, y1 = x0 + cw, y0 + ch
    _rect(canvas, y0, y1, x0, x1, rng.uniform(*CAPTION_FILL))
    _rect_border(canvas, y0, y1, x0, x1, rng.uniform(*INK_DARK), t=1)
    for row in range(y0 + 3, y1 - 3, 3):
        span = int(rng.uniform(0.5, 0.9) * (cw - 6))
        _rect(canvas, row, row + 1, x0 + 3, x0 + 3 + span, rng.uniform(*INK_DARK))
    return (x0, y0, x1, y1)


def _paint_balloon(canvas, ann: PolygonAnnotation, rng) -> None:
    h, w = canvas.shape[:2]
    mask = np.zeros((h, w), dtype=np.uint8)
    fill_polygon(mask, ann.vertices)
    rim = _dilate1(mask.astype(bool)) & ~mask.astype(bool)
    canvas[rim] = rng.uniform(*INK_DARK)
    canvas[mask.astype(bool)] = BALLOON_WHITE
    # text-like strokes, capped so the carrier stays essentially white
    budget = int(STROKE_BUDGET_FRAC * ann.area())
    xs, ys = zip(*ann.vertices[:-1])
    cx, cy = float(np.mean(xs)), float(np.mean(ys))
    rx = (max(xs) - min(xs)) / 2.0
    ry = (max(ys) - min(ys)) / 2.0
    row = int(cy - 0.4 * ry)
    ink = rng.uniform(*INK_DARK)
    while budget > 12 and row < int(cy + 0.4 * ry):
        span = min(budget, int(rng.uniform(0.5, 1.0) * rx))
        if span >= 4:
            x0 = int(cx - span / 2)
            seg = (slice(max(0, row), max(0, row) + 1),
                   slice(max(0, x0), min(w, x0 + span)))
            inside = mask[seg] > 0
            canvas[seg][inside] = ink
            budget -= int(inside.sum())
        row += 3


def generate_synthetic_page(spec: SynthSpec, seed: int, book_id: str = "book00",
                            page_id: str | None = None) -> PageSample:
    """One deterministic synthetic page with ground-truth balloon outlines."""
    rng = np.random.default_rng(np.random.SeedSequence([0x5EED, int(seed)]))
    w, h = spec.page_w, spec.page_h
    canvas = np.empty((h, w, 3), dtype=np.float32)
    paper = rng.uniform(0.78, 0.9)
    canvas[:] = paper
    canvas += rng.normal(0.0, 0.015, canvas.shape).astype(np.float32)
    np.clip(canvas, 0.0, BACKGROUND_MAX, out=canvas)

    # panel grid
    rows = _rand_range(rng, spec.panel_rows)
    cols = _rand_range(rng, spec.panel_cols)
    margin = max(2, int(0.03 * min(h, w)))
    gutter = max(2, int(0.02 * min(h, w)))
    panel_h = (h - 2 * margin - (rows - 1) * gutter) // rows
    panel_w = (w - 2 * margin - (cols - 1) * gutter) // cols
    panels = []
    ink = rng.uniform(*INK_DARK)
    for r in range(rows):
        for c in range(cols):
            y0 = margin + r * (panel_h + gutter)
            x0 = margin + c * (panel_w + gutter)
            y1, x1 = y0 + panel_h, x0 + panel_w
            _paint_texture(canvas, rng, y0, y1, x0, x1)
            _rect_border(canvas, y0, y1, x0, x1, ink, t=2)
            panels.append((y0, y1, x0, x1))

    # captions (negative class)
    occupied = []
    for _ in range(_rand_range(rng, spec.captions_per_page)):
        box = _paint_caption(canvas, rng, panels[int(rng.integers(0, len(panels)))])
        if box is not None:
            occupied.append(box)

    # balloons: sampled anywhere on the page so they can bleed over frames
    annotations = []
    target = _rand_range(rng, spec.balloons_per_page)
    attempts = 0
    while len(annotations) < target and attempts < 60 * max(1, target):
        attempts += 1
        rx = rng.uniform(0.07, 0.15) * w
        ry = rng.uniform(0.08, 0.16) * h
        cx = rng.uniform(rx * 0.8, w - rx * 0.8)
        cy = rng.uniform(ry * 0.8, h - ry * 0.8)
        tail_angle = rng.uniform(0.0, 2.0 * math.pi)
        tail_len = rng.uniform(0.35, 0.7)
        verts = balloon_polygon(cx, cy, rx, ry, tail_angle, tail_len)
        x0, y0, x1, y1 = box = _bbox(verts)
        if x0 < -0.1 * w or y0 < -0.1 * h or x1 > 1.1 * w or y1 > 1.1 * h:
            continue
        if any(_boxes_overlap(box, (bx0, by0, bx1, by1))
               for bx0, by0, bx1, by1 in occupied):
            continue
        ann = PolygonAnnotation(verts, id=f"b{len(annotations)}")
        _paint_balloon(canvas, ann, rng)
        annotations.append(ann)
        occupied.append(box)

    image = np.clip(np.rint(canvas * 255.0), 0, 255).astype(np.uint8)
    pid = page_id if page_id is not None else f"page{seed:05d}"
    return PageSample(annotations=annotations, book_id=book_id, page_id=pid,
                      width=w, height=h, image=image,
                      image_file=f"{pid}.png", meta={"seed": int(seed)})


def generate_corpus(spec: SynthSpec, pages: int, seed: int = 0,
                    pages_per_book: int = 8) -> list[PageSample]:
    """A corpus of pages grouped into synthetic 'books' for stratification."""
    samples = []
    for i in range(pages):
        page_seed = seed * 1_000_003 + i
        samples.append(generate_synthetic_page(
            spec, page_seed,
            book_id=f"book{i // pages_per_book:02d}",
            page_id=f"page{i:04d}"))
    return samples
