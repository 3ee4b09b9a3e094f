"""Annotation ingestion, mask rasterization, and image preparation.

Annotation files are a minimal polygon-per-balloon XML:

    <corpus>
      <page image="page0001.png" book="book00" w="384" h="256">
        <balloon id="b0"><pt x="10.0" y="12.5"/>...</balloon>
      </page>
    </corpus>

Masks use even-odd pixel-center sampling, which stays well-defined for the
self-intersecting outlines human annotators produce.
"""

from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

MASK_DTYPE = np.float32


@dataclass
class PolygonAnnotation:
    """A closed balloon outline in source-image pixel coordinates."""

    vertices: list
    id: str = ""
    cls: str = "balloon"

    def __post_init__(self):
        self.vertices = [(float(x), float(y)) for x, y in self.vertices]
        if len(self.vertices) < 3:
            raise ValueError(f"polygon {self.id!r} needs >= 3 vertices, "
                             f"got {len(self.vertices)}")

    def area(self) -> float:
        """Shoelace area (absolute)."""
        v = np.asarray(self.vertices)
        x, y = v[:, 0], v[:, 1]
        return abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))) / 2.0


@dataclass
class PageSample:
    """One comic page: raster (optional until loaded), ground truth, book id."""

    annotations: list
    book_id: str
    page_id: str
    width: int
    height: int
    image: np.ndarray | None = None
    image_file: str = ""
    meta: dict = field(default_factory=dict)


class AnnotationError(ValueError):
    """Malformed annotation XML; message carries the element path."""


# ---------------------------------------------------------------------------
# XML


def parse_annotations(data) -> list[PageSample]:
    """Parse annotation XML (bytes or str) into PageSamples without rasters."""
    try:
        root = ET.fromstring(data)
    except ET.ParseError as e:
        raise AnnotationError(f"malformed XML: {e}") from e
    if root.tag != "corpus":
        raise AnnotationError(f"expected <corpus> root, got <{root.tag}>")
    samples = []
    for pi, page in enumerate(root.iter("page")):
        path = f"corpus/page[{pi}]"
        image_file = page.get("image")
        if not image_file:
            raise AnnotationError(f"{path}: missing image reference")
        book = page.get("book", "")
        try:
            width = int(page.get("w", "0"))
            height = int(page.get("h", "0"))
        except ValueError as e:
            raise AnnotationError(f"{path}: bad w/h attribute: {e}") from e
        annotations = []
        for bi, balloon in enumerate(page.iter("balloon")):
            bpath = f"{path}/balloon[{bi}]"
            pts = []
            for pt in balloon.iter("pt"):
                try:
                    pts.append((float(pt.get("x")), float(pt.get("y"))))
                except (TypeError, ValueError) as e:
                    raise AnnotationError(f"{bpath}: bad vertex: {e}") from e
            if len(pts) < 3:
                raise AnnotationError(f"{bpath}: polygon needs >= 3 vertices, got {len(pts)}")
            annotations.append(PolygonAnnotation(pts, id=balloon.get("id", f"b{bi}")))
        samples.append(PageSample(
            annotations=annotations,
            book_id=book,
            page_id=Path(image_file).stem,
            width=width,
            height=height,
            image_file=image_file,
        ))
    return samples


def serialize_annotations(samples) -> bytes:
    root = ET.Element("corpus")
    for s in samples:
        page = ET.SubElement(root, "page", image=s.image_file or f"{s.page_id}.png",
                             book=s.book_id, w=str(s.width), h=str(s.height))
        for ann in s.annotations:
            balloon = ET.SubElement(page, "balloon", id=ann.id)
            for x, y in ann.vertices:
                ET.SubElement(balloon, "pt", x=repr(float(x)), y=repr(float(y)))
    ET.indent(root)
    return ET.tostring(root, encoding="utf-8", xml_declaration=True)


def load_corpus(xml_path, load_images: bool = True) -> list[PageSample]:
    """Parse an annotation file and pull page rasters from its directory."""
    xml_path = Path(xml_path)
    samples = parse_annotations(xml_path.read_bytes())
    if load_images:
        for s in samples:
            img_path = xml_path.parent / s.image_file
            if not img_path.exists():
                raise AnnotationError(f"page {s.page_id!r}: image file {s.image_file!r} "
                                      f"not found next to {xml_path.name}")
            s.image = load_png(img_path)
            s.height, s.width = s.image.shape[:2]
    return samples


def write_corpus(samples, out_dir, manifest: dict | None = None) -> Path:
    """Write page PNGs plus annotations.xml (and an optional manifest)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for s in samples:
        if s.image is None:
            raise ValueError(f"page {s.page_id!r} has no raster to write")
        if not s.image_file:
            s.image_file = f"{s.page_id}.png"
        save_png(out / s.image_file, s.image)
    (out / "annotations.xml").write_bytes(serialize_annotations(samples))
    if manifest is not None:
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return out / "annotations.xml"


# ---------------------------------------------------------------------------
# rasterization


def fill_polygon(mask: np.ndarray, vertices) -> None:
    """OR the polygon interior into ``mask`` (even-odd, pixel centers)."""
    h, w = mask.shape
    v = np.asarray(vertices, dtype=np.float64)
    x1, y1 = v[:, 0], v[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    keep = y1 != y2
    x1, y1, x2, y2 = x1[keep], y1[keep], x2[keep], y2[keep]
    if x1.size == 0:
        return
    ymin, ymax = np.minimum(y1, y2), np.maximum(y1, y2)
    row_lo = max(0, int(math.floor(ymin.min() - 0.5)))
    row_hi = min(h - 1, int(math.ceil(ymax.max())))
    for row in range(row_lo, row_hi + 1):
        yc = row + 0.5
        hit = (ymin <= yc) & (yc < ymax)
        if not hit.any():
            continue
        xs = x1[hit] + (yc - y1[hit]) * (x2[hit] - x1[hit]) / (y2[hit] - y1[hit])
        xs.sort()
        for a, b in zip(xs[0::2], xs[1::2]):
            lo = max(0, math.ceil(a - 0.5))
            hi = min(w, math.ceil(b - 0.5))
            if hi > lo:
                mask[row, lo:hi] = 1


def rasterize(annotations, out_h: int, out_w: int,
              src_h: int, src_w: int) -> np.ndarray:
    """Union mask of all polygons, vertices scaled from source to mask dims."""
    if out_h <= 0 or out_w <= 0 or src_h <= 0 or src_w <= 0:
        raise ValueError("rasterize needs positive dimensions")
    mask = np.zeros((out_h, out_w), dtype=MASK_DTYPE)
    sx, sy = out_w / src_w, out_h / src_h
    for ann in annotations:
        fill_polygon(mask, [(x * sx, y * sy) for x, y in ann.vertices])
    return mask


# ---------------------------------------------------------------------------
# resize / normalize


def resize_image(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centers; identity when dims match."""
    if out_h <= 0 or out_w <= 0:
        raise ValueError(f"bad target size {out_h}x{out_w}")
    h, w = image.shape[:2]
    if (h, w) == (out_h, out_w):
        return image.copy()
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0).astype(np.float32)
    fx = (xs - x0).astype(np.float32)
    img = image.astype(np.float32)
    if img.ndim == 2:
        img = img[:, :, None]
    top = img[y0][:, x0] * (1 - fx)[None, :, None] + img[y0][:, x1] * fx[None, :, None]
    bot = img[y1][:, x0] * (1 - fx)[None, :, None] + img[y1][:, x1] * fx[None, :, None]
    out = top * (1 - fy)[:, None, None] + bot * fy[:, None, None]
    if image.ndim == 2:
        out = out[:, :, 0]
    if np.issubdtype(image.dtype, np.integer):
        return np.clip(np.rint(out), 0, 255).astype(image.dtype)
    return out.astype(image.dtype)


def normalize(image: np.ndarray) -> np.ndarray:
    """Map 8-bit [0,255] values linearly onto [0,1] float32."""
    return (image.astype(np.float32) / 255.0 if np.issubdtype(image.dtype, np.integer)
            else image.astype(np.float32))


def to_model_input(image: np.ndarray) -> np.ndarray:
    """(h, w, 3) [0,1] float -> (1, 3, h, w) batch."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) image, got {image.shape}")
    return np.ascontiguousarray(image.transpose(2, 0, 1)[None])


def prepare_sample(sample: PageSample, model_h: int, model_w: int):
    """Resize + normalize a page and rasterize its mask at model resolution."""
    if sample.image is None:
        raise ValueError(f"page {sample.page_id!r} has no raster loaded")
    img = normalize(resize_image(sample.image, model_h, model_w))
    mask = rasterize(sample.annotations, model_h, model_w, sample.height, sample.width)
    return img, mask


# ---------------------------------------------------------------------------
# PNG helpers


def load_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def save_png(path, array: np.ndarray) -> None:
    arr = np.asarray(array)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr * 255.0 if arr.max(initial=0.0) <= 1.0 else arr),
                      0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path, format="PNG")


def mask_to_png(path, mask: np.ndarray) -> None:
    save_png(path, (np.asarray(mask) >= 0.5).astype(np.uint8) * 255)
