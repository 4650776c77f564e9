"""Detector output ingestion: confidence filtering, NMS, crops.

The engine does not run a detector; it consumes detections produced
offline and normalizes them into a clean per-image set before color
extraction and retrieval.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .color import ColorDescriptor
from .errors import DataError, DegenerateInputError, MissingImageError
from .fileio import read_text


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in pixel coordinates, corners (min, max) exclusive."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise DegenerateInputError(
                f"box must have positive extent, got {self.as_tuple()}"
            )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)


@dataclass(frozen=True)
class Detection:
    class_name: str
    box: Box
    confidence: float
    colors: ColorDescriptor | None = None

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise DataError(f"confidence out of range: {self.confidence}")


@dataclass
class DetectorConfig:
    confidence_threshold: float = 0.35
    iou_threshold: float = 0.6


def iou(a: Box, b: Box) -> float:
    """Intersection over union; 0.0 for disjoint boxes."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def filter_detections(dets: list[Detection], threshold: float = 0.35) -> list[Detection]:
    """Keep detections with confidence at or above the threshold, order preserved."""
    return [d for d in dets if d.confidence >= threshold]


def nms(dets: list[Detection], iou_threshold: float = 0.6) -> list[Detection]:
    """Class-wise greedy non-maximum suppression.

    Candidates are visited in confidence order (ties keep input order);
    a candidate is suppressed when its IoU with an already kept box of
    the same class exceeds the threshold.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].confidence)
    kept: list[int] = []
    for i in order:
        suppressed = False
        for j in kept:
            if dets[j].class_name != dets[i].class_name:
                continue
            if iou(dets[j].box, dets[i].box) > iou_threshold:
                suppressed = True
                break
        if not suppressed:
            kept.append(i)
    kept.sort()
    return [dets[i] for i in kept]


def crop(image: np.ndarray, box: Box) -> np.ndarray:
    """Extract the sub-raster under a box, clamped to image bounds.

    A box entirely outside the image has no pixels to give and is an
    error rather than an empty array.
    """
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DegenerateInputError(f"expected an HxWx3 image, got shape {arr.shape}")
    h, w = arr.shape[:2]
    x0 = int(np.floor(max(0.0, box.x_min)))
    y0 = int(np.floor(max(0.0, box.y_min)))
    x1 = int(np.ceil(min(float(w), box.x_max)))
    y1 = int(np.ceil(min(float(h), box.y_max)))
    if x1 <= x0 or y1 <= y0:
        raise DegenerateInputError(
            f"box {box.as_tuple()} lies outside a {w}x{h} image"
        )
    return arr[y0:y1, x0:x1]


def load_image(path: str | Path) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise MissingImageError(f"image file not found: {p}")
    try:
        with Image.open(p) as img:
            return np.asarray(img.convert("RGB"))
    except OSError as exc:
        raise MissingImageError(f"image file unreadable: {p}: {exc}") from exc


# ============================================================
# detections.jsonl
# ============================================================


@dataclass(frozen=True)
class ImageDetections:
    image_id: str
    image_path: str
    detections: tuple[Detection, ...]


def _parse_detection(obj: dict, where: str) -> Detection:
    try:
        box = Box(*(float(v) for v in obj["box"]))
        return Detection(class_name=str(obj["class"]), box=box,
                         confidence=float(obj["conf"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{where}: bad detection record: {exc}") from exc


def load_detections(path: str | Path) -> list[ImageDetections]:
    """Parse a detections.jsonl file: one image per line.

    Line schema: {"image_id", "image_path", "detections": [{"class",
    "box": [x_min, y_min, x_max, y_max], "conf"}, ...]}.
    """
    out = []
    for lineno, raw in enumerate(read_text(path).splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        where = f"{path}:{lineno}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{where}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict) or "image_id" not in obj:
            raise DataError(f"{where}: expected an object with image_id")
        dets = tuple(
            _parse_detection(d, where) for d in obj.get("detections", [])
        )
        out.append(ImageDetections(image_id=str(obj["image_id"]),
                                   image_path=str(obj.get("image_path", "")),
                                   detections=dets))
    return out


def with_colors(det: Detection, colors: ColorDescriptor) -> Detection:
    return replace(det, colors=colors)
