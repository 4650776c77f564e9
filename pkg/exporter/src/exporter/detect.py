"""Stand-in garment detector driven by a weights file.

A real deployment would run a trained detector here. The toy detector
keeps the interface honest: it needs a weights file (missing weights
abort the run), emits raw unfiltered confidences, and produces boxes
clamped to the image. Weights are a JSON object:

    {"classes": {"shirt": {"rgb": [0, 0, 128], "max_distance": 60.0}},
     "min_pixels": 25}

Each class claims the pixels within max_distance of its RGB prototype;
a class with at least min_pixels claimed yields the bounding box of its
pixels, with confidence = claimed pixels inside the box / box area.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ExportError


@dataclass(frozen=True)
class ClassRule:
    name: str
    rgb: tuple[float, float, float]
    max_distance: float


class BlobDetector:
    def __init__(self, rules: list[ClassRule], min_pixels: int, identifier: str):
        self.rules = rules
        self.min_pixels = min_pixels
        self.identifier = identifier

    def detect(self, image: np.ndarray) -> list[dict]:
        """Raw detections in the detections.jsonl per-box schema."""
        pixels = image.astype(np.float64)
        found = []
        for rule in self.rules:
            distance = np.linalg.norm(pixels - np.asarray(rule.rgb), axis=2)
            mask = distance <= rule.max_distance
            if int(mask.sum()) < self.min_pixels:
                continue
            rows, cols = np.nonzero(mask)
            x_min, x_max = float(cols.min()), float(cols.max()) + 1.0
            y_min, y_max = float(rows.min()), float(rows.max()) + 1.0
            inside = mask[int(y_min):int(y_max), int(x_min):int(x_max)]
            conf = float(inside.sum() / inside.size)
            found.append({
                "class": rule.name,
                "box": [x_min, y_min, x_max, y_max],
                "conf": conf,
            })
        return found


def load_detector(weights_path: str | Path) -> BlobDetector:
    path = Path(weights_path)
    if not path.is_file():
        raise ExportError(f"detector weights not found: {path}", code="missing_weights")
    blob = path.read_bytes()
    try:
        data = json.loads(blob)
        rules = [
            ClassRule(name=str(name),
                      rgb=tuple(float(v) for v in spec["rgb"]),
                      max_distance=float(spec["max_distance"]))
            for name, spec in sorted(data["classes"].items())
        ]
        min_pixels = int(data.get("min_pixels", 1))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ExportError(f"bad weights file {path}: {exc}") from exc
    if not rules:
        raise ExportError(f"weights file {path} defines no classes")
    digest = hashlib.sha256(blob).hexdigest()[:12]
    return BlobDetector(rules, min_pixels,
                        identifier=f"toy-color-blobs/v1 {path.name}@sha256:{digest}")
