"""Image loading and the stand-in visual encoder.

The paper-scale encoder is a CLIP backbone; running one is out of scope
here, so the default encoder derives a deterministic 512-dim vector from
coarse image statistics: per-cell mean colors on a 4x4 grid, pushed
through a fixed random projection and unit-normalized. Visually similar
images land near each other, which is all the downstream retrieval
needs. Anything with an `encode` method and an `identifier` can replace
it; the manifest records the identifier as free text.
"""

from __future__ import annotations

from pathlib import Path
from typing import Protocol

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ExportError

EMBEDDING_DIM = 512

_GRID = 4
_PROJECTION_SEED = 20260501


def load_rgb(path: str | Path) -> np.ndarray:
    """Decode an image file to an (H, W, 3) uint8 array."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise ExportError(f"cannot decode {path}: {exc}", code="unreadable_image") from exc


class Encoder(Protocol):
    identifier: str

    def encode(self, image: np.ndarray) -> np.ndarray: ...


class GridEncoder:
    """Deterministic toy encoder: grid color means -> random projection."""

    identifier = f"toy-grid{_GRID}x{_GRID}-proj-{EMBEDDING_DIM}/v1"

    def __init__(self):
        rng = np.random.default_rng(_PROJECTION_SEED)
        # +1 for a constant bias feature so no image maps to the zero vector
        self._projection = rng.standard_normal((_GRID * _GRID * 3 + 1, EMBEDDING_DIM))

    def encode(self, image: np.ndarray) -> np.ndarray:
        if image.ndim != 3 or image.shape[2] != 3:
            raise ExportError(f"expected an (H, W, 3) image, got {image.shape}")
        if min(image.shape[0], image.shape[1]) < _GRID:
            # a split cell would come up empty and poison the means
            raise ExportError(
                f"image {image.shape[1]}x{image.shape[0]} is smaller than the "
                f"{_GRID}x{_GRID} feature grid"
            )
        features = []
        for rows in np.array_split(image.astype(np.float64) / 255.0, _GRID, axis=0):
            for cell in np.array_split(rows, _GRID, axis=1):
                features.extend(cell.reshape(-1, 3).mean(axis=0))
        features.append(1.0)
        vec = np.asarray(features) @ self._projection
        vec /= np.linalg.norm(vec)
        return vec.astype(np.float32)
