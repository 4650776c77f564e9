"""A 20-image toy corpus: solid garment rectangles on a gray ground."""

import itertools
import json

import numpy as np
import pytest
from PIL import Image

GROUND = (230, 230, 230)
GARMENTS = [
    ("shirt", "navy", (0, 0, 128), "cotton"),
    ("dress", "red", (255, 0, 0), "silk"),
    ("trouser", "tan", (210, 180, 140), "denim"),
]


def paint(path, rects, size=48):
    """rects: list of ((x0, y0, x1, y1), rgb). Pixel-coordinate rectangles."""
    canvas = np.full((size, size, 3), GROUND, dtype=np.uint8)
    for (x0, y0, x1, y1), rgb in rects:
        canvas[y0:y1, x0:x1] = rgb
    Image.fromarray(canvas).save(path)


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """images/, metadata.jsonl, weights.json, queries/ for 20 toy products."""
    root = tmp_path_factory.mktemp("corpus")
    images = root / "images"
    images.mkdir()

    rows = []
    cycle = itertools.cycle(GARMENTS)
    for i in range(20):
        name = f"toy-{i:03d}.png"
        category, color, rgb, fabric = next(cycle)
        if i == 19:
            paint(images / name, [])  # bare ground, nothing to detect
        else:
            offset = 4 + (i % 5) * 2
            rects = [((offset, offset, offset + 24, offset + 20), rgb)]
            if i % 7 == 3:
                other = GARMENTS[(i + 1) % 3]
                rects.append(((30, 30, 46, 46), other[2]))
            paint(images / name, rects)
        gender = "women" if i % 2 == 0 else "men"
        rows.append({
            "id": f"toy-{i:03d}",
            "image": name,
            "title": f"{color.title()} {fabric} {category}",
            "description": f"A {color} {category} in soft {fabric}.",
            "fabric": fabric,
            "gender": gender,
            "color": color,
            "category": category,
        })

    metadata = root / "metadata.jsonl"
    metadata.write_text(
        "".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8"
    )

    weights = root / "weights.json"
    weights.write_text(json.dumps({
        "classes": {
            name: {"rgb": list(rgb), "max_distance": 60.0}
            for name, _, rgb, _ in GARMENTS
        },
        "min_pixels": 25,
    }), encoding="utf-8")

    queries = root / "queries"
    queries.mkdir()
    for name in ("toy-000.png", "toy-001.png"):
        (queries / name).write_bytes((images / name).read_bytes())

    return root
