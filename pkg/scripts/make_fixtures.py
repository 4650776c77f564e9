"""Regenerate the committed test fixtures.

Everything here is deterministic (fixed seeds, synthetic pixels), so the
fixture files are reproducible byte for byte:

    python scripts/make_fixtures.py

writes into tests/fixtures/.
"""

import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from fashionpost.retrieval import build_index, load_catalog, save_embeddings, save_index  # noqa: E402

FIXTURES = ROOT / "tests" / "fixtures"

NAVY = (0, 0, 128)
TAN = (210, 180, 140)
WHITE = (255, 255, 255)

CATALOG = [
    {"id": "cat-001", "title": "Classic navy cotton shirt",
     "description": "A wardrobe staple in breathable cotton. Pairs with everything.",
     "fabric": "cotton", "gender": "women", "color": "navy", "category": "shirt"},
    {"id": "cat-002", "title": "Sky blue oxford shirt",
     "description": "Crisp oxford weave for workdays and weekends.",
     "fabric": "cotton", "gender": "women", "color": "blue", "category": "shirt"},
    {"id": "cat-003", "title": "White everyday shirt",
     "description": "Clean lines in soft cotton poplin.",
     "fabric": "cotton", "gender": "women", "color": "white", "category": "shirt"},
    {"id": "cat-004", "title": "Navy slim shirt",
     "description": "Deep navy with a tailored fit.",
     "fabric": "cotton", "gender": "men", "color": "navy", "category": "shirt"},
    {"id": "cat-005", "title": "",
     "description": "Relaxed chino trouser in warm tan. Garment-dyed for depth.",
     "fabric": "cotton", "gender": "men", "color": "tan", "category": "trouser"},
    {"id": "cat-006", "title": "Tapered tan trouser",
     "description": "Smart-casual trouser with a soft brushed finish.",
     "fabric": "cotton", "gender": "women", "color": "tan", "category": "trouser"},
    {"id": "cat-007", "title": "Silk evening frock",
     "description": "Flowing silk with a delicate sheen.",
     "fabric": "silk", "gender": "women", "color": "maroon", "category": "frock"},
    {"id": "cat-008", "title": "Printed silk dupatta",
     "description": "Lightweight silk dupatta with hand-blocked print.",
     "fabric": "silk", "gender": "women", "color": "crimson", "category": "dupatta"},
    {"id": "cat-009", "title": "Classic Navy Cotton Shirt",
     "description": "Duplicate-title variant for snippet dedup coverage.",
     "fabric": "cotton", "gender": "women", "color": "navy", "category": "shirt"},
    {"id": "cat-010", "title": "Woven wool scarf",
     "description": "Winter-weight scarf in heathered gray.",
     "fabric": "wool", "gender": "men", "color": "gray", "category": "scarf"},
]

DETECTIONS = {
    "image_id": "fixture-001",
    "image_path": "fixture-001.png",
    "detections": [
        # kept: the navy shirt region
        {"class": "shirt", "box": [4.0, 4.0, 34.0, 34.0], "conf": 0.92},
        # suppressed by NMS: heavy overlap with the box above
        {"class": "shirt", "box": [6.0, 4.0, 36.0, 34.0], "conf": 0.90},
        # kept: the tan trouser region
        {"class": "trouser", "box": [8.0, 36.0, 56.0, 60.0], "conf": 0.81},
        # dropped by the confidence filter
        {"class": "dupatta", "box": [40.0, 2.0, 60.0, 20.0], "conf": 0.20},
    ],
}


def make_image(path: Path):
    img = np.full((64, 64, 3), WHITE, dtype=np.uint8)
    img[6:32, 6:32] = NAVY  # shirt body inside the first box
    img[36:60, 8:56] = TAN  # trouser body
    Image.fromarray(img).save(path)


def make_embeddings(rng: np.random.Generator, n: int, dim: int = 512) -> np.ndarray:
    raw = rng.standard_normal((n, dim))
    return raw / np.linalg.norm(raw, axis=1, keepdims=True)


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)

    make_image(FIXTURES / "fixture-001.png")

    with open(FIXTURES / "detections.jsonl", "w", encoding="utf-8") as fh:
        fh.write(json.dumps(DETECTIONS) + "\n")

    with open(FIXTURES / "catalog.jsonl", "w", encoding="utf-8") as fh:
        for row in CATALOG:
            fh.write(json.dumps(row) + "\n")

    rng = np.random.default_rng(1234)
    matrix = make_embeddings(rng, len(CATALOG))
    save_embeddings(FIXTURES / "embeddings.bin", matrix)

    # query leaning toward the cotton/women shirts so votes are decisive
    lean = [i for i, row in enumerate(CATALOG)
            if row["fabric"] == "cotton" and row["gender"] == "women"]
    query = matrix[lean].mean(axis=0) + 0.05 * rng.standard_normal(512)
    query = query / np.linalg.norm(query)
    with open(FIXTURES / "queries.jsonl", "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"image_id": "fixture-001",
                             "embedding": [float(v) for v in query]}) + "\n")

    records = load_catalog(FIXTURES / "catalog.jsonl")
    index = build_index(records, matrix)
    save_index(index, FIXTURES / "index.bin")

    print(f"fixtures written to {FIXTURES}")


if __name__ == "__main__":
    main()
