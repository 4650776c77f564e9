"""The three export operations.

Each writes its files plus the shared manifest into the output
directory and returns a small report dict for the CLI. Unreadable
images never abort a run: the row is skipped and recorded in the
manifest. Missing detector weights do abort, since every detection in
the corpus would be wrong in the same way.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .detect import load_detector
from .encode import EMBEDDING_DIM, Encoder, GridEncoder, load_rgb
from .errors import ExportError
from .formats import (
    atomic_write,
    embeddings_bytes,
    jsonl_bytes,
    load_manifest,
    read_metadata,
    save_manifest,
    sha256_hex,
)

logger = logging.getLogger("exporter")

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".webp")

_CATALOG_FIELDS = ("title", "description", "fabric", "gender", "color", "category")


def _list_images(image_dir: Path) -> list[Path]:
    if not image_dir.is_dir():
        raise ExportError(f"image directory not found: {image_dir}")
    return sorted(
        p for p in image_dir.iterdir()
        if p.is_file() and p.suffix.lower() in _IMAGE_SUFFIXES
    )


def export_embeddings(image_dir: str | Path, metadata_path: str | Path,
                      out_dir: str | Path, encoder: Encoder | None = None) -> dict:
    """Encode every metadata row's image; emit catalog.jsonl + embeddings.bin."""
    image_dir, out_dir = Path(image_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    encoder = encoder or GridEncoder()

    rows = read_metadata(metadata_path)
    catalog: list[dict] = []
    vectors: list[np.ndarray] = []
    skipped: list[dict] = []
    warnings: list[str] = []
    seen_paths: set[str] = set()
    for row in rows:
        image_name = str(row["image"])
        if image_name in seen_paths:
            message = f"duplicate image path {image_name!r}: keeping the first row"
            warnings.append(message)
            logger.warning(message)
            continue
        seen_paths.add(image_name)
        try:
            image = load_rgb(image_dir / image_name)
        except ExportError as exc:
            skipped.append({"id": str(row["id"]), "image": image_name,
                            "reason": str(exc)})
            logger.warning("skipping %s: %s", image_name, exc)
            continue
        vectors.append(encoder.encode(image))
        catalog.append({
            "id": str(row["id"]),
            **{f: str(row.get(f, "")) for f in _CATALOG_FIELDS},
        })

    matrix = (np.stack(vectors) if vectors
              else np.zeros((0, EMBEDDING_DIM), dtype=np.float32))
    catalog_blob = jsonl_bytes(catalog)
    embeddings_blob = embeddings_bytes(matrix)
    atomic_write(out_dir / "catalog.jsonl", catalog_blob)
    atomic_write(out_dir / "embeddings.bin", embeddings_blob)

    manifest = load_manifest(out_dir)
    manifest["files"]["catalog.jsonl"] = {
        "count": len(catalog), "sha256": sha256_hex(catalog_blob),
    }
    manifest["files"]["embeddings.bin"] = {
        "count": int(matrix.shape[0]), "dim": int(matrix.shape[1]),
        "sha256": sha256_hex(embeddings_blob),
    }
    manifest["encoder"] = encoder.identifier
    manifest["skipped"]["embeddings"] = skipped
    manifest["warnings"]["embeddings"] = warnings
    save_manifest(out_dir, manifest)
    return {"rows": len(catalog), "dim": int(matrix.shape[1]),
            "skipped": len(skipped), "warnings": len(warnings),
            "out": str(out_dir)}


def export_detections(image_dir: str | Path, weights_path: str | Path,
                      out_dir: str | Path) -> dict:
    """Run the detector over every image; one raw line per readable image."""
    image_dir, out_dir = Path(image_dir), Path(out_dir)
    detector = load_detector(weights_path)  # fatal before any dir is made
    out_dir.mkdir(parents=True, exist_ok=True)

    lines: list[dict] = []
    skipped: list[dict] = []
    for path in _list_images(image_dir):
        try:
            image = load_rgb(path)
        except ExportError as exc:
            skipped.append({"image": path.name, "reason": str(exc)})
            logger.warning("skipping %s: %s", path.name, exc)
            continue
        lines.append({
            "image_id": path.stem,
            "image_path": path.name,
            "detections": detector.detect(image),
        })

    blob = jsonl_bytes(lines)
    atomic_write(out_dir / "detections.jsonl", blob)

    manifest = load_manifest(out_dir)
    manifest["files"]["detections.jsonl"] = {
        "count": len(lines), "sha256": sha256_hex(blob),
    }
    manifest["detector_weights"] = detector.identifier
    manifest["skipped"]["detections"] = skipped
    manifest["warnings"]["detections"] = []
    save_manifest(out_dir, manifest)
    return {"images": len(lines), "skipped": len(skipped), "out": str(out_dir)}


def export_queries(image_dir: str | Path, out_dir: str | Path,
                   encoder: Encoder | None = None) -> dict:
    """Encode query images into the queries.jsonl sidecar, id = file stem."""
    image_dir, out_dir = Path(image_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    encoder = encoder or GridEncoder()

    lines: list[dict] = []
    skipped: list[dict] = []
    for path in _list_images(image_dir):
        try:
            image = load_rgb(path)
        except ExportError as exc:
            skipped.append({"image": path.name, "reason": str(exc)})
            logger.warning("skipping %s: %s", path.name, exc)
            continue
        vec = encoder.encode(image)
        lines.append({"image_id": path.stem,
                      "embedding": [float(v) for v in vec]})

    blob = jsonl_bytes(lines)
    atomic_write(out_dir / "queries.jsonl", blob)

    manifest = load_manifest(out_dir)
    manifest["files"]["queries.jsonl"] = {
        "count": len(lines), "sha256": sha256_hex(blob),
    }
    manifest["encoder"] = encoder.identifier
    manifest["skipped"]["queries"] = skipped
    manifest["warnings"]["queries"] = []
    save_manifest(out_dir, manifest)
    return {"queries": len(lines), "skipped": len(skipped), "out": str(out_dir)}
