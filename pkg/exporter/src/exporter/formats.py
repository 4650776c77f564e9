"""On-disk formats and the manifest.

The binary embedding format: magic "RAGF", version u32, count u32,
dim u32 (all little-endian), then count x dim float32 rows in catalog
line order. Everything is written atomically (temp file + rename) so a
killed run never leaves a half-written corpus, and the manifest carries
no timestamps so identical inputs produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import ExportError

MANIFEST_NAME = "manifest.json"

_EMBEDDINGS_MAGIC = b"RAGF"
_EMBEDDINGS_VERSION = 1


def atomic_write(path: Path, data: bytes):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except OSError:
        os.unlink(tmp)
        raise


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def embeddings_bytes(matrix: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(np.asarray(matrix), dtype="<f4")
    if arr.ndim != 2:
        raise ExportError(f"expected a 2-D embedding matrix, got shape {arr.shape}")
    header = struct.pack("<4sIII", _EMBEDDINGS_MAGIC, _EMBEDDINGS_VERSION,
                         arr.shape[0], arr.shape[1])
    return header + arr.tobytes()


def jsonl_bytes(rows: list[dict]) -> bytes:
    return "".join(
        json.dumps(row, ensure_ascii=False) + "\n" for row in rows
    ).encode("utf-8")


def read_metadata(path: str | Path) -> list[dict]:
    """Parse the metadata.jsonl that aligns catalog rows with image files."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ExportError(f"cannot read {path}: {exc}") from exc
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ExportError(f"{path}:{lineno}: invalid JSON: {exc}",
                              code="invalid_metadata") from exc
        if not isinstance(obj, dict) or "id" not in obj or "image" not in obj:
            raise ExportError(f"{path}:{lineno}: expected an object with id and image",
                              code="invalid_metadata")
        rows.append(obj)
    return rows


def load_manifest(out_dir: Path) -> dict:
    """Existing manifest in out_dir, or a fresh skeleton.

    Commands update only their own slots, so embeddings, detections,
    and queries exports can share one manifest across runs.
    """
    path = out_dir / MANIFEST_NAME
    if path.is_file():
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            if isinstance(data, dict) and data.get("version") == 1:
                return data
        except (OSError, json.JSONDecodeError):
            pass  # a corrupt manifest is rebuilt, not trusted
    return {"version": 1, "files": {}, "encoder": None, "detector_weights": None,
            "skipped": {}, "warnings": {}}


def save_manifest(out_dir: Path, manifest: dict):
    body = json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False)
    atomic_write(out_dir / MANIFEST_NAME, (body + "\n").encode("utf-8"))
