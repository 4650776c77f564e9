"""Exact cosine retrieval over catalog embeddings, plus attribute voting.

The index is a flat matrix of unit vectors; search is one matmul and a
sort. No approximate structures: downstream confidence numbers inherit
their meaning from the scores being exact.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptIndexError, DataError, InvalidEmbeddingError
from .fileio import read_bytes, read_text

EMBEDDING_DIM = 512

_EMB_MAGIC = b"RAGF"
_EMB_VERSION = 1
_INDEX_MAGIC = b"RAGI"
_INDEX_VERSION = 1

FACET_FIELDS = ("fabric", "gender", "color", "category")


@dataclass(frozen=True)
class CatalogRecord:
    id: str
    title: str = ""
    description: str = ""
    fabric: str = ""
    gender: str = ""
    color: str = ""
    category: str = ""


@dataclass(frozen=True)
class Neighbor:
    id: str
    score: float
    record: CatalogRecord


@dataclass
class VoteConfig:
    temperature: float = 5.0
    attribute_threshold: float = 0.4
    top_k: int = 20


@dataclass(frozen=True)
class AttributePrediction:
    facet: str
    label: str
    confidence: float
    votes: tuple[tuple[str, float], ...]  # (label, summed weight), heaviest first


def normalize(vec) -> np.ndarray:
    """Scale a vector to unit L2 norm. Zero or non-finite input is an error."""
    arr = np.asarray(vec, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidEmbeddingError(f"expected a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidEmbeddingError("embedding contains non-finite values")
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise InvalidEmbeddingError("zero vector cannot be normalized")
    return arr / norm


class Index:
    """Flat exact-cosine index: aligned records and unit row vectors."""

    def __init__(self, records: tuple[CatalogRecord, ...], vectors: np.ndarray):
        self.records = records
        self.vectors = vectors  # (n, dim) float64, rows unit norm
        self.dim = int(vectors.shape[1]) if vectors.size else 0
        # tie-breaking by id needs each row's rank in id order
        order = sorted(range(len(records)), key=lambda i: records[i].id)
        self._id_rank = np.empty(len(records), dtype=np.int64)
        for rank, i in enumerate(order):
            self._id_rank[i] = rank

    def __len__(self) -> int:
        return len(self.records)


def build_index(records: list[CatalogRecord], embeddings) -> Index:
    """Normalize embeddings and pair them with catalog records.

    Rejects duplicate ids, record/embedding count mismatch, and vectors
    of unequal dimension.
    """
    recs = tuple(records)
    vecs = list(embeddings)
    if len(recs) != len(vecs):
        raise DataError(
            f"{len(recs)} records but {len(vecs)} embeddings"
        )
    if not recs:
        raise DataError("cannot build an index from an empty catalog")
    seen: set[str] = set()
    for r in recs:
        if r.id in seen:
            raise DataError(f"duplicate catalog id: {r.id!r}")
        seen.add(r.id)
    dims = {np.asarray(v).shape for v in vecs}
    if len(dims) != 1 or len(next(iter(dims))) != 1:
        raise InvalidEmbeddingError(f"inconsistent embedding shapes: {sorted(dims)}")
    matrix = np.stack([normalize(v) for v in vecs])
    return Index(recs, matrix)


def search(index: Index, query: np.ndarray, k: int) -> list[Neighbor]:
    """Top-k neighbors by cosine score, descending; ties by ascending id.

    The query must already be unit-normalized (see normalize()).
    """
    if k < 1:
        raise DataError(f"k must be at least 1, got {k}")
    q = np.asarray(query, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != index.dim:
        raise InvalidEmbeddingError(
            f"query dim {q.shape} does not match index dim {index.dim}"
        )
    if not np.all(np.isfinite(q)):
        raise InvalidEmbeddingError("query contains non-finite values")
    scores = index.vectors @ q
    order = np.lexsort((index._id_rank, -scores))[: min(k, len(index))]
    return [Neighbor(id=index.records[i].id, score=float(scores[i]),
                     record=index.records[i]) for i in order]


def vote_attribute(neighbors: list[Neighbor], facet: str,
                   cfg: VoteConfig | None = None) -> AttributePrediction:
    """Similarity-weighted vote over neighbor facet labels.

    Each neighbor contributes exp(temperature * score) to its label.
    Neighbors without a value for the facet stay out of the electorate.
    Confidence is the winner's share of the total weight; a winner below
    the attribute threshold is reported as "unknown" with its confidence
    left as computed, so callers can still see how close the vote was.
    """
    cfg = cfg or VoteConfig()
    if facet not in FACET_FIELDS:
        raise DataError(f"unknown facet {facet!r}, expected one of {FACET_FIELDS}")
    pairs = []
    for nb in neighbors:
        value = getattr(nb.record, facet)
        if value:
            pairs.append((value, nb.score))
    if not pairs:
        return AttributePrediction(facet=facet, label="unknown", confidence=0.0, votes=())

    # shift by the max score so the ratio stays stable at high temperature
    s_max = max(s for _, s in pairs)
    shifted: dict[str, float] = {}
    raw: dict[str, float] = {}
    for label, s in pairs:
        shifted[label] = shifted.get(label, 0.0) + math.exp(cfg.temperature * (s - s_max))
        raw[label] = raw.get(label, 0.0) + math.exp(cfg.temperature * s)
    total = sum(shifted.values())
    winner = min(shifted, key=lambda y: (-shifted[y], y))
    confidence = shifted[winner] / total
    votes = tuple(sorted(raw.items(), key=lambda kv: (-kv[1], kv[0])))
    label = winner if confidence >= cfg.attribute_threshold else "unknown"
    return AttributePrediction(facet=facet, label=label, confidence=confidence,
                               votes=votes)


_SENTENCE_END = re.compile(r"[^.!?]*[.!?]?")


def _first_sentence(text: str) -> str:
    m = _SENTENCE_END.match(text.strip())
    return m.group(0).strip() if m else ""


def sample_snippets(neighbors: list[Neighbor], n: int = 5) -> list[str]:
    """Up to n reference snippets from the highest-scoring neighbors.

    A snippet is the record title, or the first sentence of the
    description when the title is blank. Case-insensitive duplicates are
    skipped and the next neighbor backfills.
    """
    if n < 0:
        raise DataError(f"snippet count must be non-negative, got {n}")
    seen: set[str] = set()
    out: list[str] = []
    for nb in sorted(neighbors, key=lambda nb: (-nb.score, nb.id)):
        text = nb.record.title.strip() or _first_sentence(nb.record.description)
        if not text:
            continue
        key = text.lower()
        if key in seen:
            continue
        seen.add(key)
        out.append(text)
        if len(out) == n:
            break
    return out


# ============================================================
# File formats
# ============================================================


def _atomic_write(path: Path, data: bytes):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def load_catalog(path: str | Path) -> list[CatalogRecord]:
    """Read catalog.jsonl. Facet values are lowercased and trimmed here."""
    records = []
    for lineno, raw in enumerate(read_text(path).splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict) or "id" not in obj:
            raise DataError(f"{path}:{lineno}: expected an object with an id")
        records.append(
            CatalogRecord(
                id=str(obj["id"]),
                title=str(obj.get("title", "")),
                description=str(obj.get("description", "")),
                **{f: str(obj.get(f, "") or "").strip().lower() for f in FACET_FIELDS},
            )
        )
    return records


def _catalog_bytes(records: tuple[CatalogRecord, ...]) -> bytes:
    lines = []
    for r in records:
        obj = {"id": r.id, "title": r.title, "description": r.description}
        obj.update({f: getattr(r, f) for f in FACET_FIELDS})
        lines.append(json.dumps(obj, ensure_ascii=False))
    return ("\n".join(lines) + "\n").encode("utf-8")


def save_embeddings(path: str | Path, matrix: np.ndarray):
    """Write the embedding matrix in the binary row-major format."""
    arr = np.ascontiguousarray(np.asarray(matrix), dtype="<f4")
    if arr.ndim != 2:
        raise DataError(f"expected a 2-D matrix, got shape {arr.shape}")
    header = struct.pack("<4sIII", _EMB_MAGIC, _EMB_VERSION, arr.shape[0], arr.shape[1])
    _atomic_write(Path(path), header + arr.tobytes(order="C"))


def _parse_embeddings(blob: bytes, where: str) -> np.ndarray:
    if len(blob) < 16:
        raise DataError(f"{where}: truncated embeddings header")
    magic, version, count, dim = struct.unpack("<4sIII", blob[:16])
    if magic != _EMB_MAGIC:
        raise DataError(f"{where}: bad magic {magic!r}")
    if version != _EMB_VERSION:
        raise DataError(f"{where}: unsupported version {version}")
    expected = 16 + 4 * count * dim
    if len(blob) != expected:
        raise DataError(f"{where}: expected {expected} bytes, got {len(blob)}")
    flat = np.frombuffer(blob, dtype="<f4", offset=16)
    return flat.reshape(count, dim).astype(np.float64)


def load_embeddings(path: str | Path) -> np.ndarray:
    return _parse_embeddings(read_bytes(path), str(path))


def save_index(index: Index, path: str | Path):
    """Fuse catalog and embeddings into one file with a checksum trailer."""
    catalog = _catalog_bytes(index.records)
    emb = np.ascontiguousarray(index.vectors, dtype="<f4")
    emb_blob = struct.pack("<4sIII", _EMB_MAGIC, _EMB_VERSION,
                           emb.shape[0], emb.shape[1]) + emb.tobytes(order="C")
    payload = (
        struct.pack("<4sIQ", _INDEX_MAGIC, _INDEX_VERSION, len(catalog))
        + catalog
        + emb_blob
    )
    _atomic_write(Path(path), payload + hashlib.sha256(payload).digest())


def load_index(path: str | Path) -> Index:
    """Load a fused index file, verifying checksum and unit norms."""
    blob = read_bytes(path)
    where = str(path)
    if len(blob) < 16 + 32:
        raise CorruptIndexError(f"{where}: file too short to be an index")
    payload, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise CorruptIndexError(f"{where}: checksum mismatch")
    magic, version, catalog_len = struct.unpack("<4sIQ", payload[:16])
    if magic != _INDEX_MAGIC:
        raise CorruptIndexError(f"{where}: bad magic {magic!r}")
    if version != _INDEX_VERSION:
        raise CorruptIndexError(f"{where}: unsupported version {version}")
    if 16 + catalog_len > len(payload):
        raise CorruptIndexError(f"{where}: catalog section overruns file")
    catalog_blob = payload[16 : 16 + catalog_len]
    try:
        records = _records_from_bytes(catalog_blob, where)
        vectors = _parse_embeddings(payload[16 + catalog_len :], where)
    except DataError as exc:
        raise CorruptIndexError(str(exc)) from exc
    if vectors.shape[0] != len(records):
        raise CorruptIndexError(
            f"{where}: {len(records)} records but {vectors.shape[0]} vectors"
        )
    norms = np.linalg.norm(vectors, axis=1)
    if vectors.size and float(np.max(np.abs(norms - 1.0))) > 1e-6:
        raise CorruptIndexError(f"{where}: stored vectors are not unit norm")
    return Index(tuple(records), vectors)


def _records_from_bytes(blob: bytes, where: str) -> list[CatalogRecord]:
    records = []
    for lineno, line in enumerate(blob.decode("utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{where}: catalog line {lineno}: {exc}") from exc
        records.append(
            CatalogRecord(
                id=str(obj["id"]),
                title=str(obj.get("title", "")),
                description=str(obj.get("description", "")),
                **{f: str(obj.get(f, "") or "").strip().lower() for f in FACET_FIELDS},
            )
        )
    return records
