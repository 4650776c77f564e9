"""End-to-end inference: detections in, post bundle out.

Stage order is fixed: confidence filter, NMS, crops, color extraction,
query embedding, retrieval, attribute votes, snippets, evidence pack,
generation. Degenerate intermediate results flow through rather than
aborting, so an image with nothing detected still yields a (degenerate)
bundle.
"""

from __future__ import annotations

import json
import logging
import random
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .color import Palette, default_palette, dominant_colors
from .config import PipelineConfig
from .detect import ImageDetections, crop, filter_detections, nms, with_colors
from .errors import DataError, MissingEmbeddingError
from .fileio import read_text
from .genkit import (ChatClient, EvidencePack, PostBundle, PromptTemplate,
                     build_evidence_pack, generate)
from .retrieval import (CatalogRecord, Index, normalize, sample_snippets,
                        search, vote_attribute)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunRecord:
    image_id: str
    evidence: EvidencePack
    bundle: PostBundle
    timings: Mapping[str, float]


def load_query_embeddings(path: str | Path) -> dict[str, np.ndarray]:
    """Read the query-embedding sidecar: {"image_id", "embedding"} per line."""
    out: dict[str, np.ndarray] = {}
    for lineno, raw in enumerate(read_text(path).splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            image_id = str(obj["image_id"])
            vec = np.asarray(obj["embedding"], dtype=np.float64)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: bad query embedding: {exc}") from exc
        out[image_id] = vec
    return out


def run_pipeline(image: np.ndarray, entry: ImageDetections, index: Index,
                 cfg: PipelineConfig,
                 query_embedding: np.ndarray | None = None,
                 query_lookup: Mapping[str, np.ndarray] | None = None,
                 palette: Palette | None = None,
                 templates: PromptTemplate | None = None,
                 client: ChatClient | None = None) -> RunRecord:
    """Run every stage for one image and record per-stage wall times.

    The query embedding comes from the explicit argument when given,
    otherwise from the sidecar lookup keyed by the entry's image id.
    """
    palette = palette or default_palette()
    timings: dict[str, float] = {}

    def staged(name):
        start = time.perf_counter()

        def done():
            timings[name] = time.perf_counter() - start

        return done

    done = staged("filter")
    kept = filter_detections(list(entry.detections), cfg.detector.confidence_threshold)
    done()

    done = staged("nms")
    kept = nms(kept, cfg.detector.iou_threshold)
    done()
    if not kept:
        logger.warning("no detections above threshold",
                       extra={"event": "no_detections", "image_id": entry.image_id})

    done = staged("colors")
    colored = [
        with_colors(det, dominant_colors(crop(image, det.box), cfg.color, palette))
        for det in kept
    ]
    done()

    done = staged("embedding")
    if query_embedding is None:
        if query_lookup is None or entry.image_id not in query_lookup:
            raise MissingEmbeddingError(
                f"no query embedding for image {entry.image_id!r}"
            )
        query_embedding = query_lookup[entry.image_id]
    query = normalize(query_embedding)
    done()

    done = staged("search")
    neighbors = search(index, query, cfg.vote.top_k)
    done()

    done = staged("vote")
    fabric = vote_attribute(neighbors, "fabric", cfg.vote)
    gender = vote_attribute(neighbors, "gender", cfg.vote)
    done()

    done = staged("snippets")
    snippets = sample_snippets(neighbors, 5)
    done()

    done = staged("evidence")
    pack = build_evidence_pack(colored, fabric, gender, snippets)
    done()

    done = staged("generate")
    bundle = generate(pack, cfg.gen, templates, client=client)
    done()

    return RunRecord(image_id=entry.image_id, evidence=pack, bundle=bundle,
                     timings=timings)


# ============================================================
# Serialization (canonical, so identical runs emit identical bytes)
# ============================================================


def _attr_to_dict(pred) -> dict:
    return {
        "facet": pred.facet,
        "label": pred.label,
        "confidence": pred.confidence,
        "votes": [[label, score] for label, score in pred.votes],
    }


def pack_to_dict(pack: EvidencePack) -> dict:
    return {
        "detections": [
            {
                "class": d.class_name,
                "primary_color": d.primary_color,
                "secondary_color": d.secondary_color,
            }
            for d in pack.detections
        ],
        "fabric": _attr_to_dict(pack.fabric),
        "gender": _attr_to_dict(pack.gender),
        "snippets": list(pack.snippets),
    }


def bundle_to_dict(bundle: PostBundle) -> dict:
    return {
        "caption": bundle.caption,
        "hashtags": list(bundle.hashtags),
        "provenance": bundle.provenance,
    }


def record_to_dict(record: RunRecord) -> dict:
    return {
        "image_id": record.image_id,
        "evidence": pack_to_dict(record.evidence),
        "bundle": bundle_to_dict(record.bundle),
        "timings": dict(record.timings),
    }


def record_to_json(record: RunRecord) -> str:
    return json.dumps(record_to_dict(record), indent=2, sort_keys=True,
                      ensure_ascii=False)


# ============================================================
# Catalog splitting
# ============================================================


@dataclass(frozen=True)
class SplitResult:
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    flagged_categories: tuple[str, ...]  # lone-record categories, train only


def split_catalog(records: list[CatalogRecord], ratio: float, seed: int) -> SplitResult:
    """Category-aware shuffled split.

    Each category is shuffled and cut at the ratio, clamped so that any
    category with two or more records lands in both splits. A category
    with a single record sends it to train and is flagged.
    """
    if not records:
        raise DataError("cannot split an empty catalog")
    if not 0.0 < ratio < 1.0:
        raise DataError(f"ratio must be in (0, 1), got {ratio}")
    by_category: dict[str, list[str]] = {}
    for r in records:
        if not r.category:
            raise DataError(f"record {r.id!r} has no category")
        by_category.setdefault(r.category, []).append(r.id)

    rng = random.Random(seed)
    train: list[str] = []
    test: list[str] = []
    flagged: list[str] = []
    for category in sorted(by_category):
        ids = sorted(by_category[category])
        rng.shuffle(ids)
        if len(ids) == 1:
            train.extend(ids)
            flagged.append(category)
            continue
        n_train = min(max(round(len(ids) * ratio), 1), len(ids) - 1)
        train.extend(ids[:n_train])
        test.extend(ids[n_train:])
    return SplitResult(train_ids=tuple(train), test_ids=tuple(test),
                       flagged_categories=tuple(flagged))
