"""Evaluation metrics: detection AP, caption overlap scores, embedding
similarity, hashtag attribute coverage, and n-gram diversity.

One tokenizer serves every lexical metric so their numbers stay
comparable: lowercase, split on non-alphanumeric runs and camelCase
humps.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .detect import Box, iou
from .errors import DataError, InvalidEmbeddingError, UndefinedMetricError
from .fileio import read_text

FACET_KEYS = ("category", "color", "fabric", "gender")

_NON_ALNUM = re.compile(r"[^0-9A-Za-z]+")
_CAMEL_HUMP = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")


def tokenize(text: str) -> list[str]:
    """Shared tokenizer: split on non-alphanumeric runs and camelCase humps."""
    out = []
    for piece in _NON_ALNUM.split(text):
        for token in _CAMEL_HUMP.split(piece):
            if token:
                out.append(token.lower())
    return out


# ============================================================
# Detection AP
# ============================================================


@dataclass(frozen=True)
class GroundTruthBox:
    image_id: str
    class_name: str
    box: Box


@dataclass(frozen=True)
class PredictedBox:
    """A detection tied to its image, the unit AP matching works on."""

    image_id: str
    class_name: str
    box: Box
    confidence: float


_RECALL_GRID = np.linspace(0.0, 1.0, 101)


def average_precision(preds: Sequence[PredictedBox], gts: Sequence[GroundTruthBox],
                      class_name: str, iou_thresh: float) -> float:
    """101-point interpolated AP for one class at one IoU threshold.

    Predictions are matched greedily in confidence order to the unmatched
    ground-truth box of the same image with the highest IoU at or above
    the threshold. Without ground truth for the class, AP is 0.0 when
    predictions exist (they are all false positives).
    """
    class_gts = [g for g in gts if g.class_name == class_name]
    class_preds = [p for p in preds if p.class_name == class_name]
    if not class_gts:
        return 0.0
    if not class_preds:
        return 0.0

    order = sorted(range(len(class_preds)), key=lambda i: -class_preds[i].confidence)
    matched: set[int] = set()
    tp = np.zeros(len(class_preds))
    for rank, i in enumerate(order):
        p = class_preds[i]
        best_j = -1
        best_iou = 0.0
        for j, g in enumerate(class_gts):
            if j in matched or g.image_id != p.image_id:
                continue
            overlap = iou(p.box, g.box)
            if overlap >= iou_thresh and overlap > best_iou:
                best_iou = overlap
                best_j = j
        if best_j >= 0:
            matched.add(best_j)
            tp[rank] = 1.0

    tp_cum = np.cumsum(tp)
    recall = tp_cum / len(class_gts)
    precision = tp_cum / np.arange(1, len(class_preds) + 1)
    ap = 0.0
    for r in _RECALL_GRID:
        mask = recall >= r
        ap += float(np.max(precision[mask])) if np.any(mask) else 0.0
    return ap / len(_RECALL_GRID)


def map_score(preds: Sequence[PredictedBox], gts: Sequence[GroundTruthBox],
              iou_thresholds: Sequence[float] | None = None) -> tuple[float, float]:
    """(mAP at 0.5, mAP averaged over the threshold sweep).

    The mean runs over classes present in the ground truth; the default
    sweep is 0.50 to 0.95 in steps of 0.05.
    """
    if not gts:
        raise UndefinedMetricError("mAP undefined without ground truth")
    if iou_thresholds is None:
        iou_thresholds = [0.50 + 0.05 * i for i in range(10)]
    classes = sorted({g.class_name for g in gts})
    ap_at_50 = float(np.mean([average_precision(preds, gts, c, 0.5) for c in classes]))
    sweep = float(np.mean([
        np.mean([average_precision(preds, gts, c, t) for c in classes])
        for t in iou_thresholds
    ]))
    return ap_at_50, sweep


# ============================================================
# Caption overlap metrics
# ============================================================


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: str, reference: str) -> float:
    """Sentence BLEU, order min(4, candidate length), uniform weights.

    No smoothing: a zero precision at any used order zeroes the pair.
    Brevity penalty exp(1 - r/c) applies when the candidate is shorter.
    """
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand:
        return 0.0
    max_order = min(4, len(cand))
    log_sum = 0.0
    for n in range(1, max_order + 1):
        cand_counts = _ngrams(cand, n)
        ref_counts = _ngrams(ref, n)
        clipped = sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
        total = sum(cand_counts.values())
        if clipped == 0:
            return 0.0
        log_sum += np.log(clipped / total) / max_order
    c, r = len(cand), len(ref)
    bp = 1.0 if c >= r else float(np.exp(1.0 - r / c))
    return float(bp * np.exp(log_sum))


def corpus_bleu(pairs: Iterable[tuple[str, str]]) -> float:
    scores = [bleu(c, r) for c, r in pairs]
    if not scores:
        raise UndefinedMetricError("corpus BLEU undefined on an empty corpus")
    return float(np.mean(scores))


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _rouge_n(cand: Sequence[str], ref: Sequence[str], n: int) -> float:
    cand_counts = _ngrams(cand, n)
    ref_counts = _ngrams(ref, n)
    overlap = sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
    total_cand = sum(cand_counts.values())
    total_ref = sum(ref_counts.values())
    if total_cand == 0 or total_ref == 0:
        return 0.0
    return _f1(overlap / total_cand, overlap / total_ref)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    # classic DP over token sequences
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[len(a)][len(b)]


def rouge(candidate: str, reference: str) -> tuple[float, float, float]:
    """(ROUGE-1 F, ROUGE-2 F, ROUGE-L F), all with beta = 1."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        return (0.0, 0.0, 0.0)
    r1 = _rouge_n(cand, ref, 1)
    r2 = _rouge_n(cand, ref, 2)
    lcs = _lcs_length(cand, ref)
    rl = _f1(lcs / len(cand), lcs / len(ref))
    return (r1, r2, rl)


def _stem(token: str) -> str:
    """Light suffix stripper; deliberately cruder than a full stemmer."""
    if len(token) > 5 and token.endswith("ing"):
        return token[:-3]
    if len(token) > 4 and token.endswith("ed"):
        return token[:-2]
    if len(token) > 4 and token.endswith("es"):
        return token[:-2]
    if len(token) > 3 and token.endswith("s") and not token.endswith("ss"):
        return token[:-1]
    if len(token) > 4 and token.endswith("ly"):
        return token[:-2]
    return token


def _align(cand: Sequence[str], ref: Sequence[str]) -> list[tuple[int, int]]:
    """Greedy two-stage unigram alignment: exact matches, then stems.

    Each stage walks the candidate left to right and takes the earliest
    unmatched reference token with the same surface (or stemmed) form.
    """
    pairs: list[tuple[int, int]] = []
    used_cand: set[int] = set()
    used_ref: set[int] = set()
    for key in (lambda t: t, _stem):
        ref_keys = [key(t) for t in ref]
        for i, token in enumerate(cand):
            if i in used_cand:
                continue
            want = key(token)
            for j, ref_key in enumerate(ref_keys):
                if j in used_ref or ref_key != want:
                    continue
                pairs.append((i, j))
                used_cand.add(i)
                used_ref.add(j)
                break
    pairs.sort()
    return pairs


def meteor_lite(candidate: str, reference: str) -> float:
    """Unigram matching score, recall-weighted 9:1, with a chunk penalty.

    Matches are exact surface forms first, then stemmed forms. The
    fragmentation penalty is 0.5 * (chunks / matches)^3 where a chunk is
    a maximal run of matches contiguous in both texts.
    """
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        return 0.0
    pairs = _align(cand, ref)
    m = len(pairs)
    if m == 0:
        return 0.0
    precision = m / len(cand)
    recall = m / len(ref)
    f_mean = 10.0 * precision * recall / (recall + 9.0 * precision)
    chunks = 1
    for (ci, ri), (cj, rj) in zip(pairs, pairs[1:]):
        if cj != ci + 1 or rj != ri + 1:
            chunks += 1
    penalty = 0.5 * (chunks / m) ** 3
    return f_mean * (1.0 - penalty)


# ============================================================
# Embedding similarity
# ============================================================


def clip_sim(image_emb, text_emb) -> float:
    """Cosine similarity between an image and a text embedding."""
    a = np.asarray(image_emb, dtype=np.float64)
    b = np.asarray(text_emb, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidEmbeddingError(
            f"embedding shapes differ: {a.shape} vs {b.shape}"
        )
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise InvalidEmbeddingError("cosine undefined for a zero vector")
    return float(a @ b / (na * nb))


@dataclass(frozen=True)
class ClipReport:
    mean_pred: float
    mean_orig: float
    delta: float  # mean_pred - mean_orig


def clip_sim_report(image_embs: Sequence, pred_embs: Sequence,
                    orig_embs: Sequence) -> ClipReport:
    """Corpus means of image-text similarity for predicted and original texts."""
    if not (len(image_embs) == len(pred_embs) == len(orig_embs)) or not len(image_embs):
        raise UndefinedMetricError("aligned non-empty embedding lists required")
    mean_pred = float(np.mean([clip_sim(i, p) for i, p in zip(image_embs, pred_embs)]))
    mean_orig = float(np.mean([clip_sim(i, o) for i, o in zip(image_embs, orig_embs)]))
    return ClipReport(mean_pred=mean_pred, mean_orig=mean_orig,
                      delta=mean_pred - mean_orig)


# ============================================================
# Hashtag attribute coverage
# ============================================================


@dataclass(frozen=True)
class FacetSet:
    """Known facet values for one image, lowercase, empty values absent."""

    image_id: str
    values: Mapping[str, str]

    def __post_init__(self):
        for key, value in self.values.items():
            if key not in FACET_KEYS:
                raise DataError(f"unknown facet key {key!r}")
            if not value:
                raise DataError(f"facet {key!r} has an empty value")


class SynonymDict:
    """Canonical facet value -> accepted surface forms (itself included)."""

    def __init__(self, groups: Mapping[str, Iterable[str]] | None = None):
        self._groups: dict[str, frozenset[str]] = {}
        for canonical, alts in (groups or {}).items():
            canon = canonical.strip().lower()
            forms = {canon} | {a.strip().lower() for a in alts if a.strip()}
            self._groups[canon] = frozenset(forms)

    def forms(self, value: str) -> frozenset[str]:
        value = value.strip().lower()
        return self._groups.get(value, frozenset((value,)))


def load_synonyms(path: str | Path) -> SynonymDict:
    """Parse a synonyms file: canonical<TAB>alt1,alt2,... per line."""
    groups: dict[str, list[str]] = {}
    for lineno, raw in enumerate(read_text(path).splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected canonical<TAB>alternatives")
        groups[parts[0]] = parts[1].split(",")
    return SynonymDict(groups)


def default_synonyms() -> SynonymDict:
    with resources.as_file(resources.files("fashionpost") / "data" / "synonyms.tsv") as p:
        return load_synonyms(p)


def _squash(text: str) -> str:
    """Lowercase with non-alphanumerics removed: the concatenated form."""
    return _NON_ALNUM.sub("", text).lower()


def facet_hit(tags: Sequence[str], value: str, syn: SynonymDict) -> bool:
    tokens = set()
    concatenated = []
    for tag in tags:
        body = tag.lstrip("#")
        tokens.update(tokenize(body))
        concatenated.append(_squash(body))
    for form in syn.forms(value):
        squashed = _squash(form)
        if not squashed:
            continue
        if squashed in tokens:
            return True
        if any(squashed in c for c in concatenated):
            return True
    return False


@dataclass(frozen=True)
class CoverageReport:
    per_image: tuple[float | None, ...]  # None marks an excluded image
    mean: float
    at_tau: float
    tau: float
    scored: int
    excluded: int


def attribute_coverage(per_image_tags: Sequence[Sequence[str]],
                       per_image_facets: Sequence[FacetSet],
                       syn: SynonymDict | None = None,
                       tau: float = 0.5) -> CoverageReport:
    """Per-image facet coverage of hashtags, with the share above tau.

    An image with no known facets cannot be scored; it is excluded from
    the mean and reported in the excluded count.
    """
    if len(per_image_tags) != len(per_image_facets):
        raise DataError("tags and facets must align per image")
    syn = syn or default_synonyms()
    per_image: list[float | None] = []
    scored: list[float] = []
    excluded = 0
    for tags, facets in zip(per_image_tags, per_image_facets):
        if not facets.values:
            per_image.append(None)
            excluded += 1
            continue
        hits = sum(1 for value in facets.values.values() if facet_hit(tags, value, syn))
        cov = hits / len(facets.values)
        per_image.append(cov)
        scored.append(cov)
    if not scored:
        raise UndefinedMetricError("coverage undefined: no image has known facets")
    mean = float(np.mean(scored))
    at_tau = float(np.mean([1.0 if c >= tau else 0.0 for c in scored]))
    return CoverageReport(per_image=tuple(per_image), mean=mean, at_tau=at_tau,
                          tau=tau, scored=len(scored), excluded=excluded)


def distinct_n(per_image_tags: Sequence[Sequence[str]], n: int) -> float:
    """Unique over total n-grams, pooled across all images' tag tokens."""
    if n < 1:
        raise DataError(f"n must be positive, got {n}")
    total = 0
    unique: set[tuple[str, ...]] = set()
    for tags in per_image_tags:
        tokens: list[str] = []
        for tag in tags:
            tokens.extend(tokenize(tag.lstrip("#")))
        for i in range(len(tokens) - n + 1):
            unique.add(tuple(tokens[i : i + n]))
            total += 1
    if total == 0:
        raise UndefinedMetricError(f"no {n}-grams in the corpus")
    return len(unique) / total


# ============================================================
# Evaluation file formats
# ============================================================


def load_facets(path: str | Path) -> list[FacetSet]:
    """Read facets.jsonl: {"image_id", "category", "color", "fabric", "gender"}."""
    out = []
    for lineno, raw in enumerate(read_text(path).splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        values = {}
        for key in FACET_KEYS:
            value = str(obj.get(key, "") or "").strip().lower()
            if value:
                values[key] = value
        out.append(FacetSet(image_id=str(obj.get("image_id", f"line{lineno}")),
                            values=values))
    return out


def load_groundtruth(path: str | Path) -> list[GroundTruthBox]:
    """Read groundtruth.jsonl, same per-image schema as detections files."""
    out = []
    for lineno, raw in enumerate(read_text(path).splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        image_id = str(obj.get("image_id", ""))
        for d in obj.get("detections", []):
            try:
                box = Box(*(float(v) for v in d["box"]))
                out.append(GroundTruthBox(image_id=image_id,
                                          class_name=str(d["class"]), box=box))
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad box record: {exc}") from exc
    return out
