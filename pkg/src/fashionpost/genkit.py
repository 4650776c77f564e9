"""Evidence assembly, prompt rendering, LLM calls, and the rule fallback.

The caption and hashtag prompts go out as two chat-completion requests;
anything that prevents a usable model response lands on the deterministic
fallback generator, and the bundle's provenance field records which path
produced it.
"""

from __future__ import annotations

import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import urlparse

import httpx

from .detect import Detection
from .errors import ConfigError, DataError, TemplateError
from .retrieval import AttributePrediction

logger = logging.getLogger(__name__)

UNKNOWN = "unknown"

# consumed in order when specific tags leave the bundle short of 15
BROAD_TAGS = (
    "#Fashion", "#Style", "#OOTD", "#Trending", "#InstaFashion",
    "#StyleInspo", "#FashionDaily", "#Wardrobe", "#Lookbook",
    "#OutfitOfTheDay", "#FashionGram", "#StyleOfTheDay", "#NewLook",
    "#Chic", "#WeekendStyle", "#StreetStyle", "#Trendy", "#FashionLover",
)

MIN_TAGS = 15
MAX_TAGS = 18

_HASHTAG = re.compile(r"#[A-Za-z0-9_]+")
_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")
_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")


@dataclass(frozen=True)
class DetectionSummary:
    class_name: str
    primary_color: str
    secondary_color: str | None = None


@dataclass(frozen=True)
class EvidencePack:
    detections: tuple[DetectionSummary, ...]
    fabric: AttributePrediction
    gender: AttributePrediction
    snippets: tuple[str, ...]


DEFAULT_CAPTION_TEMPLATE = """\
Garments detected in the photo:
{detections}

Known attributes:
- {fabric}
- {gender}

{snippets}

Write a fluent, image-driven caption of 2 to 3 sentences for a social
media post about this outfit. Mention each garment with its color, and
the fabric and audience when given."""

DEFAULT_HASHTAG_TEMPLATE = """\
Evidence for the outfit photo:
{evidence}

Caption used for the post:
{caption}

Write 15 to 18 hashtags for this post, mixing broad fashion tags with
specific garment, color, fabric, and audience tags. Return them on one
line, each starting with '#', in CamelCase."""

DEFAULT_INSTRUCTIONS = (
    "You write social media copy for fashion posts: concise, warm, and "
    "grounded in the provided evidence. Never invent garments, colors, "
    "fabrics, or audiences that are not listed. Follow the requested "
    "format exactly."
)


def _check_placeholders(template: str, required: tuple[str, ...], label: str):
    found = _PLACEHOLDER.findall(template)
    for name in found:
        if name not in required:
            raise TemplateError(f"{label}: unknown placeholder {{{name}}}")
    for name in required:
        count = found.count(name)
        if count != 1:
            raise TemplateError(
                f"{label}: placeholder {{{name}}} must appear exactly once, found {count}"
            )


@dataclass(frozen=True)
class PromptTemplate:
    caption_template: str = DEFAULT_CAPTION_TEMPLATE
    hashtag_template: str = DEFAULT_HASHTAG_TEMPLATE
    instructions: str = DEFAULT_INSTRUCTIONS

    def __post_init__(self):
        _check_placeholders(self.caption_template,
                            ("detections", "fabric", "gender", "snippets"),
                            "caption template")
        _check_placeholders(self.hashtag_template, ("evidence", "caption"),
                            "hashtag template")


def load_templates(directory: str | Path) -> PromptTemplate:
    """Read template parts from plain-text files, defaulting what is absent.

    Recognized file names: caption_prompt.txt, hashtag_prompt.txt,
    instructions.txt.
    """
    d = Path(directory)
    parts = {}
    for attr, name in (("caption_template", "caption_prompt.txt"),
                       ("hashtag_template", "hashtag_prompt.txt"),
                       ("instructions", "instructions.txt")):
        p = d / name
        if p.is_file():
            parts[attr] = p.read_text(encoding="utf-8")
    return PromptTemplate(**parts)


@dataclass
class GenParams:
    temperature: float = 0.7
    max_tokens: int = 250
    endpoint: str = ""
    model: str = ""
    api_key: str = ""
    timeout_s: float = 30.0
    retries: int = 2
    backoff_s: float = 0.25
    concurrency: int = 4

    def __post_init__(self):
        if self.temperature < 0:
            raise ConfigError(f"temperature must be non-negative, got {self.temperature}")
        if self.max_tokens < 1:
            raise ConfigError(f"max_tokens must be positive, got {self.max_tokens}")

    @classmethod
    def from_env(cls, **overrides) -> "GenParams":
        values = {
            "api_key": os.environ.get("GENAI_API_KEY", ""),
            "endpoint": os.environ.get("GENAI_ENDPOINT", ""),
            "model": os.environ.get("GENAI_MODEL", ""),
        }
        values.update(overrides)
        return cls(**values)


@dataclass(frozen=True)
class PostBundle:
    caption: str
    hashtags: tuple[str, ...]
    provenance: str  # "llm" | "fallback"
    evidence: EvidencePack


# ============================================================
# Evidence assembly and prompt rendering
# ============================================================


def build_evidence_pack(dets: list[Detection], fabric: AttributePrediction,
                        gender: AttributePrediction,
                        snippets: list[str]) -> EvidencePack:
    """Collect per-image evidence; detections confidence-first, snippets capped at 5."""
    for d in dets:
        if d.colors is None:
            raise DataError(f"detection {d.class_name!r} has no color descriptor")
    ordered = sorted(range(len(dets)), key=lambda i: -dets[i].confidence)
    summaries = tuple(
        DetectionSummary(
            class_name=dets[i].class_name,
            primary_color=dets[i].colors.primary.name,
            secondary_color=(dets[i].colors.secondary.name
                             if dets[i].colors.secondary else None),
        )
        for i in ordered
    )
    return EvidencePack(detections=summaries, fabric=fabric, gender=gender,
                        snippets=tuple(snippets[:5]))


def _detections_block(pack: EvidencePack) -> str:
    lines = []
    for d in pack.detections:
        line = f"- {d.class_name}: primary color {d.primary_color}"
        if d.secondary_color:
            line += f", secondary color {d.secondary_color}"
        lines.append(line)
    return "\n".join(lines) if lines else "- none"


def _fabric_line(pack: EvidencePack) -> str:
    if pack.fabric.label == UNKNOWN:
        return "fabric: unspecified (do not invent a fabric)"
    return f"fabric: {pack.fabric.label}"


def _gender_line(pack: EvidencePack) -> str:
    if pack.gender.label == UNKNOWN:
        return "audience: unspecified (do not invent an audience)"
    return f"audience: {pack.gender.label}"


def _snippets_block(pack: EvidencePack) -> str:
    if not pack.snippets:
        return ""
    lines = ["Style examples from similar products:"]
    lines += [f"- {s}" for s in pack.snippets]
    return "\n".join(lines)


def render_evidence(pack: EvidencePack) -> str:
    parts = [_detections_block(pack), _fabric_line(pack), _gender_line(pack)]
    snippets = _snippets_block(pack)
    if snippets:
        parts.append(snippets)
    return "\n".join(parts)


def render_caption_prompt(pack: EvidencePack, tpl: PromptTemplate | None = None) -> str:
    tpl = tpl or PromptTemplate()
    text = tpl.caption_template
    text = text.replace("{detections}", _detections_block(pack))
    text = text.replace("{fabric}", _fabric_line(pack))
    text = text.replace("{gender}", _gender_line(pack))
    text = text.replace("{snippets}", _snippets_block(pack))
    return text


def render_hashtag_prompt(pack: EvidencePack, caption: str,
                          tpl: PromptTemplate | None = None) -> str:
    tpl = tpl or PromptTemplate()
    text = tpl.hashtag_template
    text = text.replace("{evidence}", render_evidence(pack))
    text = text.replace("{caption}", caption)
    return text


# ============================================================
# Hashtag and caption post-processing
# ============================================================


def parse_hashtags(text: str) -> list[str]:
    """Extract '#'-prefixed word tokens, first occurrence wins, case-insensitive."""
    seen: set[str] = set()
    out: list[str] = []
    for match in _HASHTAG.findall(text):
        key = match.lower()
        if key in seen:
            continue
        seen.add(key)
        out.append(match)
    return out


def _camel(text: str) -> str:
    pieces = [p for p in re.split(r"[^0-9A-Za-z]+", text) if p]
    return "".join(p[:1].upper() + p[1:] for p in pieces)


def _dedupe_tags(tags: list[str]) -> list[str]:
    seen: set[str] = set()
    out = []
    for t in tags:
        key = t.lower()
        if key not in seen:
            seen.add(key)
            out.append(t)
    return out


def _pad_tags(tags: list[str], pack: EvidencePack) -> tuple[str, ...]:
    """Force the tag list into the [15, 18] band using fallback material."""
    merged = _dedupe_tags(list(tags))
    if len(merged) > MAX_TAGS:
        return tuple(merged[:MAX_TAGS])
    if len(merged) < MIN_TAGS:
        filler = list(fallback_generate(pack).hashtags) + list(BROAD_TAGS)
        seen = {t.lower() for t in merged}
        for tag in filler:
            if len(merged) >= MIN_TAGS:
                break
            if tag.lower() in seen:
                continue
            seen.add(tag.lower())
            merged.append(tag)
    return tuple(merged)


def _clip_caption(text: str) -> str:
    sentences = [s for s in _SENTENCE_SPLIT.split(text.strip()) if s]
    if len(sentences) > 5:
        return " ".join(sentences[:3])
    return text.strip()


# ============================================================
# Fallback generation
# ============================================================


def fallback_generate(pack: EvidencePack) -> PostBundle:
    """Deterministic template fill from the evidence pack alone.

    Grounding guarantee: every class name and primary color appears in
    the caption; "unknown" facets never surface anywhere.
    """
    if not pack.detections:
        caption = "Fresh looks coming soon."
        return PostBundle(caption=caption, hashtags=tuple(BROAD_TAGS[:MIN_TAGS]),
                          provenance="fallback", evidence=pack)

    phrases = [f"a {d.primary_color} {d.class_name}" for d in pack.detections]
    first = " paired with ".join(phrases)
    first = first[0].upper() + first[1:] + "."
    sentences = [first]

    fabric = pack.fabric.label if pack.fabric.label != UNKNOWN else ""
    gender = pack.gender.label if pack.gender.label != UNKNOWN else ""
    if fabric and gender:
        sentences.append(f"Crafted in {fabric}, a perfect pick for {gender} fashion.")
    elif fabric:
        sentences.append(f"Crafted in {fabric}.")
    elif gender:
        sentences.append(f"A perfect pick for {gender} fashion.")
    caption = " ".join(sentences)

    tags: list[str] = []
    for d in pack.detections:
        tags.append(f"#{_camel(d.primary_color)}{_camel(d.class_name)}")
        tags.append(f"#{_camel(d.class_name)}")
    if fabric:
        tags.append(f"#{_camel(fabric)}Clothing")
    if gender:
        tags.append(f"#{_camel(gender)}Fashion")
    tags = _dedupe_tags(tags)
    if len(tags) > MAX_TAGS:
        tags = tags[:MAX_TAGS]
    else:
        seen = {t.lower() for t in tags}
        for tag in BROAD_TAGS:
            if len(tags) >= MIN_TAGS:
                break
            if tag.lower() in seen:
                continue
            seen.add(tag.lower())
            tags.append(tag)
    return PostBundle(caption=caption, hashtags=tuple(tags), provenance="fallback",
                      evidence=pack)


# ============================================================
# Remote generation
# ============================================================


class ChatClient:
    """Minimal chat-completion client with retries and a concurrency cap."""

    def __init__(self, params: GenParams, transport: httpx.BaseTransport | None = None):
        parsed = urlparse(params.endpoint)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise ConfigError(f"malformed endpoint URL: {params.endpoint!r}")
        self.params = params
        self._semaphore = threading.BoundedSemaphore(max(1, params.concurrency))
        headers = {"Content-Type": "application/json"}
        if params.api_key:
            headers["Authorization"] = f"Bearer {params.api_key}"
        self._http = httpx.Client(headers=headers, timeout=params.timeout_s,
                                  transport=transport)

    def close(self):
        self._http.close()

    def complete(self, system: str, user: str) -> str:
        """One chat completion; raises the last failure after retries."""
        body = {
            "model": self.params.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": self.params.temperature,
            "max_tokens": self.params.max_tokens,
        }
        last_error: Exception | None = None
        for attempt in range(self.params.retries + 1):
            if attempt > 0:
                time.sleep(self.params.backoff_s * (2 ** (attempt - 1)))
            try:
                with self._semaphore:
                    response = self._http.post(self.params.endpoint, json=body)
            except httpx.HTTPError as exc:
                last_error = exc
                continue  # transport failure or timeout: retry
            if 400 <= response.status_code < 500:
                raise RuntimeError(f"endpoint rejected request: {response.status_code}")
            if response.status_code >= 500:
                last_error = RuntimeError(f"endpoint error: {response.status_code}")
                continue
            try:
                return str(response.json()["choices"][0]["message"]["content"])
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise RuntimeError(f"malformed endpoint response: {exc}") from exc
        assert last_error is not None
        raise last_error


def generate(pack: EvidencePack, params: GenParams | None = None,
             tpl: PromptTemplate | None = None,
             client: ChatClient | None = None) -> PostBundle:
    """Produce a post bundle, via the endpoint when one is configured.

    The remote path needs both an endpoint and an API key; otherwise the
    rule-based fallback answers. A malformed endpoint URL raises instead
    of falling back, since that is operator error, not a transport
    problem. Transport failures never propagate: the fallback answers
    and the provenance field says so.
    """
    params = params or GenParams.from_env()
    tpl = tpl or PromptTemplate()

    if not pack.detections:
        return fallback_generate(pack)
    if not params.endpoint or not params.api_key:
        return fallback_generate(pack)

    own_client = client is None
    if own_client:
        client = ChatClient(params)  # raises ConfigError on a malformed URL
    try:
        caption_raw = client.complete(tpl.instructions, render_caption_prompt(pack, tpl))
        caption = _clip_caption(caption_raw)
        tags_raw = client.complete(tpl.instructions,
                                   render_hashtag_prompt(pack, caption, tpl))
        hashtags = _pad_tags(parse_hashtags(tags_raw), pack)
        return PostBundle(caption=caption, hashtags=hashtags, provenance="llm",
                          evidence=pack)
    except (httpx.HTTPError, RuntimeError) as exc:
        logger.warning("generation fell back to rules",
                       extra={"event": "llm_fallback", "detail": str(exc)})
        return fallback_generate(pack)
    finally:
        if own_client:
            client.close()
