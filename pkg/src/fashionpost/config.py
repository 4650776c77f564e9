"""Pipeline configuration: dataclass defaults plus a TOML file loader.

Endpoint, model, and API key for generation come from the environment
(GENAI_ENDPOINT, GENAI_MODEL, GENAI_API_KEY); the TOML file holds the
numeric knobs. Every threshold keeps its stock default when the file
omits it, so a config file only needs the values it changes.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .color import ColorConfig
from .detect import DetectorConfig
from .errors import ConfigError
from .genkit import GenParams
from .retrieval import VoteConfig


@dataclass
class PathsConfig:
    catalog: str = ""
    embeddings: str = ""
    queries: str = ""
    palette: str = ""
    synonyms: str = ""
    templates_dir: str = ""


@dataclass
class PipelineConfig:
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    color: ColorConfig = field(default_factory=ColorConfig)
    vote: VoteConfig = field(default_factory=VoteConfig)
    gen: GenParams = field(default_factory=GenParams.from_env)
    coverage_tau: float = 0.5
    paths: PathsConfig = field(default_factory=PathsConfig)


def default_config() -> PipelineConfig:
    return PipelineConfig()


def _apply(section: dict, target, allowed: tuple[str, ...], where: str):
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"[{where}] has unknown keys: {sorted(unknown)}")
    return replace(target, **section)


def _in_range(name: str, value: float, low: float, high: float):
    if not low <= value <= high:
        raise ConfigError(f"{name} must be in [{low}, {high}], got {value}")


def validate_config(cfg: PipelineConfig) -> PipelineConfig:
    _in_range("detector.confidence_threshold", cfg.detector.confidence_threshold, 0.0, 1.0)
    _in_range("detector.iou_threshold", cfg.detector.iou_threshold, 0.0, 1.0)
    if cfg.color.k < 1:
        raise ConfigError(f"color.k must be positive, got {cfg.color.k}")
    if cfg.color.max_samples < 1:
        raise ConfigError(f"color.max_samples must be positive, got {cfg.color.max_samples}")
    _in_range("color.min_coverage", cfg.color.min_coverage, 0.0, 1.0)
    _in_range("color.near_white_l", cfg.color.near_white_l, 0.0, 100.0)
    _in_range("color.near_black_l", cfg.color.near_black_l, 0.0, 100.0)
    if cfg.vote.top_k < 1:
        raise ConfigError(f"retrieval.top_k must be positive, got {cfg.vote.top_k}")
    if cfg.vote.temperature < 0:
        raise ConfigError(f"retrieval.temperature must be non-negative, got {cfg.vote.temperature}")
    _in_range("retrieval.attribute_threshold", cfg.vote.attribute_threshold, 0.0, 1.0)
    _in_range("evaluation.coverage_tau", cfg.coverage_tau, 0.0, 1.0)
    for name, value in vars(cfg.paths).items():
        if value and not Path(value).exists():
            raise ConfigError(f"paths.{name} does not exist: {value}")
    return cfg


def load_config(path: str | Path) -> PipelineConfig:
    """Read a TOML config file and overlay it on the defaults."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc

    cfg = default_config()
    known_sections = {"detector", "color", "retrieval", "generation", "evaluation", "paths"}
    unknown = set(data) - known_sections
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    try:
        cfg.detector = _apply(data.get("detector", {}), cfg.detector,
                              ("confidence_threshold", "iou_threshold"), "detector")
        cfg.color = _apply(data.get("color", {}), cfg.color,
                           ("k", "max_samples", "seed", "near_white_l", "near_black_l",
                            "min_coverage", "movement_tol", "max_iterations"), "color")
        cfg.vote = _apply(data.get("retrieval", {}), cfg.vote,
                          ("top_k", "temperature", "attribute_threshold"), "retrieval")
        cfg.gen = _apply(data.get("generation", {}), cfg.gen,
                         ("temperature", "max_tokens", "timeout_s", "retries",
                          "backoff_s", "concurrency"), "generation")
    except TypeError as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    evaluation = data.get("evaluation", {})
    if set(evaluation) - {"coverage_tau"}:
        raise ConfigError(f"[evaluation] has unknown keys: {sorted(set(evaluation) - {'coverage_tau'})}")
    cfg.coverage_tau = float(evaluation.get("coverage_tau", cfg.coverage_tau))
    paths = data.get("paths", {})
    cfg.paths = _apply({k: str(v) for k, v in paths.items()}, cfg.paths,
                       ("catalog", "embeddings", "queries", "palette", "synonyms",
                        "templates_dir"), "paths")
    return validate_config(cfg)
