"""Error types shared across the engine.

Every error carries a short machine-readable ``code`` so the CLI and the
HTTP service can report failures uniformly without string matching.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine failures."""

    code = "engine_error"

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class DegenerateInputError(EngineError):
    """Input geometry or pixel data too degenerate to process."""

    code = "degenerate_input"


class InvalidEmbeddingError(EngineError):
    """Embedding vector that cannot be normalized or has the wrong shape."""

    code = "invalid_embedding"


class DataError(EngineError):
    """Malformed or inconsistent records in an input file."""

    code = "invalid_data"


class CorruptIndexError(EngineError):
    """Index file failed checksum or structural validation."""

    code = "corrupt_index"


class MissingImageError(EngineError):
    code = "missing_image"


class MissingEmbeddingError(EngineError):
    code = "missing_embedding"


class ConfigError(EngineError):
    """Bad configuration, including malformed endpoint URLs."""

    code = "config_error"


class TemplateError(EngineError):
    """Prompt template with missing or unknown placeholders."""

    code = "template_error"


class UndefinedMetricError(EngineError):
    """Metric requested on an input for which it is not defined."""

    code = "undefined_metric"
