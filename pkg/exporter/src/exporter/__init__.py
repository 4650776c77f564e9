"""Offline exporter for the fashion post engine's input files.

Produces catalog.jsonl, embeddings.bin, detections.jsonl, and
queries.jsonl plus a checksum manifest. The engine and this package
share nothing but the file formats.
"""

from .errors import ExportError

__all__ = ["ExportError"]
