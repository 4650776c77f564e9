"""Retrieval-augmented caption and hashtag engine for fashion photos.

Pipeline: offline detections are filtered and deduplicated, garment
crops yield named colors, an image embedding retrieves similar catalog
products whose attributes are vote-aggregated, and the assembled
evidence drives either an LLM endpoint or a deterministic rule-based
generator.
"""

__version__ = "0.1.0"
