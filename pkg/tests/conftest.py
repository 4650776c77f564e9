"""Shared fixtures: the shipped mini-corpus, loaded once per session."""

from pathlib import Path

import pytest

from fashionpost.detect import load_detections, load_image
from fashionpost.pipeline import load_query_embeddings
from fashionpost.retrieval import load_index

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(autouse=True)
def _no_ambient_endpoint(monkeypatch):
    # fallback-mode tests must not pick up a real endpoint from the shell
    for name in ("GENAI_ENDPOINT", "GENAI_MODEL", "GENAI_API_KEY"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def fixture_index():
    return load_index(FIXTURES / "index.bin")


@pytest.fixture(scope="session")
def fixture_queries():
    return load_query_embeddings(FIXTURES / "queries.jsonl")


@pytest.fixture(scope="session")
def fixture_entry():
    return load_detections(FIXTURES / "detections.jsonl")[0]


@pytest.fixture(scope="session")
def fixture_image():
    return load_image(FIXTURES / "fixture-001.png")
