"""End-to-end pipeline runs on the shipped fixture, plus catalog splitting."""

import json

import numpy as np
import pytest

from fashionpost.config import default_config
from fashionpost.detect import ImageDetections
from fashionpost.errors import DataError, MissingEmbeddingError
from fashionpost.pipeline import (
    RunRecord,
    load_query_embeddings,
    record_to_dict,
    record_to_json,
    run_pipeline,
    split_catalog,
)
from fashionpost.retrieval import CatalogRecord

STAGES = {"filter", "nms", "colors", "embedding", "search", "vote",
          "snippets", "evidence", "generate"}


def run_fixture(fixture_image, fixture_entry, fixture_index, fixture_queries,
                **kw) -> RunRecord:
    return run_pipeline(fixture_image, fixture_entry, fixture_index,
                        default_config(), query_lookup=fixture_queries, **kw)


def test_pipeline_fallback_run(fixture_image, fixture_entry, fixture_index,
                               fixture_queries):
    record = run_fixture(fixture_image, fixture_entry, fixture_index,
                         fixture_queries)
    assert record.image_id == "fixture-001"
    assert record.bundle.provenance == "fallback"
    caption = record.bundle.caption.lower()
    for det in record.evidence.detections:
        assert det.class_name in caption
        assert det.primary_color in caption
    assert 15 <= len(record.bundle.hashtags) <= 18


def test_pipeline_filters_and_suppresses(fixture_image, fixture_entry,
                                         fixture_index, fixture_queries):
    # 4 raw detections: one below threshold, one NMS-suppressed duplicate
    record = run_fixture(fixture_image, fixture_entry, fixture_index,
                         fixture_queries)
    classes = [d.class_name for d in record.evidence.detections]
    assert classes == ["shirt", "trouser"]


def test_pipeline_stage_timings(fixture_image, fixture_entry, fixture_index,
                                fixture_queries):
    record = run_fixture(fixture_image, fixture_entry, fixture_index,
                         fixture_queries)
    assert set(record.timings) == STAGES
    assert all(v >= 0.0 for v in record.timings.values())


def test_pipeline_votes_from_neighbors(fixture_image, fixture_entry,
                                       fixture_index, fixture_queries):
    record = run_fixture(fixture_image, fixture_entry, fixture_index,
                         fixture_queries)
    assert record.evidence.fabric.label == "cotton"
    assert record.evidence.gender.label == "women"
    assert record.evidence.snippets


def test_pipeline_repeat_runs_identical_minus_timings(
        fixture_image, fixture_entry, fixture_index, fixture_queries):
    a = record_to_dict(run_fixture(fixture_image, fixture_entry, fixture_index,
                                   fixture_queries))
    b = record_to_dict(run_fixture(fixture_image, fixture_entry, fixture_index,
                                   fixture_queries))
    a.pop("timings")
    b.pop("timings")
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_pipeline_inline_embedding_overrides_lookup(
        fixture_image, fixture_entry, fixture_index, fixture_queries):
    # an orthogonal-ish inline query changes the neighbor story
    rng = np.random.default_rng(99)
    inline = rng.standard_normal(512)
    record = run_fixture(fixture_image, fixture_entry, fixture_index,
                         fixture_queries, query_embedding=inline)
    baseline = run_fixture(fixture_image, fixture_entry, fixture_index,
                           fixture_queries)
    assert record.evidence.fabric.votes != baseline.evidence.fabric.votes


def test_pipeline_missing_embedding(fixture_image, fixture_index):
    entry = ImageDetections(image_id="unmapped", image_path="", detections=())
    with pytest.raises(MissingEmbeddingError):
        run_pipeline(fixture_image, entry, fixture_index, default_config(),
                     query_lookup={})


def test_pipeline_no_detections_degenerate_bundle(
        fixture_image, fixture_index, fixture_queries, caplog):
    entry = ImageDetections(image_id="fixture-001", image_path="",
                            detections=())
    with caplog.at_level("WARNING", logger="fashionpost.pipeline"):
        record = run_pipeline(fixture_image, entry, fixture_index,
                              default_config(), query_lookup=fixture_queries)
    assert record.bundle.caption == "Fresh looks coming soon."
    assert len(record.bundle.hashtags) == 15
    assert any(getattr(r, "event", "") == "no_detections" for r in caplog.records)


def test_record_to_json_is_canonical(fixture_image, fixture_entry,
                                     fixture_index, fixture_queries):
    record = run_fixture(fixture_image, fixture_entry, fixture_index,
                         fixture_queries)
    text = record_to_json(record)
    parsed = json.loads(text)
    assert text == json.dumps(parsed, indent=2, sort_keys=True,
                              ensure_ascii=False)
    assert set(parsed) == {"image_id", "evidence", "bundle", "timings"}


def test_load_query_embeddings(fixtures_dir):
    lookup = load_query_embeddings(fixtures_dir / "queries.jsonl")
    assert "fixture-001" in lookup
    assert lookup["fixture-001"].shape == (512,)


def test_load_query_embeddings_rejects_bad_line(tmp_path):
    p = tmp_path / "queries.jsonl"
    p.write_text('{"image_id": "x"}\n', encoding="utf-8")
    with pytest.raises(DataError):
        load_query_embeddings(p)


# ------------------------------------------------------------
# Catalog splitting
# ------------------------------------------------------------


def catalog(sizes: dict[str, int]) -> list[CatalogRecord]:
    out = []
    for category, n in sizes.items():
        for i in range(n):
            out.append(CatalogRecord(id=f"{category}-{i:03d}", category=category))
    return out


def test_split_single_category_ratio():
    result = split_catalog(catalog({"saree": 10}), 0.8, seed=42)
    assert len(result.train_ids) == 8
    assert len(result.test_ids) == 2
    assert not result.flagged_categories


def test_split_partitions_exactly():
    records = catalog({"saree": 10, "shirt": 5, "kurta": 2})
    result = split_catalog(records, 0.8, seed=42)
    train, test = set(result.train_ids), set(result.test_ids)
    assert not train & test
    assert train | test == {r.id for r in records}


def test_split_every_category_in_both_sides():
    records = catalog({"saree": 10, "shirt": 5, "kurta": 2, "dupatta": 3})
    result = split_catalog(records, 0.8, seed=42)
    for category in ("saree", "shirt", "kurta", "dupatta"):
        assert any(i.startswith(category) for i in result.train_ids)
        assert any(i.startswith(category) for i in result.test_ids)


def test_split_two_records_lands_one_each():
    result = split_catalog(catalog({"kurta": 2}), 0.99, seed=1)
    assert len(result.train_ids) == 1
    assert len(result.test_ids) == 1


def test_split_lone_record_flagged_to_train():
    result = split_catalog(catalog({"saree": 4, "stole": 1}), 0.8, seed=42)
    assert "stole-000" in result.train_ids
    assert result.flagged_categories == ("stole",)


def test_split_deterministic_under_seed():
    records = catalog({"saree": 20, "shirt": 7})
    assert split_catalog(records, 0.8, 42) == split_catalog(records, 0.8, 42)
    assert (split_catalog(records, 0.8, 42).train_ids
            != split_catalog(records, 0.8, 43).train_ids)


def test_split_input_order_does_not_matter():
    records = catalog({"saree": 6, "shirt": 6})
    assert split_catalog(records, 0.8, 42) == split_catalog(records[::-1], 0.8, 42)


def test_split_rejects_bad_inputs():
    with pytest.raises(DataError):
        split_catalog([], 0.8, 42)
    with pytest.raises(DataError):
        split_catalog(catalog({"saree": 3}), 1.0, 42)
    with pytest.raises(DataError):
        split_catalog([CatalogRecord(id="x")], 0.8, 42)
