"""Shared tokenizer, AP, caption metrics, coverage, and diversity."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fashionpost.detect import Box
from fashionpost.errors import DataError, InvalidEmbeddingError, UndefinedMetricError
from fashionpost.evalkit import (
    FacetSet,
    GroundTruthBox,
    PredictedBox,
    SynonymDict,
    attribute_coverage,
    average_precision,
    bleu,
    clip_sim,
    clip_sim_report,
    corpus_bleu,
    default_synonyms,
    distinct_n,
    facet_hit,
    load_facets,
    load_groundtruth,
    load_synonyms,
    map_score,
    meteor_lite,
    rouge,
    tokenize,
)

tokens = st.lists(
    st.sampled_from(["navy", "shirt", "tan", "trouser", "style", "ootd"]),
    min_size=1, max_size=20,
)


def gt(image_id, cls, box):
    return GroundTruthBox(image_id=image_id, class_name=cls, box=Box(*box))


def pred(image_id, cls, box, conf):
    return PredictedBox(image_id=image_id, class_name=cls, box=Box(*box),
                        confidence=conf)


# ------------------------------------------------------------
# Tokenizer
# ------------------------------------------------------------


def test_tokenize_splits_camel_case_and_punctuation():
    assert tokenize("#NavyBlueShirt, so-good") == ["navy", "blue", "shirt", "so", "good"]


def test_tokenize_digit_boundaries():
    assert tokenize("Shirt2Go") == ["shirt2", "go"]


def test_tokenize_keeps_acronym_runs_together():
    assert tokenize("OOTD") == ["ootd"]


def test_tokenize_empty():
    assert tokenize("") == []
    assert tokenize("!!! ---") == []


# ------------------------------------------------------------
# Average precision
# ------------------------------------------------------------


def test_ap_one_tp_one_fp():
    gts = [gt("img", "shirt", (0, 0, 10, 10)), gt("img", "shirt", (20, 20, 30, 30))]
    preds = [
        pred("img", "shirt", (0, 0, 10, 10), 0.9),
        pred("img", "shirt", (50, 50, 60, 60), 0.8),
    ]
    assert average_precision(preds, gts, "shirt", 0.5) == pytest.approx(51 / 101, abs=1e-9)


def test_ap_perfect_predictions():
    gts = [gt("img", "shirt", (0, 0, 10, 10))]
    preds = [pred("img", "shirt", (0, 0, 10, 10), 0.9)]
    assert average_precision(preds, gts, "shirt", 0.5) == pytest.approx(1.0)


def test_ap_no_predictions_is_zero():
    gts = [gt("img", "shirt", (0, 0, 10, 10))]
    assert average_precision([], gts, "shirt", 0.5) == 0.0


def test_ap_no_groundtruth_is_zero():
    preds = [pred("img", "shirt", (0, 0, 10, 10), 0.9)]
    assert average_precision(preds, [], "shirt", 0.5) == 0.0


def test_ap_matching_is_image_scoped():
    # the prediction's box matches a GT in a different image: false positive
    gts = [gt("img-a", "shirt", (0, 0, 10, 10))]
    preds = [pred("img-b", "shirt", (0, 0, 10, 10), 0.9)]
    assert average_precision(preds, gts, "shirt", 0.5) == 0.0


def test_ap_each_gt_matches_once():
    gts = [gt("img", "shirt", (0, 0, 10, 10))]
    preds = [
        pred("img", "shirt", (0, 0, 10, 10), 0.9),
        pred("img", "shirt", (0, 0, 10, 10), 0.8),  # duplicate, must be FP
    ]
    ap = average_precision(preds, gts, "shirt", 0.5)
    assert ap == pytest.approx(1.0)  # precision 1 up to recall 1, FP after


def test_ap_removing_false_positive_never_decreases():
    gts = [gt("img", "shirt", (0, 0, 10, 10)), gt("img", "shirt", (20, 20, 30, 30))]
    preds = [
        pred("img", "shirt", (0, 0, 10, 10), 0.9),
        pred("img", "shirt", (50, 50, 60, 60), 0.8),
    ]
    with_fp = average_precision(preds, gts, "shirt", 0.5)
    without = average_precision(preds[:1], gts, "shirt", 0.5)
    assert without >= with_fp


def test_ap_extra_unmatched_gt_never_increases():
    gts = [gt("img", "shirt", (0, 0, 10, 10))]
    preds = [pred("img", "shirt", (0, 0, 10, 10), 0.9)]
    base = average_precision(preds, gts, "shirt", 0.5)
    more = average_precision(preds, gts + [gt("img", "shirt", (40, 40, 50, 50))],
                             "shirt", 0.5)
    assert more <= base


def test_map_averages_over_classes():
    gts = [gt("img", "shirt", (0, 0, 10, 10)), gt("img", "trouser", (20, 20, 30, 30))]
    preds = [
        pred("img", "shirt", (0, 0, 10, 10), 0.9),
        pred("img", "trouser", (50, 50, 60, 60), 0.8),
    ]
    map50, sweep = map_score(preds, gts)
    assert map50 == pytest.approx(0.5)
    assert 0.0 <= sweep <= map50


def test_map_requires_groundtruth():
    with pytest.raises(UndefinedMetricError):
        map_score([], [])


# ------------------------------------------------------------
# BLEU
# ------------------------------------------------------------


def test_bleu_identical_text():
    assert bleu("a navy shirt for work", "a navy shirt for work") == pytest.approx(1.0)


def test_bleu_short_candidate_brevity_penalty():
    assert bleu("a b", "a b c d") == pytest.approx(math.exp(-1.0), abs=1e-9)


def test_bleu_no_overlap():
    assert bleu("x y z", "a b c") == 0.0


def test_bleu_empty_candidate():
    assert bleu("", "a b") == 0.0


def test_bleu_longer_candidate_no_penalty():
    score = bleu("a b c d e", "a b c d")
    assert 0.0 < score < 1.0


def test_bleu_case_insensitive():
    assert bleu("Navy Shirt", "navy shirt") == pytest.approx(1.0)


def test_corpus_bleu_mean():
    pairs = [("a b", "a b"), ("a b", "a b c d")]
    expected = (1.0 + math.exp(-1.0)) / 2
    assert corpus_bleu(pairs) == pytest.approx(expected, abs=1e-9)


def test_corpus_bleu_empty():
    with pytest.raises(UndefinedMetricError):
        corpus_bleu([])


@given(tokens, tokens)
def test_bleu_bounded(cand, ref):
    assert 0.0 <= bleu(" ".join(cand), " ".join(ref)) <= 1.0 + 1e-12


# ------------------------------------------------------------
# ROUGE
# ------------------------------------------------------------


def test_rouge_identical_text():
    assert rouge("navy shirt today", "navy shirt today") == pytest.approx((1.0, 1.0, 1.0))


def test_rouge_partial_overlap():
    r1, r2, rl = rouge("the blue shirt", "blue shirt")
    assert rl == pytest.approx(0.8, abs=1e-9)
    assert r1 == pytest.approx(0.8, abs=1e-9)
    assert r2 == pytest.approx(2 / 3, abs=1e-9)


def test_rouge_empty_sides():
    assert rouge("", "navy") == (0.0, 0.0, 0.0)
    assert rouge("navy", "") == (0.0, 0.0, 0.0)


def test_rouge_l_respects_order():
    # same unigrams, scrambled order: R1 stays 1.0, RL drops
    r1, _, rl = rouge("shirt navy tan", "navy tan shirt")
    assert r1 == pytest.approx(1.0)
    assert rl < 1.0


@given(tokens, tokens)
def test_rouge_bounded(cand, ref):
    for value in rouge(" ".join(cand), " ".join(ref)):
        assert 0.0 <= value <= 1.0 + 1e-12


# ------------------------------------------------------------
# meteor_lite
# ------------------------------------------------------------


def test_meteor_single_identical_token():
    # one token, one chunk: penalty 0.5 * (1/1)^3
    assert meteor_lite("navy", "navy") == pytest.approx(0.5)


def test_meteor_identical_two_tokens():
    assert meteor_lite("navy shirt", "navy shirt") == pytest.approx(1 - 0.5 / 8)


def test_meteor_stemmed_match():
    # "shirts" aligns with "shirt" through the stem stage
    score = meteor_lite("blue shirts", "blue shirt")
    assert score == pytest.approx(1 - 0.5 / 8)


def test_meteor_full_fragmentation():
    # every match is its own chunk: penalty reaches its 0.5 cap
    assert meteor_lite("d c b a", "a b c d") == pytest.approx(0.5)


def test_meteor_no_match():
    assert meteor_lite("x y", "a b") == 0.0


def test_meteor_recall_weighted():
    # recall-heavy weighting: missing reference tokens hurt more than
    # extra candidate tokens
    drop_ref_token = meteor_lite("navy", "navy shirt")
    extra_cand_token = meteor_lite("navy shirt", "navy")
    assert drop_ref_token < extra_cand_token


@given(tokens, tokens)
def test_meteor_bounded(cand, ref):
    assert 0.0 <= meteor_lite(" ".join(cand), " ".join(ref)) <= 1.0 + 1e-12


# ------------------------------------------------------------
# Embedding similarity
# ------------------------------------------------------------


def test_clip_sim_parallel_and_orthogonal():
    assert clip_sim([1, 0], [2, 0]) == pytest.approx(1.0)
    assert clip_sim([1, 0], [0, 3]) == pytest.approx(0.0)


def test_clip_sim_rejects_zero_vector():
    with pytest.raises(InvalidEmbeddingError):
        clip_sim([0, 0], [1, 0])


def test_clip_sim_rejects_shape_mismatch():
    with pytest.raises(InvalidEmbeddingError):
        clip_sim([1, 0], [1, 0, 0])


def test_clip_report_delta():
    images = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    preds = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    origs = [np.array([1.0, 1.0]), np.array([1.0, 1.0])]
    report = clip_sim_report(images, preds, origs)
    assert report.mean_pred == pytest.approx(1.0)
    assert report.mean_orig == pytest.approx(math.sqrt(0.5))
    assert report.delta == pytest.approx(1.0 - math.sqrt(0.5))


def test_clip_report_requires_aligned_lists():
    with pytest.raises(UndefinedMetricError):
        clip_sim_report([np.ones(2)], [], [])


# ------------------------------------------------------------
# Facet coverage
# ------------------------------------------------------------


def facets(**values):
    return FacetSet(image_id="img", values=values)


def test_facet_set_rejects_unknown_key():
    with pytest.raises(DataError):
        facets(price="low")


def test_facet_set_rejects_empty_value():
    with pytest.raises(DataError):
        facets(color="")


def test_facet_hit_token_match():
    assert facet_hit(["#BlueShirt"], "blue", SynonymDict())


def test_facet_hit_substring_of_concatenated_tag():
    assert facet_hit(["#navyblue"], "navy", SynonymDict())


def test_facet_hit_synonym_forms():
    syn = default_synonyms()
    assert facet_hit(["#FemaleFashion"], "women", syn)
    assert facet_hit(["#DarkBlueLook"], "navy", syn)
    assert not facet_hit(["#MensWear"], "women", syn)


def test_coverage_three_of_four_facets():
    report = attribute_coverage(
        [["#BlueShirt", "#CottonLove", "#MensWear"]],
        [facets(color="blue", category="shirt", fabric="cotton", gender="women")],
    )
    assert report.per_image == (0.75,)
    assert report.mean == pytest.approx(0.75)
    assert report.at_tau == pytest.approx(1.0)
    assert report.scored == 1 and report.excluded == 0


def test_coverage_extremes():
    full = attribute_coverage([["#BlueShirt"]], [facets(color="blue", category="shirt")])
    assert full.mean == pytest.approx(1.0)
    none = attribute_coverage([["#Unrelated"]], [facets(color="blue")])
    assert none.mean == 0.0


def test_coverage_excludes_empty_facet_images():
    report = attribute_coverage(
        [["#BlueShirt"], ["#Whatever"]],
        [facets(color="blue"), FacetSet(image_id="bare", values={})],
    )
    assert report.per_image[1] is None
    assert report.scored == 1 and report.excluded == 1


def test_coverage_undefined_when_nothing_scorable():
    with pytest.raises(UndefinedMetricError):
        attribute_coverage([["#X"]], [FacetSet(image_id="bare", values={})])


def test_coverage_requires_aligned_inputs():
    with pytest.raises(DataError):
        attribute_coverage([["#X"]], [])


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.sampled_from(["#BlueShirt", "#Cotton", "#WomenStyle", "#Noise"]),
             max_size=6),
    st.lists(st.sampled_from(["#TanLook", "#SilkFeel", "#MensWear"]), max_size=4),
)
def test_coverage_monotone_under_added_tags(base_tags, extra):
    facet_set = facets(color="blue", category="shirt", fabric="cotton", gender="women")
    before = attribute_coverage([base_tags], [facet_set]).mean
    after = attribute_coverage([base_tags + extra], [facet_set]).mean
    assert after >= before


def test_coverage_at_tau_non_increasing():
    corpus_tags = [["#BlueShirt"], ["#Cotton"], ["#Noise"]]
    corpus_facets = [
        facets(color="blue", category="shirt"),
        facets(fabric="cotton", gender="women"),
        facets(color="red"),
    ]
    values = [
        attribute_coverage(corpus_tags, corpus_facets, tau=t).at_tau
        for t in (0.0, 0.25, 0.5, 0.75, 1.0)
    ]
    assert values == sorted(values, reverse=True)


# ------------------------------------------------------------
# Distinct-n
# ------------------------------------------------------------


def test_distinct_repeated_token():
    tags = [["#Winter", "#Fashion", "#Winter", "#Style"]]
    assert distinct_n(tags, 1) == pytest.approx(0.75)
    assert distinct_n(tags, 2) == pytest.approx(1.0)


def test_distinct_degenerate_cases():
    assert distinct_n([["#A", "#A", "#A", "#A"]], 1) == pytest.approx(0.25)
    assert distinct_n([["#A", "#B", "#C"]], 1) == pytest.approx(1.0)


def test_distinct_pools_across_images():
    # the same token in two images is one unique unigram over two total
    assert distinct_n([["#Style"], ["#Style"]], 1) == pytest.approx(0.5)


def test_distinct_empty_corpus():
    with pytest.raises(UndefinedMetricError):
        distinct_n([[]], 1)
    with pytest.raises(DataError):
        distinct_n([["#A"]], 0)


@given(st.lists(st.lists(st.sampled_from(["#Navy", "#Tan", "#Shirt"]), max_size=4),
                min_size=1, max_size=5),
       st.randoms(use_true_random=False))
def test_distinct_permutation_invariant_across_images(corpus, rand):
    if not any(any(tokenize(t) for t in tags) for tags in corpus):
        return
    shuffled = list(corpus)
    rand.shuffle(shuffled)
    assert distinct_n(shuffled, 1) == pytest.approx(distinct_n(corpus, 1))


# ------------------------------------------------------------
# File loaders
# ------------------------------------------------------------


def test_load_synonyms_and_comments(tmp_path):
    p = tmp_path / "syn.tsv"
    p.write_text("# comment\nmen\tmale,mens\n\nnavy\tdark blue\n", encoding="utf-8")
    syn = load_synonyms(p)
    assert syn.forms("men") == frozenset({"men", "male", "mens"})
    assert syn.forms("navy") == frozenset({"navy", "dark blue"})
    assert syn.forms("unlisted") == frozenset({"unlisted"})


def test_load_synonyms_rejects_bad_line(tmp_path):
    p = tmp_path / "syn.tsv"
    p.write_text("men male mens\n", encoding="utf-8")
    with pytest.raises(DataError):
        load_synonyms(p)


def test_load_facets_normalizes(tmp_path):
    p = tmp_path / "facets.jsonl"
    p.write_text(json.dumps({"image_id": "i1", "color": " Navy ", "gender": ""}) + "\n",
                 encoding="utf-8")
    out = load_facets(p)
    assert out[0].values == {"color": "navy"}


def test_load_groundtruth_shares_detection_schema(tmp_path):
    p = tmp_path / "gt.jsonl"
    record = {
        "image_id": "i1",
        "detections": [{"class": "shirt", "box": [0, 0, 5, 5], "conf": 1.0}],
    }
    p.write_text(json.dumps(record) + "\n", encoding="utf-8")
    out = load_groundtruth(p)
    assert out[0].class_name == "shirt"
    assert out[0].box == Box(0, 0, 5, 5)


def test_load_groundtruth_rejects_bad_box(tmp_path):
    p = tmp_path / "gt.jsonl"
    p.write_text(json.dumps({"image_id": "i1", "detections": [{"class": "x"}]}) + "\n",
                 encoding="utf-8")
    with pytest.raises(DataError):
        load_groundtruth(p)
