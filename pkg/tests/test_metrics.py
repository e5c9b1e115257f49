import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sciconcept.annotations import Extraction, ExtractionSet, ResponseFormat
from sciconcept.corpus import Sentence
from sciconcept.metrics import (
    AlignmentError,
    MatchCounts,
    evaluate_dev,
    match_exact,
    prf,
)
from sciconcept.prompting import GoldPaper
from sciconcept.schema import TagType

# predicted vs ground-truth sets for the XO-5b example sentence
PREDICTED = ExtractionSet(
    [
        Extraction(TagType.dataset, "HATNet observations"),
        Extraction(TagType.object, "XO-5b"),
        Extraction(TagType.object, "planetary nature"),
    ]
)
GROUND_TRUTH = ExtractionSet(
    [
        Extraction(TagType.dataset, "HATNet observations"),
        Extraction(TagType.instrument, "HATNet"),
        Extraction(TagType.object, "XO-5b"),
    ]
)


class TestMatchExact:
    def test_reference_blocks(self):
        counts = match_exact(PREDICTED, GROUND_TRUTH)
        assert (counts.tp, counts.fp, counts.fn) == (2, 1, 1)

    def test_identity(self):
        counts = match_exact(GROUND_TRUTH, GROUND_TRUTH)
        assert (counts.tp, counts.fp, counts.fn) == (3, 0, 0)

    def test_tag_is_part_of_the_key(self):
        pred = ExtractionSet([Extraction(TagType.object, "HATNet")])
        gold = ExtractionSet([Extraction(TagType.instrument, "HATNet")])
        counts = match_exact(pred, gold)
        assert (counts.tp, counts.fp, counts.fn) == (0, 1, 1)

    def test_normalization_is_casefold_and_space_collapse(self):
        pred = ExtractionSet([Extraction(TagType.object, "Slow  Solar   Wind")])
        gold = ExtractionSet([Extraction(TagType.object, "slow solar wind")])
        assert match_exact(pred, gold).tp == 1
        # no stemming or punctuation stripping
        pred2 = ExtractionSet([Extraction(TagType.object, "slow solar winds")])
        assert match_exact(pred2, gold).tp == 0

    def test_symmetry_swaps_fp_fn(self):
        forward = match_exact(PREDICTED, GROUND_TRUTH)
        backward = match_exact(GROUND_TRUTH, PREDICTED)
        assert forward.tp == backward.tp
        assert forward.fp == backward.fn
        assert forward.fn == backward.fp

    def test_monotonicity(self):
        base = match_exact(PREDICTED, GROUND_TRUTH)
        more = ExtractionSet(list(PREDICTED) + [Extraction(TagType.instrument, "HATNet")])
        grown = match_exact(more, GROUND_TRUTH)
        assert prf(grown).recall >= prf(base).recall
        noise = ExtractionSet(list(PREDICTED) + [Extraction(TagType.field, "astronomy")])
        noisy = match_exact(noise, GROUND_TRUTH)
        assert prf(noisy).precision <= prf(base).precision


class TestPrf:
    def test_reference_arithmetic(self):
        scores = prf(MatchCounts(tp=2, fp=1, fn=1))
        assert scores.precision == pytest.approx(2 / 3, abs=1e-9)
        assert scores.recall == pytest.approx(2 / 3, abs=1e-9)
        assert scores.f1 == pytest.approx(2 / 3, abs=1e-9)

    def test_empty_vs_empty_flags(self):
        scores = prf(MatchCounts(0, 0, 0))
        assert scores.precision == scores.recall == scores.f1 == 0.0
        assert scores.precision_undefined and scores.recall_undefined

    def test_zero_predictions(self):
        scores = prf(MatchCounts(0, 0, 5))
        assert scores.recall == 0.0
        assert scores.precision_undefined
        assert not scores.recall_undefined

    @given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
    @settings(max_examples=200)
    def test_counts_reconstructable(self, tp, fp, fn):
        counts = MatchCounts(tp, fp, fn)
        scores = prf(counts)
        if not scores.precision_undefined:
            assert math.isclose(scores.precision * (tp + fp), tp)
        if not scores.recall_undefined:
            assert math.isclose(scores.recall * (tp + fn), tp)
        assert 0.0 <= scores.f1 <= 1.0


def gold_paper(paper_id: str, sets: list[ExtractionSet]) -> GoldPaper:
    sentences = tuple(
        (Sentence(paper_id, i, f"sentence {i}"), extractions)
        for i, extractions in enumerate(sets)
    )
    return GoldPaper(paper_id=paper_id, sentences=sentences)


OBJ_A = ExtractionSet([Extraction(TagType.object, "alpha")])
OBJ_B = ExtractionSet([Extraction(TagType.object, "beta")])
OBJ_AB = ExtractionSet([Extraction(TagType.object, "alpha"), Extraction(TagType.object, "beta")])


class TestEvaluateDev:
    def test_perfect_predictions(self):
        gold = [gold_paper("p1", [OBJ_A, OBJ_B]), gold_paper("p2", [OBJ_AB])]
        predictions = {"p1": [OBJ_A, OBJ_B], "p2": [OBJ_AB]}
        report = evaluate_dev(predictions, gold)
        assert report.precision_mean == report.recall_mean == report.f1_mean == 1.0
        assert report.precision_std == report.recall_std == report.f1_std == 0.0

    def test_half_and_full_precision_spread(self):
        # paper 1: one of two predictions correct (P=0.5); paper 2: perfect (P=1.0)
        gold = [gold_paper("p1", [OBJ_A]), gold_paper("p2", [OBJ_B])]
        predictions = {
            "p1": [ExtractionSet([Extraction(TagType.object, "alpha"),
                                  Extraction(TagType.object, "wrong")])],
            "p2": [OBJ_B],
        }
        report = evaluate_dev(predictions, gold)
        assert report.precision_mean == pytest.approx(0.75)
        assert report.precision_std == pytest.approx(0.3536, abs=1e-4)

    def test_alignment_errors(self):
        gold = [gold_paper("p1", [OBJ_A, OBJ_B])]
        with pytest.raises(AlignmentError):
            evaluate_dev({}, gold)
        with pytest.raises(AlignmentError):
            evaluate_dev({"p1": [OBJ_A]}, gold)

    def test_order_invariance(self):
        gold = [gold_paper("p1", [OBJ_A]), gold_paper("p2", [OBJ_B]), gold_paper("p3", [OBJ_AB])]
        predictions = {"p1": [OBJ_A], "p2": [OBJ_AB], "p3": [OBJ_B]}
        forward = evaluate_dev(predictions, gold)
        backward = evaluate_dev(predictions, list(reversed(gold)))
        assert forward.precision_mean == pytest.approx(backward.precision_mean)
        assert forward.f1_std == pytest.approx(backward.f1_std)

    def test_latency_stats_and_labels(self):
        gold = [gold_paper("p1", [OBJ_A])]
        report = evaluate_dev(
            {"p1": [OBJ_A]}, gold, latencies=[1.0, 2.0, 3.0],
            format=ResponseFormat.json, run_id="r9",
        )
        assert report.latency_mean == pytest.approx(2.0)
        assert report.latency_std == pytest.approx(1.0)
        payload = report.to_dict()
        assert payload["run_id"] == "r9"
        assert payload["format"] == "json"
        assert payload["latency_seconds"]["mean"] == pytest.approx(2.0)

    def test_text_report_shape(self):
        gold = [gold_paper("p1", [OBJ_A])]
        report = evaluate_dev({"p1": [OBJ_A]}, gold)
        text = report.to_text()
        assert "p1" in text and "mean±std" in text
