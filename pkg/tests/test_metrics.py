"""Classification metrics and report serialization."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from melcgraph.metrics import (
    FormatError,
    MetricsReport,
    auroc_score,
    compute_metrics,
    format_results_table,
    load_metrics_json,
    per_sample_metrics,
    save_metrics_json,
)


def auroc_pair_counting(labels, scores):
    """Direct definition: fraction of (positive, negative) pairs ranked
    correctly, with ties worth half a point."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    if not pos or not neg:
        return float("nan")
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


class TestAuroc:
    def test_perfect_separation(self):
        assert auroc_score([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == pytest.approx(1.0)

    def test_inverted_separation(self):
        assert auroc_score([0, 0, 1, 1], [0.9, 0.8, 0.2, 0.1]) == pytest.approx(0.0)

    def test_hand_checked_with_tie(self):
        # pairs: (.8,.4)=1, (.8,.4)=1, (.4,.4)=.5, (.4,.4)=.5 -> 3/4
        labels = [0, 0, 1, 1]
        scores = [0.4, 0.4, 0.4, 0.8]
        assert auroc_score(labels, scores) == pytest.approx(0.75)

    def test_all_scores_equal_is_half(self):
        assert auroc_score([0, 1, 0, 1], [0.3, 0.3, 0.3, 0.3]) == pytest.approx(0.5)

    def test_single_class_is_nan(self):
        assert math.isnan(auroc_score([1, 1, 1], [0.1, 0.5, 0.9]))
        assert math.isnan(auroc_score([0, 0], [0.1, 0.5]))

    @settings(max_examples=100, deadline=None)
    @given(
        seed=st.integers(0, 2**31),
        n=st.integers(2, 40),
        coarse=st.booleans(),
    )
    def test_matches_pair_counting_oracle(self, seed, n, coarse):
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 2, n)
        if coarse:
            scores = rng.integers(0, 4, n) / 4.0  # force ties
        else:
            scores = rng.normal(size=n)
        got = auroc_score(labels, scores)
        want = auroc_pair_counting(labels, scores)
        if math.isnan(want):
            assert math.isnan(got)
        else:
            assert got == pytest.approx(want, abs=1e-12)


class TestComputeMetrics:
    def test_perfect_classifier(self):
        report = compute_metrics([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9])
        assert report.accuracy == pytest.approx(1.0)
        assert report.f1 == pytest.approx(1.0)
        assert report.auroc == pytest.approx(1.0)
        assert report.auroc_defined
        assert (report.tp, report.fp, report.tn, report.fn) == (2, 0, 2, 0)
        assert report.n_evaluated == 4

    def test_hand_checked_confusion(self):
        labels = [1, 1, 0, 0, 1]
        scores = [0.9, 0.3, 0.6, 0.2, 0.5]
        report = compute_metrics(labels, scores)
        # preds at 0.5: [1, 0, 1, 0, 1]
        assert (report.tp, report.fp, report.tn, report.fn) == (2, 1, 1, 1)
        assert report.accuracy == pytest.approx(3 / 5)
        assert report.f1 == pytest.approx(2 * 2 / (2 * 2 + 1 + 1))

    def test_threshold_is_inclusive(self):
        report = compute_metrics([1], [0.5], threshold=0.5)
        assert report.tp == 1

    def test_f1_zero_when_no_positive_activity(self):
        report = compute_metrics([0, 0, 0], [0.1, 0.1, 0.1])
        assert report.f1 == 0.0
        assert not report.auroc_defined
        assert math.isnan(report.auroc)

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ValueError):
            compute_metrics([0, 1], [0.5])

    def test_non_binary_labels_rejected(self):
        with pytest.raises(ValueError):
            compute_metrics([0, 2], [0.5, 0.5])

    def test_empty_inputs_rejected(self):
        with pytest.raises(ValueError):
            compute_metrics([], [])


class TestPerSampleMetrics:
    def test_macro_average_reference(self):
        # sample A: acc 1.0, f1 1.0, auroc 1.0
        # sample B: acc 0.5, f1 0.0, auroc 0.0
        labels = [0, 1, 0, 1]
        scores = [0.2, 0.8, 0.4, 0.3]
        sids = ["A", "A", "B", "B"]
        report = per_sample_metrics(labels, scores, sids)
        assert report.accuracy == pytest.approx(0.75)
        assert report.f1 == pytest.approx(0.5)
        assert report.auroc == pytest.approx(0.5)

    def test_confusion_counts_stay_pooled(self):
        labels = [0, 1, 0, 1]
        scores = [0.2, 0.8, 0.4, 0.3]
        sids = ["A", "A", "B", "B"]
        report = per_sample_metrics(labels, scores, sids)
        pooled = compute_metrics(labels, scores)
        assert (report.tp, report.fp, report.tn, report.fn) == (
            pooled.tp,
            pooled.fp,
            pooled.tn,
            pooled.fn,
        )
        assert report.n_evaluated == 4

    def test_single_class_samples_skipped_for_auroc(self):
        labels = [1, 1, 0, 1]
        scores = [0.9, 0.8, 0.1, 0.7]
        sids = ["A", "A", "B", "B"]
        report = per_sample_metrics(labels, scores, sids)
        assert report.auroc_defined
        assert report.auroc == pytest.approx(1.0)  # only sample B counts

    def test_all_samples_single_class(self):
        labels = [1, 1, 0, 0]
        scores = [0.9, 0.8, 0.1, 0.2]
        sids = ["A", "A", "B", "B"]
        report = per_sample_metrics(labels, scores, sids)
        assert not report.auroc_defined
        assert math.isnan(report.auroc)

    def test_single_sample_matches_pooled(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 2, 20)
        scores = rng.uniform(size=20)
        report = per_sample_metrics(labels, scores, ["S"] * 20)
        pooled = compute_metrics(labels, scores)
        assert report.accuracy == pytest.approx(pooled.accuracy)
        assert report.f1 == pytest.approx(pooled.f1)
        assert report.auroc == pytest.approx(pooled.auroc)

    def test_misaligned_sample_ids_rejected(self):
        with pytest.raises(ValueError):
            per_sample_metrics([0, 1], [0.2, 0.8], ["A"])


class TestMetricsJson:
    def test_round_trip(self, tmp_path):
        report = compute_metrics([0, 1, 0, 1], [0.2, 0.8, 0.6, 0.7])
        path = tmp_path / "metrics.json"
        save_metrics_json(report, path)
        payload = load_metrics_json(path)
        assert payload["accuracy"] == pytest.approx(report.accuracy)
        assert payload["f1"] == pytest.approx(report.f1)
        assert payload["auroc"] == pytest.approx(report.auroc)
        assert payload["tp"] == report.tp
        assert payload["n_evaluated"] == 4

    def test_nan_auroc_serializes_as_null(self, tmp_path):
        report = compute_metrics([1, 1], [0.2, 0.8])
        path = tmp_path / "metrics.json"
        save_metrics_json(report, path)
        raw = json.loads(path.read_text())
        assert raw["auroc"] is None
        assert raw["auroc_defined"] is False

    def test_context_fields_included(self, tmp_path):
        report = compute_metrics([0, 1], [0.2, 0.8])
        path = tmp_path / "metrics.json"
        save_metrics_json(report, path, context={"model": "grand", "seed": 3})
        payload = load_metrics_json(path)
        assert payload["model"] == "grand"
        assert payload["seed"] == 3

    def test_invalid_json_raises_format_error(self, tmp_path):
        path = tmp_path / "metrics.json"
        path.write_text("{broken")
        with pytest.raises(FormatError):
            load_metrics_json(path)

    def test_non_object_payload_rejected(self, tmp_path):
        path = tmp_path / "metrics.json"
        path.write_text("[1, 2]")
        with pytest.raises(FormatError):
            load_metrics_json(path)


class TestResultsTable:
    def test_contains_header_and_rows(self):
        rows = [
            {
                "embedding": "spatial",
                "reduction": "umap",
                "accuracy": 0.95,
                "f1": 0.9512,
                "auroc": 0.99,
            },
            {
                "embedding": "feature",
                "reduction": "none",
                "accuracy": 0.8,
                "f1": 0.75,
                "auroc": float("nan"),
            },
        ]
        text = format_results_table(rows)
        lines = text.splitlines()
        assert len(lines) == 4  # header, rule, two rows
        assert "Embedding" in lines[0] and "AUROC" in lines[0]
        assert set(lines[1]) <= {"-", " "}
        assert "0.9500" in lines[2]
        assert "n/a" in lines[3]

    def test_columns_align(self):
        rows = [
            {
                "embedding": "x",
                "reduction": "pca",
                "accuracy": 0.5,
                "f1": 0.5,
                "auroc": 0.5,
            }
        ]
        text = format_results_table(rows)
        header, rule, row = text.splitlines()
        assert header.index("Dimension Reduction") == row.index("pca")

    def test_empty_rows_gives_header_only(self):
        text = format_results_table([])
        assert len(text.splitlines()) == 2


def test_report_is_plain_dataclass():
    report = MetricsReport(
        accuracy=1.0,
        f1=1.0,
        auroc=1.0,
        auroc_defined=True,
        tp=1,
        fp=0,
        tn=1,
        fn=0,
        n_evaluated=2,
    )
    assert report.accuracy == 1.0
