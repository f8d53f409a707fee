import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trusmil.metrics import (
    MetricsReport,
    auroc,
    confusion_metrics,
    cross_fold_summary,
    fold_metrics,
    select_threshold,
)


def pairwise_auroc(scores, labels):
    """Brute-force oracle: all positive-negative pairs, ties scored 0.5."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    credit = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                credit += 1.0
            elif p == n:
                credit += 0.5
    return credit / (len(pos) * len(neg))


class TestAuroc:
    def test_hand_case(self):
        assert auroc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)

    def test_perfect_separation(self):
        assert auroc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_all_ties(self):
        assert auroc([0.5] * 6, [0, 1, 0, 1, 0, 1]) == 0.5

    def test_single_class_errors(self):
        with pytest.raises(ValueError, match="undefined"):
            auroc([0.1, 0.2], [1, 1])

    def test_matches_bruteforce_with_ties(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = rng.integers(4, 50)
            scores = rng.choice([0.0, 0.1, 0.25, 0.5, 0.77, 1.0], size=n)
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            assert auroc(scores, labels) == pairwise_auroc(scores, labels)

    def test_complement_identity_tie_free(self):
        rng = np.random.default_rng(1)
        scores = rng.permutation(np.linspace(0, 1, 20))
        labels = rng.integers(0, 2, size=20)
        labels[:2] = [0, 1]
        assert auroc(scores, labels) + auroc(-scores, labels) == pytest.approx(1.0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.sampled_from([np.exp, np.tanh, lambda x: 3 * x + 1]))
    def test_monotone_transform_invariance(self, seed, transform):
        rng = np.random.default_rng(seed)
        scores = rng.standard_normal(15)
        labels = rng.integers(0, 2, size=15)
        labels[:2] = [0, 1]
        assert auroc(transform(scores), labels) == pytest.approx(auroc(scores, labels))


class TestConfusionMetrics:
    def test_hand_case(self):
        m = confusion_metrics([0.9, 0.2, 0.6, 0.4], [1, 1, 0, 0], threshold=0.5)
        assert m["sensitivity"] == pytest.approx(0.5)
        assert m["specificity"] == pytest.approx(0.5)
        assert m["balanced_accuracy"] == pytest.approx(0.5)

    def test_perfect(self):
        m = confusion_metrics([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])
        assert (m["sensitivity"], m["specificity"], m["balanced_accuracy"]) == (1.0, 1.0, 1.0)

    def test_threshold_is_inclusive(self):
        m = confusion_metrics([0.5, 0.4], [1, 0], threshold=0.5)
        assert m["sensitivity"] == 1.0

    def test_balanced_accuracy_identity_property(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            scores = rng.random(20)
            labels = rng.integers(0, 2, size=20)
            labels[:2] = [0, 1]
            m = confusion_metrics(scores, labels, threshold=rng.random())
            assert m["balanced_accuracy"] == pytest.approx(
                (m["sensitivity"] + m["specificity"]) / 2
            )


class TestCrossFoldSummary:
    def test_hand_case(self):
        folds = [{"auroc": v} for v in [76.0, 78.0, 80.0, 77.0, 79.0]]
        mean, std = cross_fold_summary(folds)["auroc"]
        assert mean == pytest.approx(78.0)
        assert std == pytest.approx(1.5811, abs=5e-4)

    def test_single_fold_reports_zero_std(self):
        assert cross_fold_summary([{"auroc": 81.0}])["auroc"] == (81.0, 0.0)

    def test_constant_folds(self):
        mean, std = cross_fold_summary([{"a": 5.0}] * 4)["a"]
        assert (mean, std) == (5.0, 0.0)

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            cross_fold_summary([])


class TestThresholdSelection:
    def test_finds_better_threshold(self):
        scores = [0.1, 0.15, 0.2, 0.85, 0.9, 0.3]
        labels = [0, 0, 0, 1, 1, 1]
        t = select_threshold(scores, labels)
        before = confusion_metrics(scores, labels, 0.5)["balanced_accuracy"]
        after = confusion_metrics(scores, labels, t)["balanced_accuracy"]
        assert after >= before
        assert after == 1.0

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        scores = rng.random(30)
        labels = rng.integers(0, 2, size=30)
        labels[:2] = [0, 1]
        assert select_threshold(scores, labels) == select_threshold(scores, labels)


class TestMetricsReport:
    def test_accepts_consistent_folds(self):
        fold = fold_metrics([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])
        report = MetricsReport(per_fold=[fold])
        assert report.aggregate["auroc"] == (100.0, 0.0)

    def test_rejects_inconsistent_balanced_accuracy(self):
        fold = {"auroc": 80.0, "balanced_accuracy": 70.0,
                "sensitivity": 60.0, "specificity": 60.0}
        with pytest.raises(ValueError, match="inconsistent"):
            MetricsReport(per_fold=[fold])

    def test_rejects_out_of_range(self):
        fold = {"auroc": 120.0, "balanced_accuracy": 50.0,
                "sensitivity": 50.0, "specificity": 50.0}
        with pytest.raises(ValueError):
            MetricsReport(per_fold=[fold])
