import math

import numpy as np
import pytest

from tapudd.errors import InvalidInput
from tapudd.metrics import aupr, auroc, evaluate, fpr_at_tpr, roc_curve


def pair_count_auroc(pos, neg):
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def brute_force_aupr(pos, neg):
    """Average precision enumerating every distinct threshold from high to low."""
    total = 0.0
    prev_recall = 0.0
    for t in sorted(set(pos) | set(neg), reverse=True):
        tp = sum(p >= t for p in pos)
        fp = sum(n >= t for n in neg)
        recall = tp / len(pos)
        total += (recall - prev_recall) * tp / (tp + fp)
        prev_recall = recall
    return total


def counting_fpr(pos, neg, tpr):
    rank = math.ceil(tpr * len(pos) - 1e-9)
    threshold = sorted(pos, reverse=True)[rank - 1]
    return sum(n >= threshold for n in neg) / len(neg), threshold


def trapezoid(y, x):
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2))


def random_instance(rng):
    n_id, n_ood = rng.integers(1, 500, size=2)
    pos = rng.normal(1.0, 1.0, size=n_id).round(1)
    neg = rng.normal(0.0, 1.0, size=n_ood).round(1)
    return pos.tolist(), neg.tolist()


class TestAuroc:
    def test_perfect(self):
        assert auroc([1, 2], [-1, 0]) == 1.0

    def test_single_tie(self):
        assert auroc([1], [1]) == 0.5

    def test_three_of_four_pairs(self):
        assert auroc([3, 1], [2, 0]) == 0.75

    def test_swap_complement(self, rng):
        pos, neg = random_instance(rng)
        assert auroc(pos, neg) + auroc(neg, pos) == pytest.approx(1.0, abs=1e-12)

    def test_empty(self):
        with pytest.raises(InvalidInput):
            auroc([], [1.0])

    def test_rejects_nan(self):
        with pytest.raises(InvalidInput):
            auroc([1.0], [np.nan])


class TestAupr:
    def test_perfect(self):
        assert aupr([3, 4], [1, 2]) == 1.0

    def test_fully_inverted_single_pair(self):
        assert aupr([1], [2]) == 0.5

    def test_ties_form_one_step(self):
        # One threshold admits both: precision 1/2 at recall 1.
        assert aupr([1], [1]) == 0.5


def test_all_tied_scores():
    assert auroc([2.0, 2.0, 2.0], [2.0]) == 0.5
    assert aupr([2.0, 2.0, 2.0], [2.0]) == 0.75


class TestFprAtTpr:
    def test_separated(self):
        fpr, threshold = fpr_at_tpr([5, 6, 7], [1, 2, 3])
        assert fpr == 0.0 and threshold == 5.0

    def test_order_statistic_threshold(self):
        fpr, threshold = fpr_at_tpr(list(range(1, 101)), [5, 6, 7], tpr=0.95)
        assert threshold == 6.0
        assert fpr == pytest.approx(2 / 3)

    def test_identical_sets(self, rng):
        scores = rng.normal(size=200).tolist()
        fpr, _ = fpr_at_tpr(scores, scores, tpr=0.95)
        assert fpr >= 0.95 - 1 / 200

    @pytest.mark.parametrize("tpr", [0.0, -0.1, 1.5])
    def test_invalid_tpr(self, tpr):
        with pytest.raises(InvalidInput):
            fpr_at_tpr([1.0], [0.0], tpr=tpr)

    def test_monotone_in_tpr(self, rng):
        pos, neg = random_instance(rng)
        fprs = [fpr_at_tpr(pos, neg, t)[0] for t in np.linspace(0.05, 1.0, 20)]
        assert all(a <= b for a, b in zip(fprs, fprs[1:]))


def test_invariant_under_increasing_transform(rng):
    pos, neg = random_instance(rng)
    tpos, tneg = np.exp(np.array(pos)), np.exp(np.array(neg))
    assert auroc(pos, neg) == pytest.approx(auroc(tpos, tneg), abs=1e-12)
    assert aupr(pos, neg) == pytest.approx(aupr(tpos, tneg), abs=1e-12)
    assert fpr_at_tpr(pos, neg)[0] == fpr_at_tpr(tpos, tneg)[0]


def test_roc_curve_endpoints_and_trapezoid(rng):
    pos, neg = random_instance(rng)
    fpr, tpr, thresholds = roc_curve(pos, neg)
    assert (fpr[0], tpr[0], fpr[-1], tpr[-1]) == (0.0, 0.0, 1.0, 1.0)
    assert thresholds[0] == np.inf
    assert trapezoid(tpr, fpr) == pytest.approx(auroc(pos, neg), abs=1e-12)


def test_evaluate_report():
    report = evaluate([1.0, 2.0, 3.0], [0.0, 0.5])
    assert report.auroc == 1.0 and report.aupr == 1.0 and report.fpr95 == 0.0
    assert (report.n_id, report.n_ood, report.aupr_positive) == (3, 2, "in")
    assert report.threshold_at_tpr95 == 1.0


@pytest.mark.slow
def test_oracle_equivalence_on_random_instances(rng):
    for _ in range(100):
        pos, neg = random_instance(rng)
        assert auroc(pos, neg) == pytest.approx(pair_count_auroc(pos, neg), abs=1e-12)
        fpr, tpr, _ = roc_curve(pos, neg)
        assert trapezoid(tpr, fpr) == pytest.approx(auroc(pos, neg), abs=1e-12)
        assert aupr(pos, neg) == pytest.approx(brute_force_aupr(pos, neg), abs=1e-12)
        assert fpr_at_tpr(pos, neg, 0.95) == counting_fpr(pos, neg, 0.95)
