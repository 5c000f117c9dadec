import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from augmuse.metrics import (
    MetricError,
    MetricReport,
    confusion,
    f1,
    metric_report,
    pr_auc,
    reports_to_csv,
    roc_auc,
    select_thresholds,
)


def oracle_roc(scores, labels):
    """Exhaustive concordant/tied pair counting."""
    pos = scores[labels > 0.5]
    neg = scores[labels <= 0.5]
    total = sum(1.0 if p > n else (0.5 if p == n else 0.0) for p in pos for n in neg)
    return total / (len(pos) * len(neg))


def oracle_ap(scores, labels):
    """Exhaustive sweep over distinct thresholds, ties sharing one bucket."""
    n_pos = (labels > 0.5).sum()
    ap, prev_recall = 0.0, 0.0
    for t in np.unique(scores)[::-1]:
        pred = scores >= t
        tp = (pred & (labels > 0.5)).sum()
        precision, recall = tp / pred.sum(), tp / n_pos
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def random_instance(rng, force_ties=True):
    n, c = int(rng.integers(2, 9)), int(rng.integers(1, 5))
    scores = rng.random((n, c))
    if force_ties:
        scores = np.round(scores, 1)
    labels = rng.integers(0, 2, (n, c)).astype(float)
    return scores, labels


# -- trivial and hand-computed cases -------------------------------------------

def test_perfect_scores_are_one():
    labels = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    for averaging in ("macro", "micro"):
        assert roc_auc(labels, labels, averaging) == 1.0
        assert pr_auc(labels, labels, averaging) == 1.0
        assert f1(labels, labels, [0.5, 0.5], averaging) == 1.0


def test_inverted_scores_are_zero():
    scores = np.array([[0.9], [0.1]])
    labels = np.array([[0.0], [1.0]])
    assert roc_auc(scores, labels, "micro") == 0.0


def test_constant_scores_ap_equals_prevalence():
    scores = np.full((5, 1), 0.3)
    labels = np.array([[1], [0], [1], [0], [0]], dtype=float)
    assert pr_auc(scores, labels, "micro") == pytest.approx(0.4, abs=1e-12)


def test_micro_f1_hand_computed_two_thirds():
    # pooled TP=2 FP=1 FN=1 -> micro F1 = 2/3
    scores = np.array([[0.9, 0.9], [0.1, 0.9], [0.1, 0.1]])
    labels = np.array([[1.0, 1.0], [0.0, 0.0], [0.0, 1.0]])
    assert f1(scores, labels, [0.5, 0.5], "micro") == pytest.approx(2.0 / 3.0, abs=1e-12)


def test_empty_predictions_with_positives_give_zero():
    scores = np.zeros((3, 2))
    labels = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    assert f1(scores, labels, [0.9, 0.9], "macro") == 0.0


# -- oracle equivalence ---------------------------------------------------------

def test_auc_matches_oracles_on_random_instances():
    rng = np.random.default_rng(123)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for _ in range(100):
            scores, labels = random_instance(rng)
            flat_s, flat_l = scores.ravel(), labels.ravel()
            if (flat_l > 0.5).any() and (flat_l <= 0.5).any():
                assert roc_auc(scores, labels, "micro") == pytest.approx(oracle_roc(flat_s, flat_l), abs=1e-9)
                assert pr_auc(scores, labels, "micro") == pytest.approx(oracle_ap(flat_s, flat_l), abs=1e-9)
            per_roc = [
                oracle_roc(scores[:, k], labels[:, k])
                for k in range(scores.shape[1])
                if (labels[:, k] > 0.5).any() and (labels[:, k] <= 0.5).any()
            ]
            if per_roc:
                assert roc_auc(scores, labels, "macro") == pytest.approx(np.mean(per_roc), abs=1e-9)


def test_select_thresholds_attains_grid_optimum():
    rng = np.random.default_rng(7)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for _ in range(100):
            scores = np.round(rng.random((8, 2)), 1)
            labels = rng.integers(0, 2, (8, 2)).astype(float)
            labels[rng.integers(0, 8), :] = 1.0  # ensure positives
            thresholds = select_thresholds(scores, labels)
            for k in range(2):
                grid_best = max(
                    f1(scores[:, [k]], labels[:, [k]], [t], "macro") for t in np.unique(scores[:, k])
                )
                achieved = f1(scores[:, [k]], labels[:, [k]], [thresholds[k]], "macro")
                assert achieved >= grid_best - 1e-12


def test_select_thresholds_midpoint_convention():
    scores = np.array([[0.9], [0.1]])
    labels = np.array([[1.0], [0.0]])
    assert select_thresholds(scores, labels)[0] == pytest.approx(0.5)


def test_select_thresholds_fallback_for_empty_class():
    scores = np.array([[0.9], [0.1]])
    labels = np.zeros((2, 1))
    with pytest.warns(UserWarning, match="no validation positives"):
        assert select_thresholds(scores, labels)[0] == 0.5


def test_select_thresholds_empty_input():
    with pytest.raises(ValueError):
        select_thresholds(np.zeros((0, 1)), np.zeros((0, 1)))


# -- invariance properties -------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_auc_invariant_under_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    scores, labels = random_instance(rng, force_ties=False)
    if not ((labels.ravel() > 0.5).any() and (labels.ravel() <= 0.5).any()):
        return
    warped = 1.0 / (1.0 + np.exp(-(3.0 * scores - 1.0)))  # strictly monotone
    assert roc_auc(scores, labels, "micro") == pytest.approx(roc_auc(warped, labels, "micro"), abs=1e-9)
    assert pr_auc(scores, labels, "micro") == pytest.approx(pr_auc(warped, labels, "micro"), abs=1e-9)


def test_threshold_selection_f1_invariant_under_monotone_transform():
    rng = np.random.default_rng(3)
    scores = rng.random((10, 1))
    labels = rng.integers(0, 2, (10, 1)).astype(float)
    labels[0] = 1.0
    warped = scores**3
    base = f1(scores, labels, select_thresholds(scores, labels), "macro")
    transformed = f1(warped, labels, select_thresholds(warped, labels), "macro")
    assert base == pytest.approx(transformed, abs=1e-12)


def test_label_permutation_auc_near_half():
    rng = np.random.default_rng(0)
    scores = rng.random((30, 1))
    labels = np.zeros((30, 1))
    labels[:12] = 1.0
    values = []
    for _ in range(1000):
        perm = rng.permutation(30)
        values.append(roc_auc(scores, labels[perm], "micro"))
    assert np.mean(values) == pytest.approx(0.5, abs=0.05)


def test_macro_invariant_under_class_reordering():
    rng = np.random.default_rng(5)
    scores = rng.random((12, 4))
    labels = (rng.random((12, 4)) > 0.5).astype(float)
    labels[0], labels[1] = 1.0, 0.0
    order = rng.permutation(4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert roc_auc(scores, labels, "macro") == pytest.approx(
            roc_auc(scores[:, order], labels[:, order], "macro"), abs=1e-12
        )


def test_micro_invariant_under_track_reordering():
    rng = np.random.default_rng(6)
    scores = rng.random((12, 4))
    labels = (rng.random((12, 4)) > 0.5).astype(float)
    order = rng.permutation(12)
    assert pr_auc(scores, labels, "micro") == pytest.approx(
        pr_auc(scores[order], labels[order], "micro"), abs=1e-12
    )


def test_pr_auc_bounded_below_by_prevalence_for_perfect_ranking():
    scores = np.array([[0.9], [0.8], [0.2], [0.1]])
    labels = np.array([[1.0], [1.0], [0.0], [0.0]])
    assert pr_auc(scores, labels, "micro") == 1.0
    constant = np.full_like(scores, 0.5)
    assert pr_auc(constant, labels, "micro") == pytest.approx(0.5)  # prevalence


# -- degenerate handling ---------------------------------------------------------

def test_macro_excludes_degenerate_classes_with_warning():
    scores = np.array([[0.9, 0.9], [0.1, 0.8]])
    labels = np.array([[1.0, 1.0], [0.0, 1.0]])  # class 1 has no negatives
    with pytest.warns(UserWarning, match="excluded degenerate"):
        assert roc_auc(scores, labels, "macro") == 1.0


def test_all_degenerate_macro_raises():
    scores = np.array([[0.9], [0.1]])
    labels = np.ones((2, 1))
    with pytest.raises(MetricError):
        roc_auc(scores, labels, "macro")
    with pytest.raises(MetricError):
        pr_auc(scores, np.zeros((2, 1)), "micro")


# -- report and serialization -----------------------------------------------------

def test_metric_report_round_trip():
    rng = np.random.default_rng(9)
    scores = rng.random((10, 3))
    labels = (rng.random((10, 3)) > 0.4).astype(float)
    labels[0] = 1.0
    labels[1] = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        thresholds = select_thresholds(scores, labels)
        report = metric_report(scores, labels, thresholds)
    parsed = MetricReport.from_json(report.to_json())
    assert parsed == report
    for value in report.values().values():
        assert 0.0 <= value <= 1.0


def test_perfect_report_all_ones():
    labels = np.array([[1.0, 0.0], [0.0, 1.0]])
    report = metric_report(labels, labels, [0.5, 0.5])
    assert all(v == 1.0 for v in report.values().values())


def test_reports_to_csv_layout():
    labels = np.array([[1.0, 0.0], [0.0, 1.0]])
    report = metric_report(labels, labels, [0.5, 0.5])
    text = reports_to_csv([("baseline", report), ("ddsp", report)])
    lines = text.strip().split("\n")
    assert lines[0] == "model,f1_macro,f1_micro,pr_auc_macro,pr_auc_micro,roc_auc_macro,roc_auc_micro"
    assert lines[1].startswith("baseline,1.000000")
    assert len(lines) == 3


# -- confusion --------------------------------------------------------------------

def test_confusion_identity_when_all_correct():
    cm = confusion(np.array([0, 1, 2, 3]), np.array([0, 1, 2, 3]), 4)
    assert np.array_equal(cm.normalized, np.eye(4))
    assert cm.flagged_rows == ()


def test_confusion_zero_row_flagged():
    cm = confusion(np.array([0, 0]), np.array([0, 1]), 3)
    assert cm.flagged_rows == (2,)
    assert np.all(cm.normalized[2] == 0.0)
    for i in (0, 1):
        assert cm.normalized[i].sum() == pytest.approx(1.0, abs=1e-6)


def test_confusion_matches_hand_tally():
    predicted = np.array([0, 1, 1, 2, 0, 2])
    true = np.array([0, 0, 1, 1, 2, 2])
    cm = confusion(predicted, true, 3)
    assert cm.counts.tolist() == [[1, 1, 0], [0, 1, 1], [1, 0, 1]]


def test_confusion_rejects_out_of_range():
    with pytest.raises(ValueError):
        confusion(np.array([3]), np.array([0]), 3)
