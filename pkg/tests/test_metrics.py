import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parity_audit.errors import SingleClassError
from parity_audit.metrics import (
    ConfusionMatrix,
    MetricVector,
    ScoreSet,
    brier,
    confusion,
    evaluate,
    group_variance,
    point_metrics,
    roc_and_auc,
    youden_threshold,
)

from oracles import all_pairs_auc, brute_force_youden, confusion_counts, random_scoreset


def ss(scores, labels):
    return ScoreSet(np.array(scores, dtype=float), np.array(labels))


# ---------------------------------------------------------------- confusion


def test_confusion_simple():
    assert confusion(ss([0.9, 0.1], [1, 0]), 0.5) == ConfusionMatrix(tp=1, fp=0, tn=1, fn=0)


def test_confusion_threshold_zero_predicts_all_positive():
    cm = confusion(ss([0.0, 0.3, 0.7, 1.0], [0, 1, 0, 1]), 0.0)
    assert (cm.tp, cm.fp, cm.tn, cm.fn) == (2, 2, 0, 0)


def test_confusion_hand_enumeration():
    cm = confusion(ss([0.2, 0.4, 0.6, 0.8], [0, 1, 0, 1]), 0.5)
    assert cm == ConfusionMatrix(tp=1, fp=1, tn=1, fn=1)


def test_confusion_ties_predict_positive():
    cm = confusion(ss([0.5, 0.5], [0, 1]), 0.5)
    assert (cm.tp, cm.fp) == (1, 1)


def test_confusion_empty_raises():
    with pytest.raises(ValueError):
        confusion(ss([], []), 0.5)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=1, max_size=50), st.floats(0, 1))
def test_confusion_matches_loop_count(rows, t):
    scores, labels = zip(*rows)
    cm = confusion(ss(scores, labels), t)
    assert (cm.tp, cm.fp, cm.tn, cm.fn) == confusion_counts(scores, labels, t)
    assert cm.total == len(rows)


# ------------------------------------------------------------ point metrics


def test_point_metrics_perfect():
    m = point_metrics(ConfusionMatrix(tp=1, fp=0, tn=1, fn=0))
    assert (m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0)
    assert not m.flags


def test_point_metrics_no_predicted_positives():
    m = point_metrics(ConfusionMatrix(tp=0, fp=0, tn=5, fn=5))
    assert m.precision == 0.0 and "precision_undefined" in m.flags
    assert m.get("precision") is None
    assert m.recall == 0.0 and m.get("recall") == 0.0


def test_point_metrics_hand_arithmetic():
    m = point_metrics(ConfusionMatrix(tp=2, fp=1, tn=1, fn=0))
    assert m.precision == pytest.approx(2 / 3)
    assert m.recall == 1.0
    assert m.f1 == pytest.approx(0.8)
    assert m.specificity == pytest.approx(0.5)


def test_point_metrics_no_positives_flags_recall_and_f1():
    m = point_metrics(ConfusionMatrix(tp=0, fp=2, tn=3, fn=0))
    assert {"recall_undefined", "f1_undefined"} <= m.flags
    assert m.get("f1") is None


@given(st.integers(0, 30), st.integers(0, 30), st.integers(0, 30), st.integers(0, 30))
def test_f1_invariant(tp, fp, tn, fn):
    if tp + fp + tn + fn == 0:
        return
    m = point_metrics(ConfusionMatrix(tp, fp, tn, fn))
    p, r = m.get("precision"), m.get("recall")
    if p is not None and r is not None and p + r > 0:
        assert m.f1 == pytest.approx(2 * p * r / (p + r), rel=1e-12)


# ------------------------------------------------------------------ ROC/AUC


def test_auc_perfect_separation():
    _, a = roc_and_auc(ss([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]))
    assert a == 1.0


def test_auc_tie_credit():
    _, a = roc_and_auc(ss([0.4, 0.4], [0, 1]))
    assert a == 0.5


def test_auc_hand_pairs():
    # pairs (pos, neg): (0.4,0.2)=1 (0.4,0.6)=0 (0.8,0.2)=1 (0.8,0.6)=1
    _, a = roc_and_auc(ss([0.2, 0.4, 0.6, 0.8], [0, 1, 0, 1]))
    assert a == 0.75


def test_auc_single_class_is_undefined():
    curve, a = roc_and_auc(ss([0.2, 0.9], [1, 1]))
    assert curve is None and a is None
    assert "auc_undefined" in evaluate(ss([0.2, 0.9], [1, 1]), 0.5).flags


def test_roc_curve_shape_and_thresholds():
    curve, _ = roc_and_auc(ss([0.2, 0.4, 0.6, 0.8], [0, 1, 0, 1]))
    pts = curve.points()
    assert pts[0][:2] == (0.0, 0.0) and pts[-1][:2] == (1.0, 1.0)
    thr = curve.thresholds
    assert thr[0] > 0.8 and thr[-1] < 0.2
    assert thr[1:-1] == pytest.approx([0.7, 0.5, 0.3])


def test_auc_random_against_all_pairs():
    rng = np.random.default_rng(7)
    for _ in range(200):
        s, y = random_scoreset(rng, 60)
        _, a = roc_and_auc(ss(s, y))
        assert abs(a - all_pairs_auc(s, y)) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=2, max_size=60))
def test_roc_monotone(rows):
    scores, labels = zip(*rows)
    s = ss(scores, labels)
    if not s.both_classes:
        return
    curve, _ = roc_and_auc(s)
    assert (curve.fpr[0], curve.tpr[0]) == (0.0, 0.0)
    assert (curve.fpr[-1], curve.tpr[-1]) == (1.0, 1.0)
    assert np.all(np.diff(curve.fpr) >= 0) and np.all(np.diff(curve.tpr) >= 0)
    assert np.all(np.diff(curve.thresholds) < 0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 10_000), min_size=2, max_size=60, unique=True), st.data())
def test_auc_complement_symmetry(ints, data):
    scores = [i / 10_000 for i in ints]
    labels = data.draw(st.lists(st.integers(0, 1), min_size=len(scores), max_size=len(scores)))
    s = ss(scores, labels)
    if not s.both_classes:
        return
    flipped = ss([1 - x for x in scores], [1 - y for y in labels])
    assert roc_and_auc(s)[1] == pytest.approx(roc_and_auc(flipped)[1], abs=1e-12)


# ------------------------------------------------------------------- Youden


def test_youden_perfect():
    t, j = youden_threshold(ss([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]))
    assert t == pytest.approx(0.5) and j == 1.0


def test_youden_tie_takes_lowest():
    t, j = youden_threshold(ss([0.2, 0.4, 0.6, 0.8], [0, 1, 0, 1]))
    assert t == pytest.approx(0.3) and j == 0.5


def test_youden_constant_scores_gives_low_sentinel():
    t, j = youden_threshold(ss([0.4] * 5, [0, 1, 0, 1, 1]))
    assert j == 0.0
    assert t < 0.4 and t == np.nextafter(0.4, -np.inf)


def test_youden_single_class_raises():
    with pytest.raises(SingleClassError):
        youden_threshold(ss([0.1, 0.2], [0, 0]))


def test_youden_random_against_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(200):
        s, y = random_scoreset(rng, 60)
        t, j = youden_threshold(ss(s, y))
        bt, bj = brute_force_youden(s, y)
        assert t == bt
        assert j == pytest.approx(float(bj), abs=1e-15)


def test_midpoints_suffice_against_random_thresholds():
    rng = np.random.default_rng(5)
    for _ in range(20):
        s, y = random_scoreset(rng, 80)
        _, jmax = youden_threshold(ss(s, y))
        P, N = int(y.sum()), int(len(y) - y.sum())
        for t in rng.random(50) * 1.2 - 0.1:
            tp, fp, tn, fn = confusion_counts(s, y, t)
            assert tp / P + tn / N - 1 <= jmax + 1e-12


def test_midpoint_between_adjacent_floats_stays_above_lower_score():
    lo = 0.5
    hi = float(np.nextafter(lo, 1.0))
    s = ss([lo, hi], [0, 1])
    t, j = youden_threshold(s)
    assert j == 1.0
    assert lo < t <= hi


# -------------------------------------------------------------------- brier


def test_brier_examples():
    assert brier(ss([1.0, 0.0], [1, 0])) == 0.0
    assert brier(ss([0.5] * 4, [0, 1, 1, 0])) == 0.25
    assert brier(ss([0.8, 0.4], [1, 0])) == pytest.approx(0.10)


# ----------------------------------------------------------- group variance


def test_group_variance_reported_values():
    assert group_variance([0.6908, 0.6724]) == pytest.approx(1.6928e-4, abs=1e-12)
    assert group_variance([0.6887, 0.6769]) == pytest.approx(6.962e-5, abs=1e-12)


def test_group_variance_equal_values():
    assert group_variance([0.3, 0.3]) == 0.0


def test_group_variance_excludes_undefined():
    assert group_variance([0.5, None, 0.7]) == pytest.approx(0.02)
    assert group_variance([0.5, None]) is None
    assert group_variance([float("nan"), 0.5]) is None


@given(st.floats(0, 1), st.floats(0, 1))
def test_group_variance_two_sample_identity(a, b):
    from fractions import Fraction

    assert group_variance([a, b]) == float((Fraction(a) - Fraction(b)) ** 2 / 2)
    assert group_variance([a, b]) == pytest.approx((a - b) ** 2 / 2, rel=1e-12, abs=1e-300)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=8))
def test_group_variance_matches_numpy(vals):
    assert group_variance(vals) == pytest.approx(float(np.var(vals, ddof=1)), rel=1e-9, abs=1e-15)


def test_metric_vector_json_roundtrip():
    mv = evaluate(ss([0.1, 0.9, 0.6, 0.3], [0, 1, 1, 0]), 0.5)
    back = MetricVector.from_json(mv.to_json())
    assert back == mv
    m = point_metrics(ConfusionMatrix(0, 0, 3, 2))
    assert MetricVector.from_json(m.to_json()).get("precision") is None


def test_scoreset_validation():
    with pytest.raises(ValueError):
        ss([1.2], [1])
    with pytest.raises(ValueError):
        ss([0.2, 0.3], [1])
    with pytest.raises(ValueError):
        ss([0.2], [2])
    assert math.isclose(ss([0.2, 0.4], [0, 1]).subset([1]).scores[0], 0.4)
