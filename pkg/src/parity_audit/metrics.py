"""Binary classification metrics.

Predictions use the rule ``score >= threshold``. Degenerate metrics (no
positives in a group, no predicted positives, a single-class score set) are
reported as ``0`` or ``None`` and recorded in ``MetricVector.flags`` so the
caller can tell them apart from genuine zeros.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import SingleClassError

logger = logging.getLogger(__name__)

METRICS = ("auc", "precision", "recall", "f1", "brier")
THRESHOLD_METRICS = ("precision", "recall", "f1", "specificity")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class ScoreSet:
    scores: np.ndarray
    labels: np.ndarray
    index: np.ndarray | None = None

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float).copy()
        y = np.asarray(self.labels, dtype=np.int8).copy()
        if s.shape != y.shape or s.ndim != 1:
            raise ValueError(f"scores and labels must be 1-d of equal length ({s.shape} vs {y.shape})")
        if len(s) and (np.isnan(s).any() or s.min() < 0.0 or s.max() > 1.0):
            raise ValueError("scores must lie in [0, 1]")
        if len(y) and not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0/1")
        s.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", y)
        if self.index is not None:
            idx = np.asarray(self.index, dtype=np.int64).copy()
            if len(idx) != len(s):
                raise ValueError("index length mismatch")
            idx.setflags(write=False)
            object.__setattr__(self, "index", idx)

    def __len__(self) -> int:
        return len(self.scores)

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    @property
    def n_neg(self) -> int:
        return len(self) - self.n_pos

    @property
    def both_classes(self) -> bool:
        return self.n_pos > 0 and self.n_neg > 0

    def subset(self, idx) -> "ScoreSet":
        idx = np.asarray(idx, dtype=np.int64)
        return ScoreSet(self.scores[idx], self.labels[idx], None if self.index is None else self.index[idx])


@dataclass(frozen=True)
class MetricVector:
    auc: float | None = None
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    brier: float | None = None
    specificity: float | None = None
    flags: frozenset = field(default_factory=frozenset)

    def get(self, name: str) -> float | None:
        """Metric value, or ``None`` when the metric is undefined for this data."""
        if name not in METRICS and name != "specificity":
            raise KeyError(f"unknown metric {name!r}")
        if f"{name}_undefined" in self.flags:
            return None
        return getattr(self, name)

    def to_json(self) -> dict:
        out = {m: self.get(m) for m in (*METRICS, "specificity")}
        out["flags"] = sorted(self.flags)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "MetricVector":
        flags = frozenset(obj.get("flags", ()))
        vals = {}
        for m in (*METRICS, "specificity"):
            v = obj.get(m)
            # undefined point metrics are reported as 0
            if v is None and f"{m}_undefined" in flags and m in THRESHOLD_METRICS:
                v = 0.0
            vals[m] = v
        return cls(**vals, flags=flags)


@dataclass(frozen=True)
class RocCurve:
    """ROC points ordered from (0, 0) to (1, 1); thresholds decrease along the curve."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist(), self.thresholds.tolist()))


def confusion(scores: ScoreSet, threshold: float) -> ConfusionMatrix:
    if len(scores) == 0:
        raise ValueError("empty score set")
    pred = scores.scores >= threshold
    y = scores.labels.astype(bool)
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    return ConfusionMatrix(tp=tp, fp=fp, tn=len(y) - tp - fp - fn, fn=fn)


def point_metrics(cm: ConfusionMatrix) -> MetricVector:
    if cm.total <= 0:
        raise ValueError("confusion matrix is empty")
    flags = set()

    def ratio(num, den, name):
        if den == 0:
            flags.add(f"{name}_undefined")
            return 0.0
        return num / den

    precision = ratio(cm.tp, cm.tp + cm.fp, "precision")
    recall = ratio(cm.tp, cm.tp + cm.fn, "recall")
    specificity = ratio(cm.tn, cm.tn + cm.fp, "specificity")
    den = 2 * cm.tp + cm.fp + cm.fn
    f1 = 2 * cm.tp / den if den else 0.0
    if den == 0 or "recall_undefined" in flags:
        flags.add("f1_undefined")
    return MetricVector(precision=precision, recall=recall, f1=f1, specificity=specificity, flags=frozenset(flags))


def _sweep(scores: ScoreSet):
    """Cumulative (tp, fp) counts and thresholds from the top score downwards.

    Returns integer arrays ``tp`` and ``fp`` and float ``thresholds`` of equal
    length; entry 0 is the above-max sentinel (nothing predicted positive) and
    the last entry the below-min sentinel (everything predicted positive).
    """
    s = scores.scores
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = scores.labels[order].astype(np.int64)
    ends = np.flatnonzero(np.diff(s_sorted) != 0)
    ends = np.append(ends, len(s_sorted) - 1)
    ctp = np.cumsum(y_sorted)[ends]
    cfp = ends + 1 - ctp

    hi, lo = s_sorted[ends[:-1]], s_sorted[ends[:-1] + 1]
    mids = (hi + lo) / 2.0
    # rounding can land the midpoint on the lower score when the two are adjacent floats
    bad = mids <= lo
    mids[bad] = np.nextafter(lo[bad], np.inf)

    tp = np.concatenate([[0], ctp])
    fp = np.concatenate([[0], cfp])
    thresholds = np.concatenate([[np.nextafter(s_sorted[0], np.inf)], mids, [np.nextafter(s_sorted[-1], -np.inf)]])
    return tp, fp, thresholds


def roc_and_auc(scores: ScoreSet) -> tuple[RocCurve | None, float | None]:
    """ROC curve over midpoint thresholds and the tie-corrected AUC.

    Returns ``(None, None)`` when only one class is present.
    """
    if not scores.both_classes:
        logger.warning("AUC undefined: score set has a single class")
        return None, None
    P, N = scores.n_pos, scores.n_neg
    tp, fp, thr = _sweep(scores)
    # trapezoids on integer counts: twice the Mann-Whitney U
    u2 = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    auc = u2 / (2 * P * N)
    return RocCurve(fp / N, tp / P, thr), auc


def auc(scores: ScoreSet) -> float | None:
    return roc_and_auc(scores)[1]


def youden_threshold(scores: ScoreSet) -> tuple[float, float]:
    """Threshold maximizing sensitivity + specificity - 1; ties go to the lowest threshold."""
    if not scores.both_classes:
        raise SingleClassError("Youden threshold needs both classes")
    P, N = scores.n_pos, scores.n_neg
    tp, fp, thr = _sweep(scores)
    j_scaled = tp * N - fp * P  # J * P * N, exact in integers
    best = np.flatnonzero(j_scaled == j_scaled.max())[-1]
    return float(thr[best]), int(j_scaled[best]) / (P * N)


def brier(scores: ScoreSet) -> float:
    if len(scores) == 0:
        raise ValueError("empty score set")
    return float(np.mean((scores.scores - scores.labels) ** 2))


def evaluate(scores: ScoreSet, threshold: float) -> MetricVector:
    """All metrics of a score set at one threshold."""
    pm = point_metrics(confusion(scores, threshold))
    _, a = roc_and_auc(scores)
    flags = set(pm.flags)
    if a is None:
        flags.add("auc_undefined")
    return MetricVector(
        auc=a,
        precision=pm.precision,
        recall=pm.recall,
        f1=pm.f1,
        brier=brier(scores),
        specificity=pm.specificity,
        flags=frozenset(flags),
    )


def group_variance(values: Iterable[float | None]) -> float | None:
    """Sample variance (n - 1 divisor) of the defined values; ``None`` if fewer than two.

    Computed in exact rational arithmetic, so the result is the correctly
    rounded variance of the given floats.
    """
    vals = list(values)
    defined = [v for v in vals if v is not None and not (isinstance(v, float) and math.isnan(v))]
    if len(defined) < len(vals):
        logger.warning("group variance: excluding %d undefined value(s)", len(vals) - len(defined))
    if len(defined) < 2:
        return None
    fs = [Fraction(float(v)) for v in defined]
    mean = sum(fs) / len(fs)
    return float(sum((f - mean) ** 2 for f in fs) / (len(fs) - 1))


def per_group(scores: ScoreSet, groups: Sequence[tuple[str, np.ndarray]] | dict, threshold: float) -> dict:
    items = groups.items() if isinstance(groups, dict) else groups
    return {g: evaluate(scores.subset(idx), threshold) for g, idx in items}
