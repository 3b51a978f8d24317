"""Classification parity, candidate thresholds and the fairness threshold.

A fairness threshold is the candidate decision threshold at which a metric
varies least across the groups of a protected feature. The candidates are
the Youden-optimal threshold of the whole score set, the Youden-optimal
threshold of every group, and the min/max/mean/median of the group optima.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .dataset import GroupPartition
from .errors import SingleClassError, UsageError
from .metrics import METRICS, MetricVector, ScoreSet, evaluate, group_variance, youden_threshold

logger = logging.getLogger(__name__)

GROUPS_ONLY = "groups_only"
INCLUDE_OVERALL = "include_overall"
MODES = (GROUPS_ONLY, INCLUDE_OVERALL)
AGGREGATES = ("min", "max", "mean", "median")
DEFAULT_BOUNDARY_METRICS = ("precision", "recall", "f1")


@dataclass(frozen=True)
class ThresholdCandidates:
    overall: float
    per_group: Mapping[str, float | None]
    aggregates: Mapping[str, float] = field(default_factory=dict)

    def items(self) -> list[tuple[str, float]]:
        """(candidate id, threshold) pairs for every defined candidate, in table order."""
        out = [("overall", self.overall)]
        out += [(f"group:{g}", t) for g, t in self.per_group.items() if t is not None]
        out += [(a, self.aggregates[a]) for a in AGGREGATES if a in self.aggregates]
        return out

    def to_json(self) -> dict:
        return {"overall": self.overall, "per_group": dict(self.per_group), "aggregates": dict(self.aggregates)}


def candidates(scores: ScoreSet, part: GroupPartition) -> ThresholdCandidates:
    if not scores.both_classes:
        raise SingleClassError("candidate thresholds need both classes in the full score set")
    overall, _ = youden_threshold(scores)
    per_group = {}
    for g, idx in part:
        sub = scores.subset(idx)
        if sub.both_classes:
            per_group[g] = youden_threshold(sub)[0]
        else:
            logger.warning("group %r has a single class; no Youden threshold", g)
            per_group[g] = None
    defined = [t for t in per_group.values() if t is not None]
    aggregates = {}
    if defined:
        aggregates = {
            "min": float(min(defined)),
            "max": float(max(defined)),
            "mean": float(np.mean(defined)),
            "median": float(np.median(defined)),
        }
    return ThresholdCandidates(overall, per_group, aggregates)


@dataclass(frozen=True)
class BoundaryRow:
    candidate: str
    threshold: float
    overall: MetricVector
    groups: Mapping[str, MetricVector]
    variance: Mapping[str, float | None]
    variance_with_overall: Mapping[str, float | None]

    def variance_for(self, metric: str, mode: str = GROUPS_ONLY) -> float | None:
        if mode not in MODES:
            raise UsageError(f"mode must be one of {MODES}")
        return (self.variance if mode == GROUPS_ONLY else self.variance_with_overall)[metric]

    def to_json(self) -> dict:
        return {
            "candidate": self.candidate,
            "threshold": self.threshold,
            "overall": self.overall.to_json(),
            "groups": {g: mv.to_json() for g, mv in self.groups.items()},
            "variance": dict(self.variance),
            "variance_with_overall": dict(self.variance_with_overall),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BoundaryRow":
        return cls(
            obj["candidate"],
            obj["threshold"],
            MetricVector.from_json(obj["overall"]),
            {g: MetricVector.from_json(v) for g, v in obj["groups"].items()},
            dict(obj["variance"]),
            dict(obj["variance_with_overall"]),
        )


@dataclass(frozen=True)
class BoundaryTable:
    feature: str
    metrics: tuple[str, ...]
    candidates: ThresholdCandidates
    rows: tuple[BoundaryRow, ...]

    @property
    def groups(self) -> list[str]:
        return list(self.rows[0].groups) if self.rows else []

    def row(self, candidate: str) -> BoundaryRow:
        for r in self.rows:
            if r.candidate == candidate:
                return r
        raise KeyError(candidate)

    def records(self) -> list[dict]:
        """Flat records, one per candidate x metric."""
        out = []
        for r in self.rows:
            for m in self.metrics:
                rec = {"candidate": r.candidate, "threshold": r.threshold, "metric": m, "overall": r.overall.get(m)}
                for g, mv in r.groups.items():
                    rec[f"group:{g}"] = mv.get(m)
                rec["variance"] = r.variance[m]
                rec["variance_with_overall"] = r.variance_with_overall[m]
                out.append(rec)
        return out

    def to_json(self) -> dict:
        return {
            "feature": self.feature,
            "metrics": list(self.metrics),
            "candidates": self.candidates.to_json(),
            "rows": [r.to_json() for r in self.rows],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BoundaryTable":
        c = obj["candidates"]
        return cls(
            obj["feature"],
            tuple(obj["metrics"]),
            ThresholdCandidates(c["overall"], c["per_group"], c["aggregates"]),
            tuple(BoundaryRow.from_json(r) for r in obj["rows"]),
        )


def boundary_row(
    scores: ScoreSet, part: GroupPartition, candidate: str, threshold: float, metrics: Iterable[str]
) -> BoundaryRow:
    overall = evaluate(scores, threshold)
    groups = {g: evaluate(scores.subset(idx), threshold) for g, idx in part}
    variance, with_overall = {}, {}
    for m in metrics:
        vals = [mv.get(m) for mv in groups.values()]
        variance[m] = group_variance(vals)
        with_overall[m] = group_variance([*vals, overall.get(m)])
    return BoundaryRow(candidate, threshold, overall, groups, variance, with_overall)


def boundary(
    scores: ScoreSet, part: GroupPartition, metrics: Iterable[str] = DEFAULT_BOUNDARY_METRICS
) -> BoundaryTable:
    """Every metric, overall and per group, at each candidate's shared threshold."""
    metrics = tuple(metrics)
    bad = [m for m in metrics if m not in METRICS and m != "specificity"]
    if bad:
        raise UsageError(f"unknown metric(s): {', '.join(bad)}")
    cands = candidates(scores, part)
    rows = tuple(boundary_row(scores, part, cid, thr, metrics) for cid, thr in cands.items())
    return BoundaryTable(part.feature, metrics, cands, rows)


@dataclass(frozen=True)
class FairnessChoice:
    candidate: str
    threshold: float
    metric: str
    variance: float
    variances: Mapping[str, float | None]
    mode: str

    def to_json(self) -> dict:
        return {
            "candidate": self.candidate,
            "threshold": self.threshold,
            "metric": self.metric,
            "variance": self.variance,
            "variances": dict(self.variances),
            "mode": self.mode,
        }


def _tie_rank(row: BoundaryRow, position: int):
    # overall first, then mean, then the lowest threshold
    pref = 0 if row.candidate == "overall" else 1 if row.candidate == "mean" else 2
    return (pref, row.threshold, position)


def fairness_threshold(table: BoundaryTable, metric: str, mode: str = GROUPS_ONLY) -> FairnessChoice:
    """Candidate with the smallest group variance of ``metric``."""
    if metric not in table.metrics:
        raise UsageError(f"metric {metric!r} is not in the boundary table ({', '.join(table.metrics)})")
    variances = {r.candidate: r.variance_for(metric, mode) for r in table.rows}
    defined = [(i, r) for i, r in enumerate(table.rows) if variances[r.candidate] is not None]
    if not defined:
        raise UsageError(f"no candidate has a defined {metric} variance")
    best = min(v for v in (variances[r.candidate] for _, r in defined))
    tied = [(i, r) for i, r in defined if variances[r.candidate] == best]
    _, row = min(tied, key=lambda ir: _tie_rank(ir[1], ir[0]))
    return FairnessChoice(row.candidate, row.threshold, metric, best, variances, mode)


@dataclass(frozen=True)
class ParityVerdict:
    metric: str
    xi: float
    pairs: tuple[tuple[str, str, float, bool], ...]
    passed: bool
    flags: frozenset = field(default_factory=frozenset)

    def to_json(self) -> dict:
        return {
            "metric": self.metric,
            "xi": self.xi,
            "pairs": [{"group_a": a, "group_b": b, "difference": d, "passed": p} for a, b, d, p in self.pairs],
            "passed": self.passed,
            "flags": sorted(self.flags),
        }


def parity_check(per_group_metric: Mapping[str, float | None], xi: float, metric: str = "metric") -> ParityVerdict:
    """Pass iff every pair of groups differs by less than ``xi`` in absolute value."""
    if not xi > 0:
        raise UsageError("xi must be positive")
    defined = {g: v for g, v in per_group_metric.items() if v is not None}
    if not defined:
        raise UsageError("parity check needs at least one group with a defined metric")
    flags = {f"excluded:{g}" for g in per_group_metric if g not in defined}
    pairs = []
    for (a, va), (b, vb) in itertools.combinations(defined.items(), 2):
        d = abs(float(va) - float(vb))
        pairs.append((a, b, d, d < xi))
    if len(defined) == 1:
        flags.add("vacuous")
    return ParityVerdict(metric, float(xi), tuple(pairs), all(p for *_, p in pairs), frozenset(flags))
