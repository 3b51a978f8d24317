"""Gain-based feature importance and proxy-feature selection."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..dataset import NUMERIC, BinningSpec, Dataset, group_labels
from ..errors import UsageError
from .encoding import MISSING

logger = logging.getLogger(__name__)

DEFAULT_TAU = 0.2


@dataclass(frozen=True)
class ImportanceRanking:
    items: tuple[tuple[str, float], ...]
    flags: frozenset = field(default_factory=frozenset)

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.items]

    def as_dict(self) -> dict[str, float]:
        return dict(self.items)

    def to_json(self) -> dict:
        return {"ranking": [{"feature": n, "importance": v} for n, v in self.items], "flags": sorted(self.flags)}


@dataclass(frozen=True)
class AssociationScore:
    feature: str
    protected: str
    kind: str  # cramers_v | correlation_ratio
    value: float
    flags: frozenset = field(default_factory=frozenset)

    def to_json(self) -> dict:
        return {
            "feature": self.feature,
            "protected": self.protected,
            "kind": self.kind,
            "value": self.value,
            "flags": sorted(self.flags),
        }


def raw_importance(model) -> dict[str, float]:
    """Un-normalized importance per source feature: sum of split gain x node row share."""
    cols = np.zeros(len(model.encoding.columns))
    for t in model.trees:
        internal = t.feature >= 0
        np.add.at(cols, t.feature[internal], t.gain[internal] * t.fraction[internal])
    out = {f: 0.0 for f in model.encoding.features}
    for src, v in zip(model.encoding.sources, cols):
        out[src] += float(v)
    return out


def importance(model) -> ImportanceRanking:
    if model.algorithm != "gbt":
        raise UsageError(f"importance is defined for gbt models only (got {model.algorithm!r})")
    raw = raw_importance(model)
    total = sum(raw.values())
    flags = frozenset()
    if total > 0:
        vals = {k: v / total for k, v in raw.items()}
    else:
        vals = raw
        flags = frozenset({"all_zero"})
    items = tuple(sorted(vals.items(), key=lambda kv: (-kv[1], kv[0])))
    return ImportanceRanking(items, flags)


def cramers_v(a: Sequence, b: Sequence) -> float:
    """Cramer's V of two categorical columns (no bias correction)."""
    ca, ia = np.unique(np.asarray(a, dtype=str), return_inverse=True)
    cb, ib = np.unique(np.asarray(b, dtype=str), return_inverse=True)
    k = min(len(ca), len(cb)) - 1
    if k <= 0:
        return 0.0
    table = np.zeros((len(ca), len(cb)))
    np.add.at(table, (ia, ib), 1.0)
    n = table.sum()
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / n
    chi2 = float(((table - expected) ** 2 / expected).sum())
    return min(1.0, math.sqrt(chi2 / (n * k)))


def correlation_ratio(values: np.ndarray, groups: Sequence) -> float:
    """Correlation ratio eta: sqrt(between-group sum of squares / total sum of squares)."""
    values = np.asarray(values, dtype=float)
    ss_total = float(((values - values.mean()) ** 2).sum())
    if ss_total == 0.0:
        return 0.0
    _, inv = np.unique(np.asarray(groups, dtype=str), return_inverse=True)
    counts = np.bincount(inv)
    means = np.bincount(inv, weights=values) / counts
    ss_between = float((counts * (means - values.mean()) ** 2).sum())
    return min(1.0, math.sqrt(ss_between / ss_total))


def association(
    dataset: Dataset, feature: str, protected: str, binning: BinningSpec | None = None
) -> AssociationScore:
    """Strength of association between a feature and a protected feature, in [0, 1].

    Categorical features use Cramer's V, numeric ones the correlation ratio
    against the (binned) protected categories.
    """
    groups = group_labels(dataset, protected, binning)
    col = dataset.column(feature)
    flags = set()
    if dataset.schema.kind(feature) == NUMERIC:
        kind = "correlation_ratio"
        ok = ~np.isnan(col)
        x, g = col[ok], groups[ok]
        if len(x) == 0 or np.all(x == x[0]):
            flags.add("zero_variance")
            value = 0.0
        else:
            value = correlation_ratio(x, g)
    else:
        kind = "cramers_v"
        cats = np.array([MISSING if v is None else str(v) for v in col], dtype=object)
        if len(set(cats)) <= 1:
            flags.add("zero_variance")
            value = 0.0
        else:
            value = cramers_v(cats, groups)
    return AssociationScore(feature, protected, kind, float(value), frozenset(flags))


def select_proxies(
    ranking: ImportanceRanking, associations: Sequence[AssociationScore], k: int, tau: float = DEFAULT_TAU
) -> list[str]:
    """Top-``k`` features by importance whose association is at least ``tau``.

    Features with no association entry count as association 0.
    """
    if k < 1:
        raise UsageError("k must be >= 1")
    if not 0.0 <= tau <= 1.0:
        raise UsageError("tau must lie in [0, 1]")
    assoc = {a.feature: a.value for a in associations}
    return [name for name in ranking.names[:k] if assoc.get(name, 0.0) >= tau]
