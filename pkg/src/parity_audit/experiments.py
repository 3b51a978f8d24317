"""Ablation, sampling and method-comparison experiment grids.

A cell is one pipeline run: split, optional oversampling of the training
rows by protected group, feature ablation, training, and evaluation of the
held-out rows at the cell's own Youden-optimal threshold. Groups for
evaluation always come from the original protected column of the test rows,
even when that column was removed before training.

Feature modes: ``"1"`` keeps every feature, ``"0"`` drops the protected
feature, ``"delta"`` drops the protected feature and its proxies.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dataset import BinningSpec, Dataset, ablate, oversample, partition, split
from .errors import UsageError
from .fairness import GROUPS_ONLY, MODES
from .metrics import METRICS, MetricVector, evaluate, group_variance, youden_threshold
from .models import ALGORITHMS, ModelConfig, association, importance, predict, select_proxies, train
from .models.importance import DEFAULT_TAU, AssociationScore, ImportanceRanking

logger = logging.getLogger(__name__)

FEATURE_MODES = ("1", "0", "delta")
DEFAULT_TEST_FRACTION = 0.3
DEFAULT_K = 5


def derive_seed(seed: int, *parts) -> int:
    """Stable 32-bit seed from a base seed and any hashable description."""
    h = hashlib.blake2b(repr((int(seed), *parts)).encode(), digest_size=4)
    return int.from_bytes(h.digest(), "little")


def feature_mode_label(mode: str) -> str:
    return "Δ" if mode == "delta" else mode


@dataclass(frozen=True)
class CellSpec:
    feature_mode: str
    sampling: bool
    algorithm: str
    protected: str
    seed: int = 0

    def __post_init__(self):
        if self.feature_mode not in FEATURE_MODES:
            raise UsageError(f"feature_mode must be one of {FEATURE_MODES}")
        if self.algorithm not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {self.algorithm!r}")
        object.__setattr__(self, "sampling", bool(self.sampling))

    @property
    def key(self) -> str:
        return f"{self.algorithm}/sigma={int(self.sampling)}/F={self.feature_mode}"

    def to_json(self) -> dict:
        return {
            "feature_mode": self.feature_mode,
            "sampling": int(self.sampling),
            "algorithm": self.algorithm,
            "protected": self.protected,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class CellResult:
    spec: CellSpec
    overall: MetricVector
    groups: Mapping[str, MetricVector]
    variance: Mapping[str, float | None]
    variance_with_overall: Mapping[str, float | None]
    threshold: float
    test_rows: tuple[int, ...]
    train_group_counts: Mapping[str, int]
    trained_features: tuple[str, ...]
    dropped: tuple[str, ...] = ()
    flags: tuple[str, ...] = ()

    def variance_for(self, metric: str, mode: str = GROUPS_ONLY) -> float | None:
        return (self.variance if mode == GROUPS_ONLY else self.variance_with_overall)[metric]

    def to_json(self) -> dict:
        return {
            "spec": self.spec.to_json(),
            "overall": self.overall.to_json(),
            "groups": {g: mv.to_json() for g, mv in self.groups.items()},
            "variance": dict(self.variance),
            "variance_with_overall": dict(self.variance_with_overall),
            "threshold": self.threshold,
            "test_rows": list(self.test_rows),
            "train_group_counts": dict(self.train_group_counts),
            "trained_features": list(self.trained_features),
            "dropped": list(self.dropped),
            "flags": list(self.flags),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CellResult":
        s = obj["spec"]
        return cls(
            spec=CellSpec(s["feature_mode"], bool(s["sampling"]), s["algorithm"], s["protected"], s["seed"]),
            overall=MetricVector.from_json(obj["overall"]),
            groups={g: MetricVector.from_json(v) for g, v in obj["groups"].items()},
            variance=dict(obj["variance"]),
            variance_with_overall=dict(obj["variance_with_overall"]),
            threshold=obj["threshold"],
            test_rows=tuple(obj["test_rows"]),
            train_group_counts=dict(obj["train_group_counts"]),
            trained_features=tuple(obj["trained_features"]),
            dropped=tuple(obj.get("dropped", ())),
            flags=tuple(obj.get("flags", ())),
        )


@dataclass(frozen=True)
class ProxySelection:
    proxies: tuple[str, ...]
    ranking: ImportanceRanking
    associations: tuple[AssociationScore, ...]
    k: int
    tau: float

    def to_json(self) -> dict:
        return {
            "proxies": list(self.proxies),
            "k": self.k,
            "tau": self.tau,
            "ranking": self.ranking.to_json(),
            "associations": [a.to_json() for a in self.associations],
        }


def model_config(algorithm: str, seed: int, overrides: Mapping | None = None) -> ModelConfig:
    return ModelConfig(algorithm=algorithm, seed=seed, **dict(overrides or {}))


def find_proxies(
    train_set: Dataset,
    protected: str,
    *,
    k: int = DEFAULT_K,
    tau: float = DEFAULT_TAU,
    seed: int = 0,
    binning: BinningSpec | None = None,
    model_overrides: Mapping | None = None,
) -> ProxySelection:
    """Important features associated with ``protected``, from a gbt fit on all features.

    The protected feature itself is left out of the ranking; it is removed in
    every ablated cell anyway.
    """
    model = train(train_set, model_config("gbt", derive_seed(seed, "proxies", protected), model_overrides))
    full = importance(model)
    ranking = ImportanceRanking(tuple((n, v) for n, v in full.items if n != protected), full.flags)
    assoc = tuple(association(train_set, f, protected, binning) for f in ranking.names)
    proxies = tuple(select_proxies(ranking, assoc, k, tau))
    return ProxySelection(proxies, ranking, assoc, k, tau)


def run_cell(
    dataset: Dataset,
    spec: CellSpec,
    *,
    test_fraction: float = DEFAULT_TEST_FRACTION,
    proxies: Sequence[str] | None = None,
    k: int = DEFAULT_K,
    tau: float = DEFAULT_TAU,
    binning: BinningSpec | None = None,
    model_overrides: Mapping | None = None,
    splits: tuple[Dataset, Dataset] | None = None,
) -> CellResult:
    """Run one (feature mode, sampling, algorithm) configuration.

    ``splits`` lets a grid share one train/test split across cells; by default
    the split is drawn from ``spec.seed``.
    """
    train_set, test_set = splits if splits is not None else split(dataset, test_fraction, spec.seed)
    protected = spec.protected
    dataset.schema.protected_spec(protected)

    drop: set[str] = set()
    if spec.feature_mode in ("0", "delta"):
        drop.add(protected)
    if spec.feature_mode == "delta":
        if proxies is None:
            proxies = find_proxies(
                train_set, protected, k=k, tau=tau, seed=spec.seed, binning=binning, model_overrides=model_overrides
            ).proxies
        drop.update(proxies)

    fit_set = train_set
    if spec.sampling:
        train_part = partition(train_set, protected, binning, allow_empty=True)
        fit_set = oversample(train_set, train_part, derive_seed(spec.seed, "oversample", protected))
    counts = partition(fit_set, protected, binning, allow_empty=True).sizes()
    fit_set = ablate(fit_set, drop)

    model = train(fit_set, model_config(spec.algorithm, derive_seed(spec.seed, spec.key, protected), model_overrides))
    scores = predict(model, ablate(test_set, drop))

    threshold, _ = youden_threshold(scores)
    test_part = partition(test_set, protected, binning, allow_empty=True)
    overall = evaluate(scores, threshold)
    groups = {g: evaluate(scores.subset(idx), threshold) for g, idx in test_part}
    flags = [f"single_class_group:{g}" for g, mv in groups.items() if "auc_undefined" in mv.flags]
    variance, with_overall = {}, {}
    for m in METRICS:
        vals = [mv.get(m) for mv in groups.values()]
        variance[m] = group_variance(vals)
        with_overall[m] = group_variance([*vals, overall.get(m)])
    return CellResult(
        spec=spec,
        overall=overall,
        groups=groups,
        variance=variance,
        variance_with_overall=with_overall,
        threshold=threshold,
        test_rows=tuple(int(i) for i in test_set.row_ids),
        train_group_counts=counts,
        trained_features=tuple(model.encoding.features),
        dropped=tuple(sorted(drop)),
        flags=tuple(flags),
    )


# --------------------------------------------------------------------- deltas


def metric_delta(baseline: float | None, comparison: float | None) -> float | None:
    if baseline is None or comparison is None:
        return None
    return comparison - baseline


def relative_change(baseline: float | None, comparison: float | None) -> float | None:
    """``(comparison - baseline) / baseline``; ``None`` when the baseline is 0 or undefined."""
    if baseline is None or comparison is None or baseline == 0:
        return None
    return (comparison - baseline) / baseline


def sign_marker(x: float | None) -> str:
    if x is None or x == 0:
        return ""
    return "+" if x > 0 else "-"


@dataclass(frozen=True)
class MetricDelta:
    overall: float | None
    groups: Mapping[str, float | None]
    variance_change: float | None
    flags: tuple[str, ...] = ()

    @property
    def overall_marker(self) -> str:
        return sign_marker(self.overall)

    @property
    def variance_marker(self) -> str:
        return sign_marker(self.variance_change)

    def to_json(self) -> dict:
        return {
            "overall": self.overall,
            "overall_marker": self.overall_marker,
            "groups": dict(self.groups),
            "group_markers": {g: sign_marker(v) for g, v in self.groups.items()},
            "variance_change": self.variance_change,
            "variance_marker": self.variance_marker,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class DeltaReport:
    baseline: str
    comparison: str
    metrics: Mapping[str, MetricDelta]

    def to_json(self) -> dict:
        return {
            "baseline": self.baseline,
            "comparison": self.comparison,
            "metrics": {m: d.to_json() for m, d in self.metrics.items()},
        }


def delta_report(baseline: CellResult, comparison: CellResult, mode: str = GROUPS_ONLY) -> DeltaReport:
    """Absolute metric differences and relative variance changes, comparison minus baseline."""
    if set(baseline.groups) != set(comparison.groups):
        raise UsageError("cells were evaluated on different group partitions")
    out = {}
    for m in METRICS:
        vb, vc = baseline.variance_for(m, mode), comparison.variance_for(m, mode)
        flags = ()
        if vb == 0:
            flags = ("zero_baseline_variance",)
        out[m] = MetricDelta(
            overall=metric_delta(baseline.overall.get(m), comparison.overall.get(m)),
            groups={g: metric_delta(baseline.groups[g].get(m), comparison.groups[g].get(m)) for g in baseline.groups},
            variance_change=relative_change(vb, vc),
            flags=flags,
        )
    return DeltaReport(baseline.spec.key, comparison.spec.key, out)


# ----------------------------------------------------------------------- grid


@dataclass(frozen=True)
class GridResult:
    protected: str
    seed: int
    cells: tuple[CellResult, ...]
    deltas: tuple[DeltaReport, ...]
    proxies: ProxySelection | None
    config: Mapping = field(default_factory=dict)

    def cell(self, algorithm: str, sampling: bool, feature_mode: str) -> CellResult:
        for c in self.cells:
            s = c.spec
            if (s.algorithm, s.sampling, s.feature_mode) == (algorithm, bool(sampling), feature_mode):
                return c
        raise KeyError((algorithm, sampling, feature_mode))

    def to_json(self) -> dict:
        return {
            "kind": "grid",
            "protected": self.protected,
            "seed": self.seed,
            "config": dict(self.config),
            "proxies": None if self.proxies is None else self.proxies.to_json(),
            "cells": {c.spec.key: c.to_json() for c in self.cells},
            "deltas": [d.to_json() for d in self.deltas],
        }


def ablation_grid(
    dataset: Dataset,
    protected: str,
    algorithms: Iterable[str] = ALGORITHMS,
    *,
    k: int = DEFAULT_K,
    tau: float = DEFAULT_TAU,
    seed: int = 0,
    samplings: Iterable[bool] = (False, True),
    feature_modes: Iterable[str] = FEATURE_MODES,
    test_fraction: float = DEFAULT_TEST_FRACTION,
    mode: str = GROUPS_ONLY,
    binning: BinningSpec | None = None,
    model_overrides: Mapping | None = None,
) -> GridResult:
    """All feature-mode x sampling x algorithm cells on one shared split.

    Proxies are selected once, from the unsampled all-features training set,
    and reused by every ``delta`` cell.
    """
    if mode not in MODES:
        raise UsageError(f"mode must be one of {MODES}")
    algorithms = tuple(algorithms)
    samplings = tuple(bool(s) for s in samplings)
    feature_modes = tuple(feature_modes)
    splits = split(dataset, test_fraction, seed)
    proxy_sel = None
    if "delta" in feature_modes:
        proxy_sel = find_proxies(
            splits[0], protected, k=k, tau=tau, seed=seed, binning=binning, model_overrides=model_overrides
        )
    cells, deltas = [], []
    for algo in algorithms:
        for sampling in samplings:
            by_mode = {}
            for fm in feature_modes:
                spec = CellSpec(fm, sampling, algo, protected, seed)
                by_mode[fm] = run_cell(
                    dataset,
                    spec,
                    proxies=None if proxy_sel is None else proxy_sel.proxies,
                    binning=binning,
                    model_overrides=model_overrides,
                    splits=splits,
                )
                cells.append(by_mode[fm])
            if "1" in by_mode:
                for fm in ("0", "delta"):
                    if fm in by_mode:
                        deltas.append(delta_report(by_mode["1"], by_mode[fm], mode))
    config = {
        "protected": protected,
        "algorithms": list(algorithms),
        "k": k,
        "tau": tau,
        "seed": seed,
        "samplings": [int(s) for s in samplings],
        "feature_modes": list(feature_modes),
        "test_fraction": test_fraction,
        "mode": mode,
        "binning": None if binning is None else binning.to_json(),
        "model_overrides": dict(model_overrides or {}),
    }
    return GridResult(protected, seed, tuple(cells), tuple(deltas), proxy_sel, config)


# ------------------------------------------------------------- comparison


COMPARE_ROWS = (("1", False), ("0", False), ("1", True), ("0", True))


def compare_row_label(protected: str, feature_mode: str, sampling: bool) -> str:
    return f"{'with' if feature_mode == '1' else 'without'} '{protected}', {'after' if sampling else 'before'} sampling"


@dataclass(frozen=True)
class MethodComparison:
    protected: str
    algorithms: tuple[str, ...]
    rows: tuple[str, ...]
    auc: Mapping[str, Mapping[str, float | None]]  # row label -> algorithm -> value
    variance: Mapping[str, Mapping[str, float | None]]
    rank_by_auc: Mapping[str, list[str]]
    rank_by_variance: Mapping[str, list[str]]
    grid: GridResult | None = None

    def to_json(self) -> dict:
        return {
            "kind": "compare",
            "protected": self.protected,
            "algorithms": list(self.algorithms),
            "rows": list(self.rows),
            "auc": {r: dict(v) for r, v in self.auc.items()},
            "variance": {r: dict(v) for r, v in self.variance.items()},
            "rank_by_auc": {r: list(v) for r, v in self.rank_by_auc.items()},
            "rank_by_variance": {r: list(v) for r, v in self.rank_by_variance.items()},
            "grid": None if self.grid is None else self.grid.to_json(),
        }


def _rank(values: Mapping[str, float | None]) -> list[str]:
    """Algorithms in ascending order of value; undefined values last."""
    return sorted(values, key=lambda a: (values[a] is None, values[a] if values[a] is not None else 0.0, a))


def compare_methods(
    dataset: Dataset,
    protected: str,
    seed: int = 0,
    algorithms: Iterable[str] = ALGORITHMS,
    **grid_kwargs,
) -> MethodComparison:
    """AUC and AUC group variance per algorithm, with/without the protected
    feature, before/after sampling.

    Rankings are ascending (lowest AUC or lowest variance first) and are
    computed independently for every configuration row plus an ``overall``
    entry over the row means.
    """
    algorithms = tuple(algorithms)
    grid = ablation_grid(
        dataset, protected, algorithms, seed=seed, feature_modes=("1", "0"), samplings=(False, True), **grid_kwargs
    )
    rows, auc, var = [], {}, {}
    for fm, sampling in COMPARE_ROWS:
        label = compare_row_label(protected, fm, sampling)
        rows.append(label)
        auc[label] = {a: grid.cell(a, sampling, fm).overall.get("auc") for a in algorithms}
        var[label] = {a: grid.cell(a, sampling, fm).variance["auc"] for a in algorithms}

    def mean_over_rows(table):
        out = {}
        for a in algorithms:
            vals = [table[r][a] for r in rows if table[r][a] is not None]
            out[a] = float(np.mean(vals)) if vals else None
        return out

    rank_auc = {r: _rank(auc[r]) for r in rows}
    rank_var = {r: _rank(var[r]) for r in rows}
    rank_auc["overall"] = _rank(mean_over_rows(auc))
    rank_var["overall"] = _rank(mean_over_rows(var))
    return MethodComparison(protected, algorithms, tuple(rows), auc, var, rank_auc, rank_var, grid)
