"""Tabular dataset handling: schema, CSV ingestion, group partitions, splits,
oversampling, feature ablation and a synthetic biased-data generator.

Datasets are stored column-wise. Numeric columns are ``float64`` arrays with
``nan`` marking a missing value; categorical columns are ``object`` arrays of
strings with ``None`` marking a missing value. All arrays are read-only.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataParseError, EmptyGroupError, SchemaError, UsageError

logger = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"
UNKNOWN_GROUP = "unknown"


@dataclass(frozen=True)
class Column:
    name: str
    kind: str

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise SchemaError(f"column {self.name!r}: kind must be numeric or categorical, got {self.kind!r}")


@dataclass(frozen=True)
class BinningSpec:
    """Right-closed bins over the real line.

    ``cuts = (40, 70)`` gives ``(-inf, 40]``, ``(40, 70]`` and ``(70, inf)``.
    """

    cuts: tuple[float, ...]
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        cuts = tuple(float(c) for c in self.cuts)
        object.__setattr__(self, "cuts", cuts)
        if not cuts:
            raise SchemaError("binning needs at least one cut point")
        if any(not math.isfinite(c) for c in cuts):
            raise SchemaError("cut points must be finite")
        if any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise SchemaError(f"cut points must be strictly increasing: {cuts}")
        if self.labels is None:
            object.__setattr__(self, "labels", _default_bin_labels(cuts))
        else:
            labels = tuple(str(x) for x in self.labels)
            if len(labels) != len(cuts) + 1:
                raise SchemaError(f"{len(cuts)} cut points need {len(cuts) + 1} labels, got {len(labels)}")
            if len(set(labels)) != len(labels):
                raise SchemaError("bin labels must be unique")
            object.__setattr__(self, "labels", labels)

    def assign(self, values: np.ndarray) -> np.ndarray:
        """Map numeric values to bin labels (``None`` where the value is nan)."""
        values = np.asarray(values, dtype=float)
        idx = np.searchsorted(np.asarray(self.cuts), values, side="left")
        out = np.empty(len(values), dtype=object)
        for i, (k, v) in enumerate(zip(idx, values)):
            out[i] = None if np.isnan(v) else self.labels[k]
        return out

    def to_json(self) -> dict:
        return {"cuts": list(self.cuts), "labels": list(self.labels)}

    @classmethod
    def from_json(cls, obj) -> "BinningSpec":
        if isinstance(obj, Mapping):
            return cls(tuple(obj["cuts"]), tuple(obj["labels"]) if obj.get("labels") else None)
        return cls(tuple(obj))


def _fmt_cut(c: float) -> str:
    return str(int(c)) if float(c).is_integer() else repr(c)


def _default_bin_labels(cuts: Sequence[float]) -> tuple[str, ...]:
    if all(float(c).is_integer() for c in cuts):
        labels = [f"xx-{_fmt_cut(cuts[0])}"]
        for a, b in zip(cuts, cuts[1:]):
            labels.append(f"{_fmt_cut(a + 1)}-{_fmt_cut(b)}")
        labels.append(f"{_fmt_cut(cuts[-1] + 1)}-xx")
        return tuple(labels)
    edges = [-math.inf, *cuts, math.inf]
    return tuple(f"({a:g},{b:g}]" if math.isfinite(b) else f"({a:g},inf)" for a, b in zip(edges, edges[1:]))


# Age groups of the form xx-40 / 41-70 / 71-xx.
AGE_BINS = BinningSpec((40, 70), ("xx-40", "41-70", "71-xx"))


@dataclass(frozen=True)
class ProtectedFeature:
    name: str
    binning: BinningSpec | None = None


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]
    target: str
    positive_label: str = "1"
    protected: tuple[ProtectedFeature, ...] = ()
    missing_token: str = ""
    # Columns removed by ablation; kept so protected declarations stay meaningful.
    dropped: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "protected", tuple(self.protected))
        object.__setattr__(self, "dropped", tuple(self.dropped))
        names = [c.name for c in self.columns]
        seen = set()
        for n in names:
            if n in seen:
                raise SchemaError(f"duplicate column name {n!r}")
            seen.add(n)
        if self.target not in seen:
            raise SchemaError(f"target column {self.target!r} not among columns")
        for p in self.protected:
            if p.name == self.target:
                raise SchemaError(f"target column {self.target!r} cannot be protected")
            if p.name not in seen and p.name not in self.dropped:
                raise SchemaError(f"protected column {p.name!r} not among columns")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.columns if c.name != self.target]

    @property
    def protected_names(self) -> list[str]:
        return [p.name for p in self.protected]

    def kind(self, name: str) -> str:
        for c in self.columns:
            if c.name == name:
                return c.kind
        raise SchemaError(f"unknown column {name!r}")

    def protected_spec(self, name: str) -> ProtectedFeature:
        for p in self.protected:
            if p.name == name:
                return p
        raise UsageError(f"feature {name!r} is not declared protected")

    def to_json(self) -> dict:
        return {
            "columns": [{"name": c.name, "kind": c.kind} for c in self.columns],
            "target": self.target,
            "positive_label": self.positive_label,
            "protected": [
                {"name": p.name, **({"bins": p.binning.to_json()} if p.binning else {})} for p in self.protected
            ],
            "missing_token": self.missing_token,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Schema":
        try:
            columns = tuple(Column(c["name"], c["kind"]) for c in obj["columns"])
            protected = tuple(
                ProtectedFeature(p["name"], BinningSpec.from_json(p["bins"]) if p.get("bins") is not None else None)
                for p in obj.get("protected", [])
            )
            return cls(
                columns=columns,
                target=obj["target"],
                positive_label=str(obj.get("positive_label", "1")),
                protected=protected,
                missing_token=str(obj.get("missing_token", "")),
            )
        except KeyError as e:
            raise SchemaError(f"schema document is missing key {e.args[0]!r}") from None


def load_schema(path: str | Path) -> Schema:
    with open(path, encoding="utf-8") as fh:
        return Schema.from_json(json.load(fh))


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Immutable column-wise table with a binary label vector.

    ``row_ids`` are positions in the dataset this one was derived from (the
    loaded file, for a direct load); oversampled duplicates repeat the id of
    the row they copy. ``role`` is one of ``full``, ``train`` or ``test``.
    """

    schema: Schema
    features: Mapping[str, np.ndarray]
    labels: np.ndarray
    row_ids: np.ndarray | None = None
    role: str = "full"
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        labels = _readonly(np.asarray(self.labels, dtype=np.int8).copy())
        n = len(labels)
        if n and not np.isin(labels, (0, 1)).all():
            raise SchemaError("labels must be 0/1")
        cols = {}
        for name in self.schema.feature_names:
            if name not in self.features:
                raise SchemaError(f"dataset lacks column {name!r}")
            arr = self.features[name]
            arr = np.asarray(arr, dtype=float if self.schema.kind(name) == NUMERIC else object)
            if len(arr) != n:
                raise SchemaError(f"column {name!r} has {len(arr)} values for {n} labels")
            cols[name] = _readonly(arr.copy())
        row_ids = np.arange(n) if self.row_ids is None else np.asarray(self.row_ids, dtype=np.int64).copy()
        if len(row_ids) != n:
            raise SchemaError("row_ids length mismatch")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "features", cols)
        object.__setattr__(self, "row_ids", _readonly(row_ids))
        object.__setattr__(self, "flags", tuple(self.flags))

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def feature_names(self) -> list[str]:
        return self.schema.feature_names

    def column(self, name: str) -> np.ndarray:
        if name == self.schema.target:
            return self.labels
        try:
            return self.features[name]
        except KeyError:
            raise SchemaError(f"dataset has no column {name!r}") from None

    def row(self, i: int) -> dict:
        rec = {name: self.features[name][i] for name in self.feature_names}
        rec[self.schema.target] = int(self.labels[i])
        return rec

    def take(self, idx, role: str | None = None) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            schema=self.schema,
            features={k: v[idx] for k, v in self.features.items()},
            labels=self.labels[idx],
            row_ids=self.row_ids[idx],
            role=self.role if role is None else role,
        )

    def class_counts(self) -> tuple[int, int]:
        pos = int(self.labels.sum())
        return len(self) - pos, pos


# --------------------------------------------------------------------- CSV io


def _parse_numeric(raw: str, token: str, col: str, lineno: int) -> float:
    s = raw.strip()
    if s == token or (token == "" and s == ""):
        return math.nan
    try:
        return float(s)
    except ValueError:
        raise DataParseError(f"row {lineno}: column {col!r}: non-numeric value {raw!r}", row=lineno) from None


def load_csv(path: str | Path, schema: Schema) -> Dataset:
    """Read a header-first, comma separated file into a :class:`Dataset`.

    Row numbers in error messages count the header as row 1.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such data file: {path}")
    with open(path, newline="", encoding="utf-8-sig") as fh:
        return _read_csv(fh, schema, str(path))


def read_csv_text(text: str, schema: Schema) -> Dataset:
    return _read_csv(io.StringIO(text), schema, "<string>")


def _read_csv(fh, schema: Schema, source: str) -> Dataset:
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError(f"{source}: file has no header row") from None
    missing = [n for n in schema.names if n not in header]
    if missing:
        raise SchemaError(f"{source}: missing column(s) {', '.join(repr(m) for m in missing)}")
    extra = [h for h in header if h not in schema.names]
    if extra:
        raise SchemaError(f"{source}: unexpected column(s) {', '.join(repr(e) for e in extra)}")
    pos = {name: header.index(name) for name in schema.names}
    token = schema.missing_token

    values: dict[str, list] = {n: [] for n in schema.feature_names}
    labels = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec or (len(rec) == 1 and not rec[0].strip()):
            continue
        if len(rec) != len(header):
            raise DataParseError(f"row {lineno}: expected {len(header)} fields, got {len(rec)}", row=lineno)
        raw_label = rec[pos[schema.target]].strip()
        if raw_label == token or raw_label == "":
            raise DataParseError(f"row {lineno}: missing target value", row=lineno)
        labels.append(raw_label)
        for name in schema.feature_names:
            raw = rec[pos[name]]
            if schema.kind(name) == NUMERIC:
                values[name].append(_parse_numeric(raw, token, name, lineno))
            else:
                s = raw.strip()
                values[name].append(None if s == token else s)

    flags = []
    if not labels:
        flags.append("empty")
        logger.warning("%s: no data rows", source)
    elif schema.positive_label not in set(labels):
        raise DataParseError(
            f"{source}: positive label {schema.positive_label!r} never occurs in target column {schema.target!r}"
        )
    y = np.array([1 if v == schema.positive_label else 0 for v in labels], dtype=np.int8)
    feats = {}
    for name, vals in values.items():
        if schema.kind(name) == NUMERIC:
            feats[name] = np.array(vals, dtype=float)
        else:
            arr = np.empty(len(vals), dtype=object)
            arr[:] = vals
            feats[name] = arr
    return Dataset(schema, feats, y, flags=tuple(flags))


def _fmt_value(v, kind: str, token: str) -> str:
    if kind == NUMERIC:
        return token if np.isnan(v) else repr(float(v))
    return token if v is None else str(v)


def dataset_to_csv(dataset: Dataset) -> str:
    """Serialize with full float precision; ``load_csv`` reads it back unchanged."""
    schema = dataset.schema
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(schema.names)
    neg_label = "0" if schema.positive_label != "0" else "negative"
    for i in range(len(dataset)):
        rec = []
        for c in schema.columns:
            if c.name == schema.target:
                rec.append(schema.positive_label if dataset.labels[i] else neg_label)
            else:
                rec.append(_fmt_value(dataset.features[c.name][i], c.kind, schema.missing_token))
        w.writerow(rec)
    return buf.getvalue()


def write_csv(dataset: Dataset, path: str | Path) -> None:
    Path(path).write_text(dataset_to_csv(dataset), encoding="utf-8")


# ------------------------------------------------------------------ partition


@dataclass(frozen=True)
class GroupPartition:
    feature: str
    groups: Mapping[str, np.ndarray]

    def __post_init__(self):
        object.__setattr__(
            self, "groups", {k: _readonly(np.asarray(v, dtype=np.int64).copy()) for k, v in self.groups.items()}
        )

    @property
    def labels(self) -> list[str]:
        return list(self.groups)

    def sizes(self) -> dict[str, int]:
        return {k: len(v) for k, v in self.groups.items()}

    @property
    def n_rows(self) -> int:
        return sum(len(v) for v in self.groups.values())

    def __iter__(self):
        return iter(self.groups.items())

    def __len__(self) -> int:
        return len(self.groups)


def resolve_binning(schema: Schema, feature: str, binning: BinningSpec | None = None) -> BinningSpec | None:
    """Binning for a protected feature: explicit argument, then schema, then the age default."""
    spec = schema.protected_spec(feature)
    if feature in schema.dropped:
        raise UsageError(f"column {feature!r} was ablated; partition the original dataset instead")
    kind = schema.kind(feature)
    if kind == CATEGORICAL:
        if binning is not None:
            raise UsageError(f"categorical feature {feature!r} cannot be binned")
        return None
    binning = binning or spec.binning
    if binning is None:
        if feature.lower() == "age":
            return AGE_BINS
        raise UsageError(f"numeric protected feature {feature!r} needs a BinningSpec")
    return binning


def group_labels(dataset: Dataset, feature: str, binning: BinningSpec | None = None) -> np.ndarray:
    """Per-row group label for a protected feature (missing values map to ``unknown``)."""
    binning = resolve_binning(dataset.schema, feature, binning)
    values = dataset.column(feature)
    keys = binning.assign(values) if binning is not None else np.asarray(values, dtype=object)
    out = np.empty(len(keys), dtype=object)
    out[:] = [UNKNOWN_GROUP if k is None else str(k) for k in keys]
    return out


def partition(
    dataset: Dataset,
    feature: str,
    binning: BinningSpec | None = None,
    *,
    allow_empty: bool = False,
) -> GroupPartition:
    """Split row indices by the categories of a protected feature.

    For a binned numeric feature every bin must be populated unless
    ``allow_empty`` is set, in which case empty bins are dropped with a warning.
    """
    binning = resolve_binning(dataset.schema, feature, binning)
    keys = group_labels(dataset, feature, binning)
    if binning is not None:
        order = list(binning.labels)
    else:
        order = sorted({k for k in keys if k != UNKNOWN_GROUP})
    if any(k == UNKNOWN_GROUP for k in keys):
        order.append(UNKNOWN_GROUP)
    groups = {label: np.flatnonzero(keys == label) for label in order}
    empty = [k for k, v in groups.items() if len(v) == 0]
    if empty and len(dataset):
        if not allow_empty:
            raise EmptyGroupError(feature, empty)
        logger.warning("feature %r: dropping empty group(s) %s", feature, ", ".join(empty))
    return GroupPartition(feature, {k: v for k, v in groups.items() if len(v)})


# -------------------------------------------------------------- split/sample


def split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Label-stratified train/test split.

    Each class contributes ``round(n_class * test_fraction)`` rows to the test
    set; both sides must keep at least one row of every class.
    """
    if not 0.0 < test_fraction < 1.0:
        raise UsageError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    if len(dataset) == 0:
        raise UsageError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    test_idx = []
    for cls in (0, 1):
        idx = np.flatnonzero(dataset.labels == cls)
        n_test = int(round(len(idx) * test_fraction))
        if len(idx) < 2 or n_test == 0 or n_test == len(idx):
            raise UsageError(
                f"class {cls} has {len(idx)} row(s); too few to stratify at test_fraction={test_fraction}"
            )
        test_idx.append(rng.permutation(idx)[:n_test])
    test_idx = np.sort(np.concatenate(test_idx))
    mask = np.ones(len(dataset), dtype=bool)
    mask[test_idx] = False
    return dataset.take(np.flatnonzero(mask), role="train"), dataset.take(test_idx, role="test")


def oversample(train: Dataset, part: GroupPartition, seed: int) -> Dataset:
    """Duplicate rows of smaller groups (with replacement) up to the largest group size.

    Original rows come first, in their original order, followed by the
    duplicates group by group.
    """
    if train.role != "train":
        raise UsageError(f"oversample only applies to training data (dataset role is {train.role!r})")
    if part.n_rows != len(train):
        raise UsageError("partition was not computed on this dataset")
    if len(part) == 0:
        return train
    rng = np.random.default_rng(seed)
    target = max(part.sizes().values())
    extra = [rng.choice(idx, size=target - len(idx), replace=True) for _, idx in part if len(idx) < target]
    if not extra:
        return train
    idx = np.concatenate([np.arange(len(train)), *extra])
    return train.take(idx, role="train")


def ablate(dataset: Dataset, drop: Iterable[str]) -> Dataset:
    """Remove feature columns; protected declarations of dropped columns survive in the schema."""
    drop = set(drop)
    schema = dataset.schema
    if schema.target in drop:
        raise UsageError(f"cannot drop the target column {schema.target!r}")
    unknown = sorted(drop - set(schema.feature_names))
    if unknown:
        raise UsageError(f"cannot drop unknown column(s): {', '.join(unknown)}")
    if not drop:
        return dataset
    new_schema = replace(
        schema,
        columns=tuple(c for c in schema.columns if c.name not in drop),
        dropped=tuple(schema.dropped) + tuple(sorted(drop)),
    )
    return Dataset(
        schema=new_schema,
        features={k: v for k, v in dataset.features.items() if k not in drop},
        labels=dataset.labels,
        row_ids=dataset.row_ids,
        role=dataset.role,
        flags=dataset.flags,
    )


# ------------------------------------------------------------------ synthetic


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of :func:`synth_gen`.

    ``leakage`` is the target correlation between the ``proxy`` column and the
    (standardized) group code. ``noise`` is the probability that a row's
    features are drawn from the flipped label, which weakens the features
    without changing the per-group base rates.
    """

    n: int = 1000
    proportions: Mapping[str, float] = field(default_factory=lambda: {"A": 0.5, "B": 0.5})
    base_rates: Mapping[str, float] = field(default_factory=lambda: {"A": 0.5, "B": 0.5})
    n_informative: int = 3
    separation: float = 1.0
    leakage: float = 0.0
    noise: float = 0.0
    seed: int = 0
    protected_name: str = "group"
    proxy_name: str = "proxy"

    def __post_init__(self):
        if self.n < 1:
            raise UsageError("n must be positive")
        if set(self.proportions) != set(self.base_rates):
            raise UsageError("proportions and base_rates must name the same groups")
        if not math.isclose(sum(self.proportions.values()), 1.0, abs_tol=1e-9):
            raise UsageError("group proportions must sum to 1")
        for name, v in [*self.proportions.items(), *self.base_rates.items()]:
            if not 0.0 <= v <= 1.0:
                raise UsageError(f"rate for {name!r} outside [0, 1]")
        for name in ("leakage", "noise"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise UsageError(f"{name} must lie in [0, 1]")
        if self.n_informative < 0:
            raise UsageError("n_informative must be non-negative")

    def schema(self) -> Schema:
        cols = [Column(self.protected_name, CATEGORICAL), Column(self.proxy_name, NUMERIC)]
        cols += [Column(f"x{j + 1}", NUMERIC) for j in range(self.n_informative)]
        cols.append(Column("label", CATEGORICAL))
        return Schema(tuple(cols), target="label", positive_label="1", protected=(ProtectedFeature(self.protected_name),))


def synth_gen(config: SynthConfig) -> Dataset:
    rng = np.random.default_rng(config.seed)
    names = list(config.proportions)
    props = np.array([config.proportions[g] for g in names])
    rates = np.array([config.base_rates[g] for g in names])
    n = config.n

    code = rng.choice(len(names), size=n, p=props / props.sum())
    y = (rng.random(n) < rates[code]).astype(np.int8)

    # standardize the group code under the configured proportions
    mu = float(np.dot(props, np.arange(len(names))))
    sd = math.sqrt(float(np.dot(props, (np.arange(len(names)) - mu) ** 2)))
    z = (code - mu) / sd if sd > 0 else np.zeros(n)
    proxy = config.leakage * z + math.sqrt(1.0 - config.leakage**2) * rng.standard_normal(n)

    flip = rng.random(n) < config.noise
    y_feat = np.where(flip, 1 - y, y)
    feats = {config.protected_name: np.array(names, dtype=object)[code], config.proxy_name: proxy}
    for j in range(config.n_informative):
        feats[f"x{j + 1}"] = config.separation * y_feat + rng.standard_normal(n)
    return Dataset(config.schema(), feats, y)
