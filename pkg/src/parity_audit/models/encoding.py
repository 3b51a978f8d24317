"""Feature encoding captured at training time.

Numeric columns are median-imputed then standardized; categorical columns are
one-hot encoded against the training dictionary, with missing values treated
as their own category.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..dataset import CATEGORICAL, NUMERIC, Dataset
from ..errors import SchemaError, UsageError

logger = logging.getLogger(__name__)

MISSING = "<missing>"


@dataclass(frozen=True)
class Encoding:
    features: tuple[str, ...]
    kinds: dict  # feature -> numeric | categorical
    numeric: dict  # feature -> {"median", "mean", "std"}
    categories: dict  # feature -> list of category strings

    @property
    def columns(self) -> list[str]:
        cols = []
        for f in self.features:
            if self.kinds[f] == NUMERIC:
                cols.append(f)
            else:
                cols.extend(f"{f}={c}" for c in self.categories[f])
        return cols

    @property
    def sources(self) -> list[str]:
        """Source feature of every encoded column."""
        out = []
        for f in self.features:
            out.extend([f] if self.kinds[f] == NUMERIC else [f] * len(self.categories[f]))
        return out

    @classmethod
    def fit(cls, data: Dataset) -> "Encoding":
        feats = tuple(data.feature_names)
        if not feats:
            raise UsageError("training set has no feature columns")
        kinds, numeric, categories = {}, {}, {}
        for f in feats:
            kind = data.schema.kind(f)
            kinds[f] = kind
            col = data.features[f]
            if kind == NUMERIC:
                ok = col[~np.isnan(col)]
                median = float(np.median(ok)) if len(ok) else 0.0
                filled = np.where(np.isnan(col), median, col)
                std = float(filled.std())
                numeric[f] = {"median": median, "mean": float(filled.mean()), "std": std if std > 0 else 1.0}
            else:
                cats = sorted({MISSING if v is None else str(v) for v in col})
                categories[f] = cats
        return cls(feats, kinds, numeric, categories)

    def transform(self, data: Dataset) -> np.ndarray:
        missing = [f for f in self.features if f not in data.features]
        if missing:
            raise SchemaError(f"data lacks trained-on column(s): {', '.join(missing)}")
        extra = [f for f in data.feature_names if f not in self.kinds]
        if extra:
            logger.warning("ignoring column(s) not seen in training: %s", ", ".join(extra))
        blocks = []
        for f in self.features:
            col = data.features[f]
            if self.kinds[f] == NUMERIC:
                if data.schema.kind(f) != NUMERIC:
                    raise SchemaError(f"column {f!r} was numeric at training time")
                st = self.numeric[f]
                x = np.where(np.isnan(col), st["median"], col)
                blocks.append(((x - st["mean"]) / st["std"])[:, None])
            else:
                cats = self.categories[f]
                lookup = {c: j for j, c in enumerate(cats)}
                block = np.zeros((len(col), len(cats)))
                unseen = set()
                for i, v in enumerate(col):
                    key = MISSING if v is None else str(v)
                    j = lookup.get(key)
                    if j is None:
                        unseen.add(key)
                    else:
                        block[i, j] = 1.0
                if unseen:
                    logger.warning("column %r: unseen categories %s encoded as all-zero", f, sorted(unseen))
                blocks.append(block)
        return np.hstack(blocks) if blocks else np.zeros((len(data), 0))

    def to_json(self) -> dict:
        return {
            "features": list(self.features),
            "kinds": dict(self.kinds),
            "numeric": {k: dict(v) for k, v in self.numeric.items()},
            "categories": {k: list(v) for k, v in self.categories.items()},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Encoding":
        return cls(tuple(obj["features"]), dict(obj["kinds"]), dict(obj["numeric"]), dict(obj["categories"]))


__all__ = ["Encoding", "MISSING", "CATEGORICAL", "NUMERIC"]
