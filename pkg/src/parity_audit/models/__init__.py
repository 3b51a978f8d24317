"""Reference learners: logistic regression, random forest and gradient-boosted trees."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..dataset import Dataset
from ..errors import SingleClassError, UsageError
from ..metrics import ScoreSet
from .encoding import Encoding
from .logreg import fit_logreg
from .trees import Tree, fit_forest, fit_gbt, sigmoid

ALGORITHMS = ("logreg", "forest", "gbt")


@dataclass(frozen=True)
class ModelConfig:
    """Learner choice and hyperparameters.

    Only the fields of the chosen algorithm are used. ``max_features=None``
    means ``round(sqrt(p))`` encoded columns per forest split.
    """

    algorithm: str = "logreg"
    seed: int = 0
    # logreg
    lr: float = 0.1
    iterations: int = 500
    l2: float = 1e-4
    # forest
    n_trees: int = 100
    forest_depth: int = 8
    max_features: float | None = None
    # gbt
    rounds: int = 100
    gbt_depth: int = 3
    shrinkage: float = 0.1
    # forest + gbt
    min_leaf: int = 5

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        for name in ("iterations", "n_trees", "forest_depth", "rounds", "gbt_depth", "min_leaf"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be >= 1")
        for name in ("lr", "shrinkage"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise UsageError(f"{name} must lie in (0, 1]")
        if self.max_features is not None and not 0.0 < self.max_features <= 1.0:
            raise UsageError("max_features must lie in (0, 1]")
        if self.l2 < 0:
            raise UsageError("l2 must be non-negative")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TrainedModel:
    algorithm: str
    encoding: Encoding
    config: ModelConfig
    weights: np.ndarray | None = None
    intercept: float = 0.0
    trees: tuple[Tree, ...] = ()
    flags: tuple[str, ...] = field(default_factory=tuple)

    def margin(self, X: np.ndarray) -> np.ndarray:
        if self.algorithm == "logreg":
            return X @ self.weights + self.intercept
        if self.algorithm == "gbt":
            out = np.full(len(X), self.intercept)
            for t in self.trees:
                out += self.config.shrinkage * t.predict(X)
            return out
        raise UsageError("forest models have no margin")

    def to_json(self) -> dict:
        params = {"intercept": self.intercept}
        if self.weights is not None:
            params["weights"] = self.weights.tolist()
        if self.trees:
            params["trees"] = [t.to_json() for t in self.trees]
        return {
            "algorithm": self.algorithm,
            "config": self.config.to_json(),
            "encoding": self.encoding.to_json(),
            "columns": self.encoding.columns,
            "params": params,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrainedModel":
        params = obj["params"]
        w = params.get("weights")
        return cls(
            algorithm=obj["algorithm"],
            encoding=Encoding.from_json(obj["encoding"]),
            config=ModelConfig(**obj["config"]),
            weights=None if w is None else np.array(w, dtype=float),
            intercept=float(params.get("intercept", 0.0)),
            trees=tuple(Tree.from_json(t) for t in params.get("trees", [])),
        )


def train(train_set: Dataset, config: ModelConfig) -> TrainedModel:
    neg, pos = train_set.class_counts()
    if neg == 0 or pos == 0:
        raise SingleClassError("training set must contain both classes")
    enc = Encoding.fit(train_set)
    X = enc.transform(train_set)
    y = train_set.labels.astype(float)
    if config.algorithm == "logreg":
        w, b = fit_logreg(X, y, learning_rate=config.lr, iterations=config.iterations, l2=config.l2)
        return TrainedModel("logreg", enc, config, weights=w, intercept=b)
    if config.algorithm == "forest":
        p = X.shape[1]
        frac = config.max_features if config.max_features is not None else math.sqrt(p) / p
        m = max(1, min(p, int(round(frac * p))))
        trees = fit_forest(
            X,
            y,
            n_trees=config.n_trees,
            max_depth=config.forest_depth,
            min_leaf=config.min_leaf,
            max_features=m,
            seed=config.seed,
        )
        return TrainedModel("forest", enc, config, trees=tuple(trees))
    init, trees = fit_gbt(
        X, y, rounds=config.rounds, max_depth=config.gbt_depth, learning_rate=config.shrinkage, min_leaf=config.min_leaf
    )
    flags = () if any(t.n_nodes > 1 for t in trees) else ("no_splits",)
    return TrainedModel("gbt", enc, config, intercept=init, trees=tuple(trees), flags=flags)


def predict(model: TrainedModel, data: Dataset) -> ScoreSet:
    X = model.encoding.transform(data)
    if model.algorithm == "forest":
        scores = np.mean([t.predict(X) for t in model.trees], axis=0)
    else:
        scores = sigmoid(model.margin(X))
    return ScoreSet(np.clip(scores, 0.0, 1.0), data.labels, data.row_ids)


def save_model(model: TrainedModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_json()), encoding="utf-8")


def load_model(path: str | Path) -> TrainedModel:
    return TrainedModel.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


from .importance import (  # noqa: E402
    AssociationScore,
    ImportanceRanking,
    association,
    importance,
    select_proxies,
)

__all__ = [
    "ALGORITHMS",
    "AssociationScore",
    "ImportanceRanking",
    "ModelConfig",
    "TrainedModel",
    "association",
    "importance",
    "load_model",
    "predict",
    "save_model",
    "select_proxies",
    "train",
]
