"""Depth-limited CART trees on binned features, plus the forest and boosting loops.

Split candidates are cut points between consecutive distinct training values
(capped at ``max_bins`` quantile cuts per column); a row goes left when its
value is ``<= cut``. Splits minimize the summed squared error of the children,
which for 0/1 targets is proportional to the Gini impurity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_BINS = 256


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray  # encoded column index, -1 at leaves
    cut: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    fraction: np.ndarray  # share of the tree's training rows reaching the node
    gain: np.ndarray  # per-row impurity decrease of the split (0 at leaves)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                return node
            go_left = X[rows, np.where(internal, f, 0)] <= self.cut[node]
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_json(self) -> list[dict]:
        return [
            {
                "feature": int(self.feature[i]),
                "cut": float(self.cut[i]),
                "left": int(self.left[i]),
                "right": int(self.right[i]),
                "value": float(self.value[i]),
                "fraction": float(self.fraction[i]),
                "gain": float(self.gain[i]),
            }
            for i in range(self.n_nodes)
        ]

    @classmethod
    def from_json(cls, nodes: list[dict]) -> "Tree":
        def col(key, dtype):
            return np.array([n[key] for n in nodes], dtype=dtype)

        return cls(
            col("feature", np.int64),
            col("cut", float),
            col("left", np.int64),
            col("right", np.int64),
            col("value", float),
            col("fraction", float),
            col("gain", float),
        )


class Binner:
    """Per-column cut points and the bin codes of the training matrix."""

    def __init__(self, X: np.ndarray, max_bins: int = MAX_BINS):
        self.edges = []
        for j in range(X.shape[1]):
            u = np.unique(X[:, j])
            if len(u) <= max_bins:
                e = (u[:-1] + u[1:]) / 2.0
                bad = e <= u[:-1]
                e[bad] = u[:-1][bad]
            else:
                q = np.quantile(X[:, j], np.linspace(0, 1, max_bins + 1)[1:-1], method="lower")
                e = np.unique(q)
                e = e[e < u[-1]]
            self.edges.append(e)
        self.n_bins = np.array([len(e) + 1 for e in self.edges], dtype=np.int64)
        self.width = int(self.n_bins.max()) if len(self.n_bins) else 1
        codes = np.empty(X.shape, dtype=np.int64)
        for j, e in enumerate(self.edges):
            codes[:, j] = np.searchsorted(e, X[:, j], side="left")
        self.codes = codes


def build_tree(
    binner: Binner,
    rows: np.ndarray,
    target: np.ndarray,
    *,
    max_depth: int,
    min_leaf: int,
    n_total: int,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
    gain_scale: float = 1.0,
) -> tuple[Tree, np.ndarray]:
    """Grow one tree on ``binner.codes[rows]`` against ``target[rows]``.

    Leaf values are target means. ``gain_scale`` multiplies the stored
    impurity decrease (2 turns squared error on 0/1 targets into Gini).
    Returns the tree and the leaf reached by each entry of ``rows``.
    """
    codes = binner.codes
    p = codes.shape[1]
    width = binner.width
    valid_cut = np.arange(width)[None, :] < (binner.n_bins - 1)[:, None]  # (p, width)

    feature, cut, left, right, value, fraction, gain = [], [], [], [], [], [], []
    leaf_of = np.empty(len(rows), dtype=np.int64)

    def new_node(pos):
        r = rows[pos]
        feature.append(-1)
        cut.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(target[r].mean()))
        fraction.append(len(r) / n_total)
        gain.append(0.0)
        return len(feature) - 1

    stack = [(new_node(np.arange(len(rows))), np.arange(len(rows)), 0)]
    while stack:
        node, pos, depth = stack.pop()
        n = len(pos)
        r = rows[pos]
        t = target[r]
        s, s2 = t.sum(), np.dot(t, t)
        sse_parent = s2 - s * s / n
        if depth >= max_depth or n < 2 * min_leaf or sse_parent <= 1e-12 * max(1.0, s2):
            leaf_of[pos] = node
            continue
        feats = np.arange(p)
        if max_features is not None and max_features < p:
            feats = np.sort(rng.choice(p, size=max_features, replace=False))
        sub = codes[r][:, feats] + (np.arange(len(feats)) * width)[None, :]
        flat = sub.ravel()
        size = len(feats) * width
        tw = np.broadcast_to(t[:, None], sub.shape).ravel()
        cnt = np.bincount(flat, minlength=size).reshape(len(feats), width).cumsum(axis=1)
        sy = np.bincount(flat, weights=tw, minlength=size).reshape(len(feats), width).cumsum(axis=1)
        sy2 = np.bincount(flat, weights=tw * tw, minlength=size).reshape(len(feats), width).cumsum(axis=1)
        nl, nr = cnt, n - cnt
        ok = valid_cut[feats] & (nl >= min_leaf) & (nr >= min_leaf)
        if not ok.any():
            leaf_of[pos] = node
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            sse = (sy2 - sy * sy / nl) + ((s2 - sy2) - (s - sy) ** 2 / nr)
        sse = np.where(ok, sse, np.inf)
        k = int(np.argmin(sse))
        fi, b = divmod(k, width)
        decrease = (sse_parent - sse[fi, b]) / n
        if not decrease > 1e-12 * max(1.0, s2 / n):
            leaf_of[pos] = node
            continue
        j = int(feats[fi])
        go_left = codes[r, j] <= b
        feature[node] = j
        cut[node] = float(binner.edges[j][b])
        gain[node] = gain_scale * float(decrease)
        lpos, rpos = pos[go_left], pos[~go_left]
        li = new_node(lpos)
        ri = new_node(rpos)
        left[node], right[node] = li, ri
        stack.append((ri, rpos, depth + 1))
        stack.append((li, lpos, depth + 1))

    tree = Tree(
        np.array(feature, dtype=np.int64),
        np.array(cut),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value),
        np.array(fraction),
        np.array(gain),
    )
    return tree, leaf_of


def fit_forest(X, y, *, n_trees, max_depth, min_leaf, max_features, seed) -> list[Tree]:
    rng = np.random.default_rng(seed)
    binner = Binner(X)
    n = len(y)
    target = y.astype(float)
    trees = []
    for _ in range(n_trees):
        rows = rng.integers(0, n, size=n)
        tree, _ = build_tree(
            binner,
            rows,
            target,
            max_depth=max_depth,
            min_leaf=min_leaf,
            n_total=n,
            max_features=max_features,
            rng=rng,
            gain_scale=2.0,
        )
        trees.append(tree)
    return trees


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def fit_gbt(X, y, *, rounds, max_depth, learning_rate, min_leaf) -> tuple[float, list[Tree]]:
    """Stagewise boosting on the logistic loss.

    Each round fits a regression tree to the negative gradient ``y - p``;
    leaf values are mean residuals, added with shrinkage ``learning_rate``.
    """
    binner = Binner(X)
    n = len(y)
    y = y.astype(float)
    base = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
    init = float(np.log(base / (1 - base)))
    margin = np.full(n, init)
    rows = np.arange(n)
    trees = []
    for _ in range(rounds):
        resid = y - sigmoid(margin)
        tree, leaf_of = build_tree(binner, rows, resid, max_depth=max_depth, min_leaf=min_leaf, n_total=n)
        trees.append(tree)
        margin += learning_rate * tree.value[leaf_of]
    return init, trees
