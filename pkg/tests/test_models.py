import math

import numpy as np
import pytest

from parity_audit.dataset import (
    CATEGORICAL,
    NUMERIC,
    Column,
    Dataset,
    ProtectedFeature,
    Schema,
    ablate,
    split,
)
from parity_audit.errors import SchemaError, SingleClassError, UsageError
from parity_audit.metrics import roc_and_auc
from parity_audit.models import (
    ModelConfig,
    TrainedModel,
    association,
    importance,
    load_model,
    predict,
    save_model,
    select_proxies,
    train,
)
from parity_audit.models.encoding import Encoding
from parity_audit.models.importance import AssociationScore, ImportanceRanking, cramers_v, raw_importance
from parity_audit.models.logreg import loss_and_grad
from parity_audit.models.trees import Binner, fit_forest


def numeric_dataset(X, y, protected=None, cats=None):
    cols = [Column(f"f{j + 1}", NUMERIC) for j in range(X.shape[1])]
    feats = {f"f{j + 1}": X[:, j] for j in range(X.shape[1])}
    prot = ()
    if cats is not None:
        cols.append(Column("g", CATEGORICAL))
        feats["g"] = np.array(cats, dtype=object)
        prot = (ProtectedFeature("g"),)
    cols.append(Column("y", CATEGORICAL))
    return Dataset(Schema(tuple(cols), target="y", protected=prot), feats, y)


def separable(n=400, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 2))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(int)
    return numeric_dataset(X, y)


# -------------------------------------------------------------------- config


def test_model_config_validation():
    with pytest.raises(UsageError):
        ModelConfig(algorithm="svm")
    with pytest.raises(UsageError):
        ModelConfig(iterations=0)
    with pytest.raises(UsageError):
        ModelConfig(max_features=1.5)


# -------------------------------------------------------------------- logreg


def test_logreg_separable_accuracy():
    d = separable()
    m = train(d, ModelConfig("logreg", iterations=1000, lr=0.5))
    s = predict(m, d)
    acc = np.mean((s.scores >= 0.5) == d.labels.astype(bool))
    assert acc >= 0.95


@pytest.mark.parametrize("algo", ["logreg", "forest", "gbt"])
def test_training_is_deterministic(algo):
    d = separable(200, seed=1)
    cfg = ModelConfig(algo, seed=7, n_trees=10, rounds=10, iterations=50)
    a = predict(train(d, cfg), d).scores
    b = predict(train(d, cfg), d).scores
    assert np.array_equal(a, b)


@pytest.mark.parametrize("algo", ["logreg", "forest", "gbt"])
def test_single_class_training_raises(algo):
    X = np.random.default_rng(0).standard_normal((20, 2))
    with pytest.raises(SingleClassError):
        train(numeric_dataset(X, np.ones(20, dtype=int)), ModelConfig(algo))


def test_zero_weights_score_one_half():
    d = separable(20)
    m = train(d, ModelConfig("logreg", iterations=1))
    zero = TrainedModel("logreg", m.encoding, m.config, weights=np.zeros(2), intercept=0.0)
    assert np.all(predict(zero, d).scores == 0.5)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((30, 4))
    y = (rng.random(30) < 0.5).astype(float)
    w, b, l2 = rng.standard_normal(4), 0.3, 0.01
    _, gw, gb = loss_and_grad(w, b, X, y, l2)
    h = 1e-6
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        num = (loss_and_grad(w + e, b, X, y, l2)[0] - loss_and_grad(w - e, b, X, y, l2)[0]) / (2 * h)
        assert num == pytest.approx(gw[j], rel=1e-5, abs=1e-8)
    num_b = (loss_and_grad(w, b + h, X, y, l2)[0] - loss_and_grad(w, b - h, X, y, l2)[0]) / (2 * h)
    assert num_b == pytest.approx(gb, rel=1e-5, abs=1e-8)


# ------------------------------------------------------------------ encoding


def test_encoding_imputes_standardizes_and_one_hots():
    d = numeric_dataset(np.array([[1.0], [np.nan], [3.0]]), [0, 1, 1], cats=["a", None, "b"])
    enc = Encoding.fit(d)
    assert enc.columns == ["f1", "g=<missing>", "g=a", "g=b"]
    X = enc.transform(d)
    assert X[1, 0] == pytest.approx(0.0)
    assert X[:, 0].mean() == pytest.approx(0.0)
    assert X[1, 1:].tolist() == [1.0, 0.0, 0.0]


def test_encoding_unseen_category_is_all_zero(caplog):
    d = numeric_dataset(np.array([[1.0], [2.0]]), [0, 1], cats=["a", "b"])
    enc = Encoding.fit(d)
    other = numeric_dataset(np.array([[1.0]]), [1], cats=["c"])
    X = enc.transform(other)
    assert X[0, 1:].tolist() == [0.0, 0.0]
    assert "unseen" in caplog.text


def test_encoding_missing_training_column_raises():
    d = numeric_dataset(np.array([[1.0, 2.0], [2.0, 1.0]]), [0, 1])
    enc = Encoding.fit(d)
    with pytest.raises(SchemaError):
        enc.transform(ablate(d, ["f2"]))


def test_ablated_model_never_sees_dropped_column(small_synth):
    d = ablate(small_synth, ["group"])
    m = train(d, ModelConfig("logreg", iterations=20))
    assert not any(c.startswith("group") for c in m.encoding.columns)
    # the full dataset scores identically: the extra column is ignored
    assert np.array_equal(predict(m, d).scores, predict(m, small_synth).scores)


# ---------------------------------------------------------------------- trees


def test_binner_cuts_between_distinct_values():
    b = Binner(np.array([[1.0], [2.0], [2.0], [4.0]]))
    assert list(b.edges[0]) == [1.5, 3.0]


def test_forest_learns_threshold():
    X = np.linspace(-1, 1, 200)[:, None]
    y = (X[:, 0] > 0.1).astype(float)
    trees = fit_forest(X, y, n_trees=5, max_depth=3, min_leaf=1, max_features=1, seed=0)
    p = np.mean([t.predict(X) for t in trees], axis=0)
    assert np.mean((p >= 0.5) == y.astype(bool)) > 0.97


@pytest.mark.parametrize("algo", ["forest", "gbt"])
def test_tree_models_rank_well(algo):
    d = separable(600, seed=4)
    tr, te = split(d, 0.3, seed=0)
    s = predict(train(tr, ModelConfig(algo, n_trees=30, rounds=50)), te)
    assert roc_and_auc(s)[1] > 0.9
    assert np.all((s.scores >= 0) & (s.scores <= 1))


@pytest.mark.parametrize("algo", ["logreg", "forest", "gbt"])
def test_save_load_roundtrip(tmp_path, algo, small_synth):
    m = train(small_synth, ModelConfig(algo, n_trees=5, rounds=5, iterations=20))
    p = tmp_path / "m.json"
    save_model(m, p)
    back = load_model(p)
    assert np.array_equal(predict(back, small_synth).scores, predict(m, small_synth).scores)


# ----------------------------------------------------------------- importance


def test_importance_prefers_informative_feature():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((500, 2))
    y = (X[:, 0] > 0).astype(int)
    m = train(numeric_dataset(X, y), ModelConfig("gbt", rounds=30))
    r = importance(m)
    assert r.names[0] == "f1"
    assert r.as_dict()["f1"] > r.as_dict()["f2"]
    assert sum(v for _, v in r.items) == pytest.approx(1.0)


def test_importance_single_feature_is_one():
    X = np.linspace(0, 1, 100)[:, None]
    m = train(numeric_dataset(X, (X[:, 0] > 0.5).astype(int)), ModelConfig("gbt", rounds=5))
    assert importance(m).items == (("f1", 1.0),)


def test_importance_sums_one_hot_columns_into_source(small_synth):
    m = train(small_synth, ModelConfig("gbt", rounds=20))
    raw = raw_importance(m)
    assert set(raw) == set(small_synth.feature_names)
    r = importance(m)
    assert sum(v for _, v in r.items) == pytest.approx(1.0)
    vals = [v for _, v in r.items]
    assert vals == sorted(vals, reverse=True)


def test_importance_gbt_only(small_synth):
    with pytest.raises(UsageError):
        importance(train(small_synth, ModelConfig("logreg", iterations=5)))


# ---------------------------------------------------------------- association


def test_association_perfect_independent_constant():
    n = 400
    g = ["A" if i % 2 else "B" for i in range(n)]
    X = np.column_stack([np.array([1.0 if x == "A" else 0.0 for x in g]), np.ones(n), np.arange(n) % 7])
    d = numeric_dataset(X, np.arange(n) % 2, cats=g)
    assert association(d, "f1", "g").value == pytest.approx(1.0)
    const = association(d, "f2", "g")
    assert const.value == 0.0 and "zero_variance" in const.flags
    assert association(d, "f3", "g").value < 0.1
    assert association(d, "g", "g").value == pytest.approx(1.0)
    assert association(d, "g", "g").kind == "cramers_v"


def test_cramers_v_matches_scipy():
    scipy_stats = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(2)
    for _ in range(20):
        a = rng.integers(0, 3, 300)
        b = (a + rng.integers(0, 2, 300)) % 4
        table = np.zeros((3, 4))
        np.add.at(table, (a, b), 1)
        table = table[:, table.sum(axis=0) > 0]
        chi2 = scipy_stats.chi2_contingency(table, correction=False)[0]
        expect = math.sqrt(chi2 / (300 * (min(table.shape) - 1)))
        assert cramers_v(a, b) == pytest.approx(expect, rel=1e-10)


def _assoc(feature, value):
    return AssociationScore(feature, "g", "correlation_ratio", value)


def test_select_proxies_top_k_then_tau():
    ranking = ImportanceRanking((("a", 0.5), ("b", 0.3), ("c", 0.2)))
    assoc = [_assoc("a", 0.1), _assoc("b", 0.4), _assoc("c", 0.9)]
    assert select_proxies(ranking, assoc, k=2, tau=0.2) == ["b"]
    assert select_proxies(ranking, assoc, k=3, tau=0.2) == ["b", "c"]
    assert select_proxies(ranking, assoc, k=3, tau=0.0) == ["a", "b", "c"]
    assert select_proxies(ranking, assoc[:1], k=3, tau=0.2) == []
    with pytest.raises(UsageError):
        select_proxies(ranking, assoc, k=0)
