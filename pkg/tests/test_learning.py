import numpy as np
import pytest

from abprofile.bench import (
    FeatureMask,
    cross_validated_auc,
    family_mask,
    roc_curve,
    stratified_folds,
)
from abprofile.cart import fit_cart, gini_impurity, predict_votes, route
from abprofile.errors import UsageError
from abprofile.features import Feature, FeatureVocabulary, PiBinning
from abprofile.forest import fit_forest
from abprofile.models import fit_adaboost, fit_svm, train_score


def rng(seed=0):
    return np.random.default_rng(seed)


# -- CART --------------------------------------------------------------------------

def test_gini_bounds():
    assert gini_impurity(0, 10) == 0.0
    assert gini_impurity(5, 5) == 0.5


def test_pure_root_is_leaf():
    X = np.ones((8, 3), dtype=np.uint8)
    y = np.ones(8, dtype=np.uint8)
    result = fit_cart(X, y)
    assert result.root.is_leaf
    assert result.root.gini == 0.0
    assert result.importances.sum() == 0.0


def test_perfect_feature_gives_depth_one_tree():
    g = rng(1)
    X = g.integers(0, 2, size=(40, 5)).astype(np.uint8)
    y = X[:, 2].copy()
    result = fit_cart(X, y)
    root = result.root
    assert root.feature == 2
    assert root.left.is_leaf and root.right.is_leaf
    assert root.left.gini == 0.0 and root.right.gini == 0.0
    assert result.importances[2] == 1.0
    assert (np.delete(result.importances, 2) == 0.0).all()


def test_counts_and_gini_decrease_along_tree():
    g = rng(2)
    X = g.integers(0, 2, size=(200, 8)).astype(np.uint8)
    logits = X[:, 0] * 2.0 + X[:, 3] - 1.2
    y = (logits + g.normal(0, 0.7, size=200) > 0).astype(np.uint8)
    result = fit_cart(X, y, min_child=5)
    for node in result.root.walk():
        if node.is_leaf:
            continue
        assert node.left.n + node.right.n == node.n
        assert node.left.n_targeting + node.right.n_targeting == node.n_targeting
        weighted = (node.left.n * node.left.gini + node.right.n * node.right.gini) / node.n
        assert weighted <= node.gini + 1e-12
        assert node.left.n >= 5 and node.right.n >= 5


def test_tie_breaks_to_lowest_feature_index():
    X = np.zeros((20, 4), dtype=np.uint8)
    X[:10, 1] = 1
    X[:10, 3] = 1  # identical columns 1 and 3
    y = np.zeros(20, dtype=np.uint8)
    y[:10] = 1
    result = fit_cart(X, y)
    assert result.root.feature == 1


def test_route_and_votes():
    X = np.array([[1, 0], [0, 1], [1, 1], [0, 0]], dtype=np.uint8)
    y = np.array([1, 0, 1, 0], dtype=np.uint8)
    result = fit_cart(X, y)
    votes = predict_votes(result.root, X)
    assert (votes == y).all()
    leaf = route(result.root, np.array([1, 0], dtype=np.uint8))
    assert leaf.is_leaf


def test_global_stop_mode_halts_growth():
    g = rng(3)
    X = g.integers(0, 2, size=(100, 6)).astype(np.uint8)
    y = (X[:, 0] | (X[:, 1] & X[:, 2])).astype(np.uint8)
    greedy = fit_cart(X, y, min_child=5)
    literal = fit_cart(X, y, min_child=5, growth="global_stop")
    n_small = sum(
        1
        for node in literal.root.walk()
        if not node.is_leaf and min(node.left.n, node.right.n) < 5
    )
    assert n_small <= 1  # at most the halting split created an undersized child
    assert sum(1 for _ in literal.root.walk()) >= 1
    assert sum(1 for _ in greedy.root.walk()) >= 3


# -- forest -------------------------------------------------------------------------

def make_signal_data(n=120, width=10, seed=4):
    g = rng(seed)
    X = g.integers(0, 2, size=(n, width)).astype(np.uint8)
    y = X[:, 5].copy()  # feature 5 encodes the label exactly
    return X, y


def test_forest_importance_finds_signal():
    X, y = make_signal_data()
    forest = fit_forest(X, y, rng(10), n_trees=30)
    assert forest.importances.sum() == pytest.approx(1.0)
    assert np.argmax(forest.importances) == 5
    assert forest.importances[5] > forest.importances.max(initial=0, where=np.arange(10) != 5)


def test_forest_votes_pure_rule():
    X, y = make_signal_data()
    # all features as candidates: every impure node finds the pure rule
    forest = fit_forest(X, y, rng(11), n_trees=25, max_features=10)
    test = np.zeros((2, 10), dtype=np.uint8)
    test[0, 5] = 1
    scores = forest.scores(test)
    assert scores[0] == 1.0
    assert scores[1] == 0.0


def test_forest_deterministic_given_seed():
    X, y = make_signal_data(seed=6)
    a = fit_forest(X, y, rng(42), n_trees=15).importances
    b = fit_forest(X, y, rng(42), n_trees=15).importances
    assert (a == b).all()


def test_forest_rejects_single_class():
    X = np.ones((10, 3), dtype=np.uint8)
    with pytest.raises(UsageError):
        fit_forest(X, np.ones(10, dtype=np.uint8), rng(0))


# -- SVM ---------------------------------------------------------------------------

def separable_toy(n=60, seed=7):
    g = rng(seed)
    X = g.integers(0, 2, size=(n, 6)).astype(np.uint8)
    y = ((X[:, 0] + X[:, 1]) >= 1).astype(np.uint8)
    return X, y


def test_svm_separates_toy_data():
    X, y = separable_toy()
    Xte, yte = separable_toy(seed=8)
    model = fit_svm(X, y)
    margins = model.scores(Xte)
    assert ((margins > 0).astype(np.uint8) == yte).all()


def test_svm_deterministic():
    X, y = separable_toy(seed=9)
    assert (fit_svm(X, y).weights == fit_svm(X, y).weights).all()


def test_svm_single_class_rejected():
    X = np.ones((5, 2), dtype=np.uint8)
    with pytest.raises(UsageError):
        fit_svm(X, np.ones(5, dtype=np.uint8))


# -- AdaBoost -------------------------------------------------------------------------

def test_adaboost_perfect_feature_one_round():
    X, y = make_signal_data(seed=12)
    model = fit_adaboost(X, y)
    assert len(model.stumps) == 1
    assert model.stumps[0].feature == 5
    assert model.training_error(X, y) == 0.0


def test_adaboost_improves_over_rounds():
    g = rng(13)
    X = g.integers(0, 2, size=(200, 12)).astype(np.uint8)
    y = ((X[:, 0] + X[:, 1] + X[:, 2]) >= 2).astype(np.uint8)
    model = fit_adaboost(X, y)
    assert len(model.stumps) > 1
    assert model.training_error(X, y) <= 0.15


# -- ROC / AUC --------------------------------------------------------------------------

def pairwise_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    u = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                u += 1.0
            elif p == q:
                u += 0.5
    return u / (len(pos) * len(neg))


def test_roc_trivial_cases():
    assert roc_curve([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]).auc == 1.0
    assert roc_curve([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0]).auc == 0.0
    assert roc_curve([0.5, 0.5, 0.5, 0.5], [1, 1, 0, 0]).auc == 0.5


def test_roc_monotone_endpoints():
    g = rng(14)
    scores = g.normal(size=50)
    labels = g.integers(0, 2, size=50)
    labels[0] = 1
    labels[1] = 0
    curve = roc_curve(scores, labels)
    assert curve.points[0] == (0.0, 0.0)
    assert curve.points[-1] == (1.0, 1.0)
    xs = [p[0] for p in curve.points]
    ys = [p[1] for p in curve.points]
    assert xs == sorted(xs) and ys == sorted(ys)


def test_auc_equals_pairwise_count():
    g = rng(15)
    for _ in range(10):
        n = 200
        scores = np.round(g.normal(size=n), 1)  # rounding forces ties
        labels = g.integers(0, 2, size=n)
        if labels.sum() in (0, n):
            continue
        got = roc_curve(scores, labels).auc
        want = pairwise_auc(scores.tolist(), labels.tolist())
        assert got == pytest.approx(want, abs=1e-9)


def test_roc_single_class_rejected():
    with pytest.raises(UsageError):
        roc_curve([0.5, 0.6], [1, 1])


# -- folds / masks / CV -------------------------------------------------------------------

def test_stratified_fold_balance():
    labels = np.array([1] * 23 + [0] * 57)
    folds = stratified_folds(labels, 10, rng(16))
    for cls in (0, 1):
        sizes = [int(((folds == f) & (labels == cls)).sum()) for f in range(10)]
        assert max(sizes) - min(sizes) <= 1


def make_vocab():
    features = (
        Feature("germ_hv", "IGHV3-23"),
        Feature("germ_hv", "IGHV1-69"),
        Feature("canon_h2", "6"),
        Feature("pi", "0-7"),
        Feature("motif", "1_AR"),
    )
    return FeatureVocabulary(
        features=features, pi_binning=PiBinning(edges=(0.0, 7.0, 14.0)), motifs=()
    )


def test_family_mask_selects_segments():
    vocab = make_vocab()
    assert family_mask("germline").column_indices(vocab).tolist() == [0, 1]
    assert family_mask("pi").column_indices(vocab).tolist() == [3]
    full = family_mask("all", exclude=[("germ_hv", "IGHV3-23")])
    assert full.column_indices(vocab).tolist() == [1, 2, 3, 4]


def test_mask_must_keep_features():
    vocab = make_vocab()
    mask = FeatureMask(name="none", segments=("germ_lj",))
    with pytest.raises(UsageError):
        mask.column_indices(vocab)


def test_masked_columns_do_not_influence_deterministic_models():

    g = rng(17)
    X = g.integers(0, 2, size=(80, 5)).astype(np.uint8)
    y = ((X[:, 0] + X[:, 2]) >= 1).astype(np.uint8)
    Xte = g.integers(0, 2, size=(20, 5)).astype(np.uint8)
    keep = np.array([0, 2, 4])
    zeroed = X.copy()
    zeroed[:, [1, 3]] = 0
    zte = Xte.copy()
    zte[:, [1, 3]] = 0
    for model in ("svm", "adaboost"):
        removed_scores = train_score(model, X[:, keep], y, Xte[:, keep])
        zeroed_scores = train_score(model, zeroed, y, zte)
        assert np.allclose(removed_scores, zeroed_scores)


def cv_iteration_data(n, width, label_fn, seed, k=3):
    g = rng(seed)
    for _ in range(k):
        X = g.integers(0, 2, size=(n, width)).astype(np.uint8)
        y = label_fn(X, g)
        yield X, y


def test_cv_auc_perfect_feature():
    vocab = make_vocab()
    data = cv_iteration_data(60, 5, lambda X, g: X[:, 0].copy(), seed=18)
    cell = cross_validated_auc(data, "svm", family_mask("all"), vocab, seed=1)
    assert cell.mean_auc > 0.97


def test_cv_auc_random_labels_near_half():
    vocab = make_vocab()
    data = cv_iteration_data(
        400, 5, lambda X, g: g.integers(0, 2, size=len(X)).astype(np.uint8), seed=19, k=2
    )
    cell = cross_validated_auc(data, "adaboost", family_mask("all"), vocab, seed=2)
    assert 0.42 <= cell.mean_auc <= 0.58


def test_cv_reduces_folds_for_small_class(caplog):
    vocab = make_vocab()

    def labels(X, g):
        y = np.zeros(len(X), dtype=np.uint8)
        y[:4] = 1  # only four positives: folds must drop to 4
        return y

    data = cv_iteration_data(40, 5, labels, seed=20, k=1)
    import logging

    with caplog.at_level(logging.WARNING):
        cell = cross_validated_auc(data, "svm", family_mask("all"), vocab, seed=3)
    assert "reducing folds" in caplog.text
    assert 0.0 <= cell.mean_auc <= 1.0
