import json
import math

import numpy as np
import pytest

from abprofile.cart import gini_impurity
from abprofile.designtree import (
    BLUE,
    ORANGE,
    apply_path,
    dict_to_tree,
    export_dot,
    export_tree,
    fit_tree,
    recommend,
    tree_to_dict,
    write_recommendations_csv,
)
from abprofile.features import Feature, FeatureVocabulary, PiBinning


def vocab_width(w):
    return FeatureVocabulary(
        features=tuple(Feature("motif", f"{i}_AA") for i in range(w)),
        pi_binning=PiBinning(edges=(0.0, 14.0)),
        motifs=(),
    )


def test_pure_root_is_annotated_leaf():
    X = np.ones((20, 3), dtype=np.uint8)
    y = np.ones(20, dtype=np.uint8)
    root = fit_tree(X, y)
    assert root.is_leaf
    assert root.gini == 0.0
    assert root.se == 1.0
    assert root.er == 0.0
    assert root.color == BLUE


def test_perfect_feature_depth_one():
    rng = np.random.default_rng(0)
    X = rng.integers(0, 2, size=(100, 4)).astype(np.uint8)
    y = X[:, 1].copy()
    root = fit_tree(X, y)
    assert root.feature == 1
    assert root.left.gini == 0.0 and root.right.gini == 0.0
    assert root.left.color == BLUE and root.right.color == ORANGE
    assert root.left.se == 1.0
    assert root.right.er == 1.0


def test_leaf_size_guard():
    rng = np.random.default_rng(1)
    X = rng.integers(0, 2, size=(100, 8)).astype(np.uint8)
    y = (X[:, 0] | X[:, 3]).astype(np.uint8)
    root = fit_tree(X, y, min_leaf_fraction=0.05)
    floor = math.ceil(0.05 * 100)
    for node in root.walk():
        if not node.is_leaf:
            assert node.left.n >= floor and node.right.n >= floor


def test_tie_color_is_orange():
    X = np.zeros((10, 2), dtype=np.uint8)
    y = np.array([1] * 5 + [0] * 5, dtype=np.uint8)
    root = fit_tree(X, y)
    assert root.n_targeting == root.n_reference
    assert root.color == ORANGE


def test_se_monotone_and_counts_consistent_random():
    rng = np.random.default_rng(2)
    for trial in range(25):
        n = int(rng.integers(40, 400))
        w = int(rng.integers(3, 16))
        X = rng.integers(0, 2, size=(n, w)).astype(np.uint8)
        logits = X[:, 0] * 1.5 + X[:, min(2, w - 1)] - 1.0 + rng.normal(0, 1, n)
        y = (logits > 0).astype(np.uint8)
        if y.sum() in (0, n):
            continue
        root = fit_tree(X, y)
        floor = math.ceil(0.05 * n)
        for node in root.walk():
            if node.is_leaf:
                continue
            assert node.left.se <= node.se + 1e-12
            assert node.right.se <= node.se + 1e-12
            assert node.left.n + node.right.n == node.n
            assert node.left.n >= floor and node.right.n >= floor
            weighted = (node.left.n * node.left.gini + node.right.n * node.right.gini) / node.n
            assert weighted <= node.gini + 1e-12
        for rec in recommend(root, min_se=0.05):
            mask = apply_path(X, rec.path)
            assert int((y[mask] == 1).sum()) == rec.n_targeting
            assert int((y[mask] == 0).sum()) == rec.n_reference


def test_recommendations_pareto():
    rng = np.random.default_rng(3)
    X = rng.integers(0, 2, size=(300, 10)).astype(np.uint8)
    y = ((X[:, 0] + X[:, 1] * X[:, 2]) >= 1).astype(np.uint8)
    root = fit_tree(X, y)
    recs = recommend(root)
    assert recs, "expected at least one blue node"
    ses = [r.se for r in recs]
    assert ses == sorted(ses, reverse=True)
    for a in recs:
        for b in recs:
            if a is b:
                continue
            assert not (b.se >= a.se and b.er < a.er)
            assert not (b.se > a.se and b.er <= a.er)


def test_perfect_tree_single_recommendation():
    X = np.zeros((40, 2), dtype=np.uint8)
    X[:20, 0] = 1
    y = np.array([1] * 20 + [0] * 20, dtype=np.uint8)
    root = fit_tree(X, y)
    recs = recommend(root)
    assert len(recs) == 1
    assert recs[0].se == 1.0 and recs[0].er == 0.0
    assert recs[0].path == ((0, True),)


def test_no_blue_nodes_empty_list():
    X = np.zeros((10, 2), dtype=np.uint8)
    y = np.zeros(10, dtype=np.uint8)
    root = fit_tree(X, y)
    assert recommend(root) == []


def test_global_stop_flag():
    rng = np.random.default_rng(4)
    X = rng.integers(0, 2, size=(200, 6)).astype(np.uint8)
    y = (X[:, 0] | (X[:, 1] & X[:, 4])).astype(np.uint8)
    root = fit_tree(X, y, stop="global")
    assert root.se == 1.0
    small_children = [
        min(n.left.n, n.right.n)
        for n in root.walk()
        if not n.is_leaf and min(n.left.n, n.right.n) < math.ceil(0.05 * 200)
    ]
    assert len(small_children) <= 1


# -- export --------------------------------------------------------------------------

def fitted_example():
    rng = np.random.default_rng(5)
    X = rng.integers(0, 2, size=(120, 5)).astype(np.uint8)
    y = ((X[:, 0] + X[:, 2]) >= 1).astype(np.uint8)
    return X, y, fit_tree(X, y)


def test_dot_node_count():
    X, y, root = fitted_example()
    vocab = vocab_width(5)
    dot = export_dot(root, vocab)
    n_nodes = sum(1 for _ in root.walk())
    assert dot.count("fillcolor") == n_nodes
    assert dot.count("->") == n_nodes - 1
    assert "ordering=out" in dot


def test_single_leaf_dot():
    X = np.ones((5, 2), dtype=np.uint8)
    y = np.ones(5, dtype=np.uint8)
    root = fit_tree(X, y)
    dot = export_dot(root, vocab_width(2))
    assert "->" not in dot
    assert dot.count("fillcolor") == 1


def test_json_roundtrip():
    X, y, root = fitted_example()
    vocab = vocab_width(5)
    payload = json.loads(export_tree(root, vocab, "json"))
    rebuilt = dict_to_tree(payload, vocab)
    for a, b in zip(root.walk(), rebuilt.walk()):
        assert a.n_targeting == b.n_targeting
        assert a.n_reference == b.n_reference
        assert a.feature == b.feature
        assert a.se == pytest.approx(b.se)
        assert a.gini == pytest.approx(b.gini)


def test_recommendations_csv(tmp_path):
    X, y, root = fitted_example()
    vocab = vocab_width(5)
    recs = recommend(root)
    write_recommendations_csv(tmp_path / "recs.csv", recs, vocab)
    lines = (tmp_path / "recs.csv").read_text().splitlines()
    assert lines[0] == "path,se,er,depth,n_targeting,n_reference"
    assert len(lines) == len(recs) + 1
    # the root (empty path) may appear; deeper paths carry +/- tokens
    deep = [line for line, rec in zip(lines[1:], recs) if rec.depth >= 1]
    assert deep and all(line.split(",")[0].startswith(("+", "-")) for line in deep)
