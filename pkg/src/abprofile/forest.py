"""Random forest over binary fingerprints.

Bootstrap-sampled trees grown to purity with sqrt-width feature
subsampling at every split. Feature importance is the tree-normalized
Gini importance averaged across trees; prediction scores are the
fraction of trees voting for the targeting class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cart import CartResult, fit_cart, predict_votes
from .errors import UsageError

DEFAULT_TREES = 100


@dataclass
class RandomForest:
    trees: list
    importances: np.ndarray

    def scores(self, X: np.ndarray) -> np.ndarray:
        """Positive-class vote fraction per row."""
        votes = np.zeros(len(X), dtype=np.float64)
        for result in self.trees:
            votes += predict_votes(result.root, X)
        return votes / len(self.trees)


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    n_trees: int = DEFAULT_TREES,
    max_features: int | None = None,
) -> RandomForest:
    y = np.asarray(y, dtype=np.uint8)
    if len(set(y.tolist())) < 2:
        raise UsageError("forest training needs both classes")
    n, width = X.shape
    if max_features is None:
        max_features = max(1, math.ceil(math.sqrt(width)))
    # per-tree seeds drawn up front: tree fitting is order-independent
    tree_seeds = rng.integers(0, 2**63 - 1, size=n_trees)
    trees: list[CartResult] = []
    importance_sum = np.zeros(width, dtype=np.float64)
    contributing = 0
    for seed in tree_seeds:
        tree_rng = np.random.default_rng(int(seed))
        boot = tree_rng.integers(0, n, size=n)
        result = fit_cart(
            X[boot], y[boot], min_child=1, max_features=max_features, rng=tree_rng
        )
        trees.append(result)
        if result.importances.sum() > 0:
            importance_sum += result.importances
            contributing += 1
    importances = importance_sum / contributing if contributing else importance_sum
    total = importances.sum()
    if total > 0:
        importances = importances / total
    return RandomForest(trees=trees, importances=importances)
