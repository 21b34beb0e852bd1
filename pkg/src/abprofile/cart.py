"""Binary-feature CART induction with Gini impurity.

One implementation serves three consumers: the random forest (feature
subsampling, grown to purity), the importance ranking, and the design
recommendation tree (minimum-child-size guard, optional literal global
stop). Splits test presence of a single feature; the true branch is the
feature-present side. Equal-gain ties resolve to the lowest vocabulary
index.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError


def gini_impurity(n_pos: float, n_neg: float) -> float:
    n = n_pos + n_neg
    if n == 0:
        return 0.0
    p = n_pos / n
    return 2.0 * p * (1.0 - p)


@dataclass
class TreeNode:
    n_targeting: int
    n_reference: int
    gini: float
    depth: int
    feature: int | None = None  # split feature; None marks a leaf
    left: "TreeNode | None" = None  # feature present (true branch)
    right: "TreeNode | None" = None  # feature absent (false branch)
    # design annotations, populated by designtree.annotate_tree
    se: float | None = None
    er: float | None = None
    color: str | None = None

    @property
    def n(self) -> int:
        return self.n_targeting + self.n_reference

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def walk(self):
        yield self
        if not self.is_leaf:
            yield from self.left.walk()
            yield from self.right.walk()


@dataclass
class CartResult:
    root: TreeNode
    importances: np.ndarray  # gini importance, sums to 1 when any split occurred
    n_features: int = field(default=0)


_GAIN_EPS = 1e-12


def _best_split(X, y, idx, candidates, min_child):
    """(feature, gain, present_mask) minimizing weighted child Gini."""
    n = len(idx)
    sub = X[idx][:, candidates].astype(np.float64)
    ysub = y[idx].astype(np.float64)
    pos = float(ysub.sum())
    node_gini = gini_impurity(pos, n - pos)
    n1 = sub.sum(axis=0)
    p1 = (sub * ysub[:, None]).sum(axis=0)
    n0 = n - n1
    p0 = pos - p1
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(n1 > 0, p1 / np.where(n1 > 0, n1, 1), 0.0)
        f0 = np.where(n0 > 0, p0 / np.where(n0 > 0, n0, 1), 0.0)
        g1 = 2.0 * f1 * (1.0 - f1)
        g0 = 2.0 * f0 * (1.0 - f0)
        weighted = (n1 * g1 + n0 * g0) / n
    gains = node_gini - weighted
    valid = (n1 >= min_child) & (n0 >= min_child)
    gains = np.where(valid, gains, -np.inf)
    best_local = int(np.argmax(gains))  # argmax takes the first max: lowest index wins ties
    if gains[best_local] <= _GAIN_EPS:
        return None
    feature = int(candidates[best_local])
    present = X[idx, feature] == 1
    return feature, float(gains[best_local]), present


def fit_cart(
    X: np.ndarray,
    y: np.ndarray,
    min_child: int = 1,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
    growth: str = "greedy",
) -> CartResult:
    """Grow a CART on binary features.

    greedy growth recurses until nodes are pure, gain vanishes, or a
    child would fall under ``min_child``. global_stop growth is the
    literal alternative stop rule: nodes split breadth-first with no
    size guard, and all growth halts as soon as any created leaf falls
    under ``min_child``.
    """
    if growth not in ("greedy", "global_stop"):
        raise UsageError(f"unknown growth mode {growth!r}")
    X = np.ascontiguousarray(X, dtype=np.uint8)
    y = np.asarray(y, dtype=np.uint8)
    n, width = X.shape
    if len(y) != n:
        raise UsageError("X and y must have matching rows")
    importances = np.zeros(width, dtype=np.float64)
    if max_features is not None and rng is None:
        raise UsageError("feature subsampling needs an rng")

    def make_node(idx, depth):
        pos = int(y[idx].sum())
        return TreeNode(
            n_targeting=pos,
            n_reference=len(idx) - pos,
            gini=gini_impurity(pos, len(idx) - pos),
            depth=depth,
        )

    def candidates_for():
        if max_features is None or max_features >= width:
            return np.arange(width)
        return np.sort(rng.choice(width, size=max_features, replace=False))

    def try_split(node, idx, guard):
        if node.gini == 0.0:
            return None
        return _best_split(X, y, idx, candidates_for(), guard)

    root_idx = np.arange(n)
    root = make_node(root_idx, 0)

    if growth == "greedy":

        def grow(node, idx):
            found = try_split(node, idx, min_child)
            if found is None:
                return
            feature, gain, present = found
            importances[feature] += (len(idx) / n) * gain
            node.feature = feature
            node.left = make_node(idx[present], node.depth + 1)
            node.right = make_node(idx[~present], node.depth + 1)
            grow(node.left, idx[present])
            grow(node.right, idx[~present])

        grow(root, root_idx)
    else:
        queue = deque([(root, root_idx)])
        halted = False
        while queue and not halted:
            node, idx = queue.popleft()
            found = try_split(node, idx, 1)
            if found is None:
                continue
            feature, gain, present = found
            importances[feature] += (len(idx) / n) * gain
            node.feature = feature
            node.left = make_node(idx[present], node.depth + 1)
            node.right = make_node(idx[~present], node.depth + 1)
            queue.append((node.left, idx[present]))
            queue.append((node.right, idx[~present]))
            if min(node.left.n, node.right.n) < min_child:
                halted = True

    total = importances.sum()
    if total > 0:
        importances /= total
    return CartResult(root=root, importances=importances, n_features=width)


def route(root: TreeNode, x: np.ndarray) -> TreeNode:
    """Follow one fingerprint to its leaf."""
    node = root
    while not node.is_leaf:
        node = node.left if x[node.feature] == 1 else node.right
    return node


def predict_votes(root: TreeNode, X: np.ndarray) -> np.ndarray:
    """Majority class per row (1 = targeting; ties fall to reference)."""
    out = np.zeros(len(X), dtype=np.uint8)
    for i, x in enumerate(X):
        leaf = route(root, x)
        out[i] = 1 if leaf.n_targeting > leaf.n_reference else 0
    return out
