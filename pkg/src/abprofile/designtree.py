"""Design recommendation trees.

A Gini CART is fitted on fingerprints with a leaf-size guard of 5% of
the root count; every node is annotated with split efficiency (share of
the root's targeting sequences reaching the node), error rate (reference
share within the node) and a class color. Recommendations are the
Pareto-optimal blue nodes over (higher split efficiency, lower error
rate); each one is the include/exclude feature path from the root.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .cart import TreeNode, fit_cart
from .errors import UsageError

BLUE = "blue"
ORANGE = "orange"
DEFAULT_MIN_LEAF_FRACTION = 0.05
DEFAULT_MIN_SE = 0.05


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    min_leaf_fraction: float = DEFAULT_MIN_LEAF_FRACTION,
    stop: str = "guard",
) -> TreeNode:
    """CART with the leaf-size stop rule.

    ``guard`` rejects any split that would produce a child smaller than
    ceil(min_leaf_fraction x root count); ``global`` is the literal
    alternative reading that halts all growth once any created leaf
    falls below the floor.
    """
    if stop not in ("guard", "global"):
        raise UsageError(f"unknown stop rule {stop!r}")
    n = len(X)
    if n == 0:
        raise UsageError("cannot fit a tree on no rows")
    min_child = max(1, math.ceil(min_leaf_fraction * n))
    growth = "greedy" if stop == "guard" else "global_stop"
    result = fit_cart(X, y, min_child=min_child, growth=growth)
    return annotate_tree(result.root)


def annotate_tree(root: TreeNode) -> TreeNode:
    """Fill se/er/color on every node (in place; returns the root)."""
    root_targeting = root.n_targeting
    for node in root.walk():
        node.se = node.n_targeting / root_targeting if root_targeting else 0.0
        node.er = node.n_reference / node.n if node.n else 0.0
        node.color = BLUE if node.n_targeting > node.n_reference else ORANGE
    return root


@dataclass(frozen=True)
class Recommendation:
    path: tuple  # ((feature index, include?), ...) from the root
    se: float
    er: float
    depth: int
    n_targeting: int
    n_reference: int

    def tokens(self, vocab) -> tuple:
        return tuple(
            ("+" if include else "-") + vocab.features[f].column for f, include in self.path
        )


def _collect_paths(root: TreeNode):
    """Yield (node, path) pairs; path steps are (feature, include?)."""
    stack = [(root, ())]
    while stack:
        node, path = stack.pop()
        yield node, path
        if not node.is_leaf:
            stack.append((node.right, path + ((node.feature, False),)))
            stack.append((node.left, path + ((node.feature, True),)))


def recommend(root: TreeNode, min_se: float = DEFAULT_MIN_SE) -> list:
    """Pareto frontier of blue nodes with se >= min_se, ordered by
    descending split efficiency (ties: lower error rate, then shallower)."""
    if root.se is None:
        raise UsageError("tree must be annotated before recommending")
    candidates = []
    for node, path in _collect_paths(root):
        if node.color == BLUE and node.se >= min_se:
            candidates.append(
                Recommendation(
                    path=path,
                    se=node.se,
                    er=node.er,
                    depth=node.depth,
                    n_targeting=node.n_targeting,
                    n_reference=node.n_reference,
                )
            )
    if not candidates:
        return []
    frontier = []
    for cand in candidates:
        dominated = any(
            (other.se >= cand.se and other.er < cand.er)
            or (other.se > cand.se and other.er <= cand.er)
            for other in candidates
        )
        if not dominated:
            frontier.append(cand)
    frontier.sort(key=lambda r: (-r.se, r.er, r.depth))
    return frontier


def apply_path(X: np.ndarray, path) -> np.ndarray:
    """Row mask selecting fingerprints satisfying a recommendation path."""
    mask = np.ones(len(X), dtype=bool)
    for feature, include in path:
        mask &= (X[:, feature] == 1) if include else (X[:, feature] == 0)
    return mask


# -- export ---------------------------------------------------------------------

def _node_label(node: TreeNode, vocab) -> str:
    lines = []
    if not node.is_leaf:
        lines.append(vocab.features[node.feature].column)
    lines.append(f"gini = {node.gini:.3f}")
    lines.append(f"samples = {node.n}")
    lines.append(f"value = [{node.n_reference}, {node.n_targeting}]")
    lines.append(f"class = {'targeting' if node.color == BLUE else 'reference'}")
    lines.append(f"se = {node.se:.4f}")
    lines.append(f"er = {node.er:.4f}")
    return "\\n".join(lines)


def export_dot(root: TreeNode, vocab) -> str:
    """Graphviz rendering; the true (feature present) branch is drawn left."""
    fills = {BLUE: "#399de5", ORANGE: "#e58139"}
    out = [
        "digraph design_tree {",
        'node [shape=box, style="filled", fontname="helvetica"];',
        "ordering=out;",
    ]
    ids = {}
    for i, node in enumerate(root.walk()):
        ids[id(node)] = i
        out.append(f'{i} [label="{_node_label(node, vocab)}", fillcolor="{fills[node.color]}"];')
    for node in root.walk():
        if node.is_leaf:
            continue
        src = ids[id(node)]
        out.append(f'{src} -> {ids[id(node.left)]} [label="true"];')
        out.append(f'{src} -> {ids[id(node.right)]} [label="false"];')
    out.append("}")
    return "\n".join(out) + "\n"


def tree_to_dict(node: TreeNode, vocab) -> dict:
    out = {
        "feature": None if node.is_leaf else vocab.features[node.feature].column,
        "gini": node.gini,
        "samples": node.n,
        "value": [node.n_reference, node.n_targeting],
        "class": "targeting" if node.color == BLUE else "reference",
        "se": node.se,
        "er": node.er,
        "depth": node.depth,
    }
    if not node.is_leaf:
        out["true_branch"] = tree_to_dict(node.left, vocab)
        out["false_branch"] = tree_to_dict(node.right, vocab)
    return out


def dict_to_tree(payload: dict, vocab) -> TreeNode:
    column_index = {f.column: i for i, f in enumerate(vocab.features)}
    n_reference, n_targeting = payload["value"]
    node = TreeNode(
        n_targeting=n_targeting,
        n_reference=n_reference,
        gini=payload["gini"],
        depth=payload["depth"],
        feature=None if payload["feature"] is None else column_index[payload["feature"]],
        se=payload["se"],
        er=payload["er"],
        color=BLUE if payload["class"] == "targeting" else ORANGE,
    )
    if payload["feature"] is not None:
        node.left = dict_to_tree(payload["true_branch"], vocab)
        node.right = dict_to_tree(payload["false_branch"], vocab)
    return node


def export_tree(root: TreeNode, vocab, fmt: str = "json") -> str:
    if fmt == "dot":
        return export_dot(root, vocab)
    if fmt == "json":
        return json.dumps(tree_to_dict(root, vocab), indent=2) + "\n"
    raise UsageError(f"unknown tree export format {fmt!r}")


def write_recommendations_csv(path, recommendations, vocab) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "se", "er", "depth", "n_targeting", "n_reference"])
        for rec in recommendations:
            writer.writerow(
                [
                    " ".join(rec.tokens(vocab)),
                    f"{rec.se:.6f}",
                    f"{rec.er:.6f}",
                    rec.depth,
                    rec.n_targeting,
                    rec.n_reference,
                ]
            )
