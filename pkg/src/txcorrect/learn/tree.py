"""CART-style decision tree grown greedily on Gini impurity.

At every node a seeded RNG samples a feature subset; the best (feature,
threshold) minimizes the weighted Gini impurity of the two children, ties
broken by lowest feature index then lowest threshold so growth is fully
deterministic. Thresholds are midpoints between consecutive distinct values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import TxcError


class LearnError(TxcError):
    module = "learn"


class EmptyData(LearnError):
    pass


@dataclass(frozen=True)
class Leaf:
    counts: np.ndarray  # per-class sample counts, never all-zero

    @property
    def fractions(self) -> np.ndarray:
        return self.counts / self.counts.sum()


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: "Leaf | Split"
    right: "Leaf | Split"


TreeNode = Leaf | Split


def _gini_curves(values: np.ndarray, y: np.ndarray, n_classes: int, min_leaf: int):
    """Weighted Gini for every valid cut of one feature, ascending by value.

    Returns (costs, thresholds) or None when no valid cut exists.
    """
    n = len(values)
    order = np.argsort(values, kind="stable")
    v = values[order]
    labels = y[order]

    onehot = np.zeros((n, n_classes), dtype=np.float64)
    onehot[np.arange(n), labels] = 1.0
    left_counts = np.cumsum(onehot, axis=0)[:-1]          # counts left of cut i
    total = left_counts[-1] + onehot[-1] if n > 1 else onehot.sum(axis=0)
    right_counts = total - left_counts

    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    distinct = v[:-1] < v[1:]
    valid = distinct & (nl >= min_leaf) & (nr >= min_leaf)
    if not valid.any():
        return None

    gini_l = 1.0 - np.sum((left_counts / nl[:, None]) ** 2, axis=1)
    gini_r = 1.0 - np.sum((right_counts / nr[:, None]) ** 2, axis=1)
    costs = (nl * gini_l + nr * gini_r) / n

    thresholds = v[:-1] + (v[1:] - v[:-1]) / 2.0
    # Guard against float collapse onto the upper value, which would misroute it.
    collapse = thresholds >= v[1:]
    thresholds[collapse] = v[:-1][collapse]
    return costs, thresholds, valid


def _best_split_among(features, X, y, n_classes, min_leaf):
    best = None  # (cost, feature, threshold); ties -> lowest feature, then threshold
    for feature in features:
        curves = _gini_curves(X[:, feature], y, n_classes, min_leaf)
        if curves is None:
            continue
        costs, thresholds, valid = curves
        masked = np.where(valid, costs, np.inf)
        idx = int(np.argmin(masked))  # argmin takes the first = lowest threshold
        if not np.isfinite(masked[idx]):
            continue
        candidate = (float(masked[idx]), int(feature), float(thresholds[idx]))
        if best is None or candidate[0] < best[0]:
            best = candidate
    return best


def _grow(X: np.ndarray, y: np.ndarray, n_classes: int, depth: int, max_depth: int,
          min_leaf: int, subset_size: int, rng: np.random.Generator) -> TreeNode:
    counts = np.bincount(y, minlength=n_classes).astype(np.float64)
    if depth >= max_depth or len(y) < 2 * min_leaf or np.count_nonzero(counts) <= 1:
        return Leaf(counts)

    d = X.shape[1]
    order = rng.permutation(d)
    primary = np.sort(order[:min(subset_size, d)])
    best = _best_split_among(primary, X, y, n_classes, min_leaf)
    if best is None:
        # The sample was degenerate (constant columns); growth only stops at
        # depth/min_leaf/purity, so keep drawing features until one cuts.
        for feature in order[min(subset_size, d):]:
            best = _best_split_among((int(feature),), X, y, n_classes, min_leaf)
            if best is not None:
                break
    if best is None:
        return Leaf(counts)

    _, feature, threshold = best
    mask = X[:, feature] <= threshold
    left = _grow(X[mask], y[mask], n_classes, depth + 1, max_depth, min_leaf,
                 subset_size, rng)
    right = _grow(X[~mask], y[~mask], n_classes, depth + 1, max_depth, min_leaf,
                  subset_size, rng)
    return Split(feature, threshold, left, right)


def train_tree(X: np.ndarray, y: np.ndarray, n_classes: int | None = None,
               max_depth: int = 16, min_leaf: int = 2,
               feature_subset_size: int | None = None,
               seed: int | np.random.Generator = 0) -> TreeNode:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if len(y) == 0:
        raise EmptyData("cannot grow a tree on zero rows")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    if feature_subset_size is None:
        feature_subset_size = X.shape[1]
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return _grow(X, y, n_classes, 0, max_depth, max(1, min_leaf),
                 max(1, feature_subset_size), rng)


def tree_predict_fractions(node: TreeNode, X: np.ndarray) -> np.ndarray:
    """Leaf class fractions for each row; (n, n_classes)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    first = node
    while isinstance(first, Split):
        first = first.left
    out = np.zeros((X.shape[0], len(first.counts)), dtype=np.float64)

    def descend(tree: TreeNode, indices: np.ndarray):
        if isinstance(tree, Leaf):
            out[indices] = tree.fractions
            return
        mask = X[indices, tree.feature] <= tree.threshold
        if mask.any():
            descend(tree.left, indices[mask])
        if (~mask).any():
            descend(tree.right, indices[~mask])

    descend(node, np.arange(X.shape[0]))
    return out


def tree_to_dict(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {"counts": [float(c) for c in node.counts]}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "left": tree_to_dict(node.left),
        "right": tree_to_dict(node.right),
    }


def tree_from_dict(raw: dict) -> TreeNode:
    if "counts" in raw:
        return Leaf(np.array(raw["counts"], dtype=np.float64))
    return Split(
        feature=int(raw["feature"]),
        threshold=float(raw["threshold"]),
        left=tree_from_dict(raw["left"]),
        right=tree_from_dict(raw["right"]),
    )


def tree_depth(node: TreeNode) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(tree_depth(node.left), tree_depth(node.right))
