"""CART classification tree, Gini splits, array-backed nodes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# gains at or below this are treated as "no improvement"; also the tie
# tolerance when comparing candidate impurities
MIN_GAIN = 1e-12


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.sum(p * p))


def weighted_child_gini(left_counts, right_counts) -> float:
    nl, nr = float(np.sum(left_counts)), float(np.sum(right_counts))
    return (nl * gini(left_counts) + nr * gini(right_counts)) / (nl + nr)


def best_split_on_feature(x, y_onehot):
    """Best threshold on one feature by a sorted sweep.

    Returns ``(weighted_gini, threshold)`` or ``None`` when ``x`` is constant.
    On equal impurity the smallest threshold wins.
    """
    order = np.argsort(x, kind="stable")
    xs = x[order]
    left = np.cumsum(y_onehot[order], axis=0)[:-1]
    valid = xs[:-1] < xs[1:]
    if not valid.any():
        return None
    n = len(xs)
    total = left[-1] + y_onehot[order[-1]]
    right = total - left
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    # n * weighted gini = nl - sum(L^2)/nl + nr - sum(R^2)/nr
    score = (nl - (left * left).sum(axis=1) / nl + nr - (right * right).sum(axis=1) / nr) / n
    score = np.where(valid, score, np.inf)
    # first (lowest threshold) among candidates equal up to rounding
    i = int(np.flatnonzero(score <= score.min() + MIN_GAIN)[0])
    thr = 0.5 * (xs[i] + xs[i + 1])
    if not thr < xs[i + 1]:
        thr = xs[i]
    return float(score[i]), float(thr)


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat tree.  ``feature[k] == -1`` marks a leaf; ``value`` holds class counts."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict_proba(self, X) -> np.ndarray:
        v = self.value[self.apply(X)]
        return v / v.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)


def fit_tree(X, y, num_classes: int, max_depth=None, min_samples_split: int = 2,
             max_features=None, rng=None) -> Tree:
    """Grow a tree greedily.

    A node is split only if the best split strictly lowers weighted Gini
    impurity.  With ``max_features`` below ``d`` a fresh random feature
    subset is drawn at every node from ``rng``; otherwise all features are
    scanned in index order and ``rng`` is not consumed.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape
    if n == 0:
        raise ValueError("cannot fit a tree on an empty dataset")
    if min_samples_split < 2:
        raise ValueError("min_samples_split must be at least 2")
    k = d if max_features is None else max(1, min(int(max_features), d))
    if k < d and rng is None:
        raise ValueError("feature subsampling needs an rng")
    Y = np.eye(num_classes)[y]

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(Y[idx].sum(axis=0))
        return len(feature) - 1

    root = new_node(np.arange(n))
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = value[node]
        if (max_depth is not None and depth >= max_depth) or len(idx) < min_samples_split \
                or np.count_nonzero(counts) <= 1:
            continue
        parent = gini(counts)
        feats = np.arange(d) if k >= d else rng.choice(d, size=k, replace=False)
        best = None
        for f in feats:
            res = best_split_on_feature(X[idx, f], Y[idx])
            if res is not None and (best is None or res[0] < best[0] - MIN_GAIN):
                best = (res[0], int(f), res[1])
        if best is None or parent - best[0] <= MIN_GAIN:
            continue
        _, f, thr = best
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree is numbered first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=np.float64),
    )
