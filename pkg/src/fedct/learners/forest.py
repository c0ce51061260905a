from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tree import Tree, fit_tree


def resolve_max_features(max_features, d: int) -> int:
    if max_features is None:
        return d
    if max_features == "sqrt":
        return max(1, int(math.sqrt(d)))
    if max_features == "log2":
        return max(1, int(math.log2(d)))
    if isinstance(max_features, float) and 0 < max_features <= 1:
        return max(1, int(max_features * d))
    return max(1, min(int(max_features), d))


@dataclass(frozen=True, eq=False)
class Forest:
    trees: tuple[Tree, ...]
    num_classes: int

    def predict_proba(self, X) -> np.ndarray:
        """Fraction of trees voting for each class."""
        votes = np.zeros((len(X), self.num_classes))
        rows = np.arange(len(X))
        for t in self.trees:
            votes[rows, t.predict(X)] += 1
        return votes / len(self.trees)

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)


def fit_forest(X, y, num_classes: int, n_trees: int = 10, max_features="sqrt", bootstrap: bool = True,
               max_depth=None, min_samples_split: int = 2, seed=0) -> Forest:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape
    k = resolve_max_features(max_features, d)
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(fit_tree(X[idx], y[idx], num_classes, max_depth=max_depth,
                              min_samples_split=min_samples_split, max_features=k, rng=rng))
    return Forest(tuple(trees), num_classes)
