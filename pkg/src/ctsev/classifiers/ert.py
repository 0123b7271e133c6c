"""Extremely randomized trees.

Each node draws ``K`` features at random among those that are not constant
on the node's samples, draws one cut-point uniformly in each feature's
observed range and keeps the candidate with the largest Gini decrease.
Trees grow until nodes are pure, constant, or smaller than
``min_samples_split``.  The forest predicts by majority vote of the trees.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InvalidParameterError
from ..features import N_FEATURES
from .base import CLASS_VALUES, Model, check_dataset, one_hot


@dataclass(frozen=True)
class ErtParams:
    n_trees: int = 300
    k_features: int = math.ceil(math.sqrt(N_FEATURES))
    min_samples_split: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise InvalidParameterError("n_trees must be >= 1")
        if not 1 <= self.k_features <= N_FEATURES:
            raise InvalidParameterError(f"k_features must lie in [1, {N_FEATURES}]")
        if self.min_samples_split < 2:
            raise InvalidParameterError("min_samples_split must be >= 2")


def _gini_impurity(counts):
    """Weighted Gini impurity ``n * (1 - sum p^2)`` per row of class counts."""
    n = counts.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        g = n - np.where(n > 0, (counts ** 2).sum(axis=-1) / n, 0.0)
    return g


def grow_tree(X, Y, p: ErtParams, rng: np.random.Generator):
    """One tree as flat node arrays.

    Returns ``(feature, threshold, left, right, leaf_class)``; internal nodes
    send ``x[feature] <= threshold`` to ``left``, leaves have ``feature = -1``.
    """
    feature, threshold, left, right, leaf = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        leaf.append(0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(len(X)))]
    while stack:
        node, idx = stack.pop()
        counts = Y[idx].sum(axis=0)
        leaf[node] = int(CLASS_VALUES[np.argmax(counts)])
        if len(idx) < p.min_samples_split or np.count_nonzero(counts) <= 1:
            continue
        Xn = X[idx]
        lo, hi = Xn.min(axis=0), Xn.max(axis=0)
        usable = np.flatnonzero(hi > lo)
        if usable.size == 0:
            continue
        k = min(p.k_features, usable.size)
        feats = rng.choice(usable, size=k, replace=False)
        cuts = rng.uniform(lo[feats], hi[feats])
        # x <= cut keeps the minimum on the left; the maximum is always > cut
        goes_left = Xn[:, feats] <= cuts
        left_counts = goes_left.T.astype(np.float64) @ Y[idx]
        right_counts = counts[None, :] - left_counts
        impurity = _gini_impurity(left_counts) + _gini_impurity(right_counts)
        best = int(np.argmin(impurity))
        mask = goes_left[:, best]
        feature[node] = int(feats[best])
        threshold[node] = float(cuts[best])
        lnode, rnode = new_node(), new_node()
        left[node], right[node] = lnode, rnode
        stack.append((rnode, idx[~mask]))
        stack.append((lnode, idx[mask]))
    return (np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
            np.array(left, dtype=np.int64), np.array(right, dtype=np.int64), np.array(leaf, dtype=np.int64))


def tree_apply(tree, X) -> np.ndarray:
    """Leaf class of every row of ``X``."""
    feature, threshold, left, right, leaf = tree
    node = np.zeros(len(X), dtype=np.int64)
    rows = np.arange(len(X))
    while True:
        f = feature[node]
        active = f >= 0
        if not active.any():
            return leaf[node]
        a = rows[active]
        na = node[active]
        go_left = X[a, f[active]] <= threshold[na]
        node[a] = np.where(go_left, left[na], right[na])


class ErtModel(Model):
    kind = "ert"
    score_kind = "votes"

    def __init__(self, trees, params: ErtParams):
        self.trees = trees
        self.params = params

    def predict_scores(self, X):
        X = self._check_input(X)
        votes = np.zeros((len(X), len(CLASS_VALUES)))
        for tree in self.trees:
            votes[np.arange(len(X)), tree_apply(tree, X) - 1] += 1
        return votes / len(self.trees)

    def state(self):
        sizes = np.array([len(t[0]) for t in self.trees], dtype=np.int64)
        cols = list(zip(*self.trees))
        arrays = {"sizes": sizes}
        for name, parts in zip(("feature", "threshold", "left", "right", "leaf"), cols):
            arrays[name] = np.concatenate(parts)
        return {"params": asdict(self.params)}, arrays

    @classmethod
    def from_state(cls, meta, arrays):
        bounds = np.concatenate([[0], np.cumsum(arrays["sizes"])])
        names = ("feature", "threshold", "left", "right", "leaf")
        trees = [tuple(arrays[n][bounds[i]:bounds[i + 1]] for n in names) for i in range(len(bounds) - 1)]
        return cls(trees, ErtParams(**meta["params"]))


def train_ert(X, y, params: ErtParams = ErtParams(), threads: int = 1) -> ErtModel:
    """Fit a forest; every tree has its own generator spawned from ``params.seed``,
    so the result does not depend on ``threads``."""
    X, y = check_dataset(X, y)
    Y = one_hot(y)
    seeds = np.random.SeedSequence(params.seed).spawn(params.n_trees)

    def build(ss):
        return grow_tree(X, Y, params, np.random.default_rng(ss))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            trees = list(pool.map(build, seeds))
    else:
        trees = [build(ss) for ss in seeds]
    return ErtModel(trees, params)
