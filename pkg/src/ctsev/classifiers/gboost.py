"""Multiclass gradient-boosted regression trees on the softmax cross-entropy.

Every round fits one depth-limited regression tree per class to the negative
gradient (one-hot label minus predicted probability) and adds it with the
learning rate.  This is first-order boosting: leaves hold the mean residual,
with no Hessian weighting and no subsampling.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InvalidParameterError
from .base import CLASS_VALUES, Model, check_dataset, one_hot


@dataclass(frozen=True)
class GbParams:
    n_rounds: int = 200
    learning_rate: float = 0.1
    max_depth: int = 3
    min_samples_leaf: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_rounds < 1:
            raise InvalidParameterError("n_rounds must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise InvalidParameterError("learning_rate must lie in (0, 1]")
        if self.max_depth < 1 or self.min_samples_leaf < 1:
            raise InvalidParameterError("max_depth and min_samples_leaf must be >= 1")


def softmax(F):
    Z = F - F.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def cross_entropy(F, Y) -> float:
    """Mean softmax cross-entropy of raw scores ``F`` against one-hot ``Y``."""
    Z = F - F.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(Z).sum(axis=1))
    return float(np.mean(logsum - (Z * Y).sum(axis=1)))


def _best_split(Xn, r, min_leaf):
    """Exhaustive least-squares split of residuals ``r``; ``None`` if no gain."""
    n = len(r)
    if n < 2 * min_leaf:
        return None
    order = np.argsort(Xn, axis=0, kind="stable")
    xs = np.take_along_axis(Xn, order, axis=0)
    rs = r[order]
    csum = np.cumsum(rs, axis=0)[:-1]
    total = r.sum()
    nl = np.arange(1, n)[:, None]
    nr = n - nl
    # reduction in squared error relative to a single leaf
    gain = csum ** 2 / nl + (total - csum) ** 2 / nr - total ** 2 / n
    valid = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
    gain = np.where(valid, gain, -np.inf)
    flat = int(np.argmax(gain))
    i, f = divmod(flat, Xn.shape[1])
    if not np.isfinite(gain[i, f]) or gain[i, f] <= 1e-15:
        return None
    return f, 0.5 * (xs[i, f] + xs[i + 1, f])


def fit_regression_tree(X, r, max_depth, min_leaf):
    """Least-squares tree as ``(feature, threshold, left, right, value)`` arrays."""
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(v):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(v)
        return len(feature) - 1

    root = new_node(float(r.mean()))
    stack = [(root, np.arange(len(r)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= max_depth:
            continue
        split = _best_split(X[idx], r[idx], min_leaf)
        if split is None:
            continue
        f, t = split
        mask = X[idx, f] <= t
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = int(f), float(t)
        left[node] = new_node(float(r[li].mean()))
        right[node] = new_node(float(r[ri].mean()))
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return (np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
            np.array(right, dtype=np.int64), np.array(value))


def regression_tree_apply(tree, X):
    feature, threshold, left, right, value = tree
    node = np.zeros(len(X), dtype=np.int64)
    for _ in range(len(feature)):
        f = feature[node]
        inner = f >= 0
        if not inner.any():
            break
        nxt = np.where(X[np.arange(len(X)), np.maximum(f, 0)] <= threshold[node], left[node], right[node])
        node = np.where(inner, nxt, node)
    return value[node]


class GboostModel(Model):
    kind = "gboost"
    score_kind = "probability"

    def __init__(self, trees, params: GbParams, loss_trace):
        # trees[round][class]
        self.trees = trees
        self.params = params
        self.loss_trace = list(loss_trace)

    def decision_function(self, X):
        X = self._check_input(X)
        F = np.zeros((len(X), len(CLASS_VALUES)))
        for round_trees in self.trees:
            for k, tree in enumerate(round_trees):
                F[:, k] += self.params.learning_rate * regression_tree_apply(tree, X)
        return F

    def predict_scores(self, X):
        return softmax(self.decision_function(X))

    def state(self):
        flat = [t for rt in self.trees for t in rt]
        arrays = {"sizes": np.array([len(t[0]) for t in flat], dtype=np.int64)}
        for name, parts in zip(("feature", "threshold", "left", "right", "value"), zip(*flat)):
            arrays[name] = np.concatenate(parts)
        arrays["loss_trace"] = np.array(self.loss_trace)
        return {"params": asdict(self.params)}, arrays

    @classmethod
    def from_state(cls, meta, arrays):
        bounds = np.concatenate([[0], np.cumsum(arrays["sizes"])])
        names = ("feature", "threshold", "left", "right", "value")
        flat = [tuple(arrays[n][bounds[i]:bounds[i + 1]] for n in names) for i in range(len(bounds) - 1)]
        k = len(CLASS_VALUES)
        trees = [flat[i:i + k] for i in range(0, len(flat), k)]
        return cls(trees, GbParams(**meta["params"]), arrays["loss_trace"].tolist())


def train_gboost(X, y, params: GbParams = GbParams()) -> GboostModel:
    """Fit the boosted model from zero initial scores.

    ``model.loss_trace[0]`` is the training loss before the first round
    (``log 4``) and ``loss_trace[t]`` the loss after round ``t``.
    """
    X, y = check_dataset(X, y)
    Y = one_hot(y)
    F = np.zeros_like(Y)
    trace = [cross_entropy(F, Y)]
    trees = []
    for _ in range(params.n_rounds):
        R = Y - softmax(F)
        round_trees = []
        for k in range(Y.shape[1]):
            tree = fit_regression_tree(X, R[:, k], params.max_depth, params.min_samples_leaf)
            round_trees.append(tree)
            F[:, k] += params.learning_rate * regression_tree_apply(tree, X)
        trees.append(round_trees)
        trace.append(cross_entropy(F, Y))
    return GboostModel(trees, params, trace)
