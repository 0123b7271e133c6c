"""k-nearest-neighbour classifier with deterministic tie-breaking."""
from __future__ import annotations

import numpy as np

from ..errors import InvalidParameterError
from .base import CLASS_VALUES, Model, check_dataset


class KnnModel(Model):
    kind = "knn"
    score_kind = "votes"

    def __init__(self, X, y, k: int):
        self.X = X
        self.y = y
        self.k = k

    def neighbours(self, X) -> np.ndarray:
        """Indices of the ``k`` nearest training points per query row.

        Euclidean distance; equal distances keep the lower training index first.
        """
        X = self._check_input(X)
        d2 = ((X[:, None, :] - self.X[None, :, :]) ** 2).sum(axis=2)
        return np.argsort(d2, axis=1, kind="stable")[:, : self.k]

    def predict_scores(self, X):
        nb = self.neighbours(X)
        labels = self.y[nb]
        votes = (labels[:, :, None] == CLASS_VALUES[None, None, :]).sum(axis=1)
        return votes / self.k

    def state(self):
        return {"k": self.k}, {"X": self.X, "y": self.y}

    @classmethod
    def from_state(cls, meta, arrays):
        return cls(arrays["X"], arrays["y"], meta["k"])


def train_knn(X, y, k: int = 5) -> KnnModel:
    X, y = check_dataset(X, y)
    if not 1 <= k <= len(X):
        raise InvalidParameterError(f"k={k} must lie in [1, {len(X)}]")
    return KnnModel(X.copy(), y.copy(), int(k))
