"""Shared plumbing for the classifiers: dataset checks and the model interface."""
from __future__ import annotations

import numpy as np

from ..errors import InvalidParameterError
from ..features import N_FEATURES
from ..severity import N_CLASSES

CLASS_VALUES = np.arange(1, N_CLASSES + 1)


def check_dataset(X, y, n_features: int = N_FEATURES):
    """Validate and convert a training set; returns ``(X float64, y int64)``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidParameterError("training set must be a non-empty 2-D array")
    if X.shape[1] != n_features:
        raise InvalidParameterError(f"expected {n_features} features, got {X.shape[1]}")
    if y.shape != (X.shape[0],):
        raise InvalidParameterError(f"{X.shape[0]} samples but {y.size} labels")
    if not np.isin(y, CLASS_VALUES).all():
        raise InvalidParameterError(f"labels must lie in {CLASS_VALUES.tolist()}")
    if not np.isfinite(X).all():
        raise InvalidParameterError("features must be finite")
    return X, y


def one_hot(y) -> np.ndarray:
    """``(n, 4)`` indicator matrix for labels 1..4."""
    return (np.asarray(y)[:, None] == CLASS_VALUES[None, :]).astype(np.float64)


def argmax_class(scores) -> np.ndarray:
    """Class label of the row-wise maximum; ties go to the smaller class."""
    return CLASS_VALUES[np.argmax(np.asarray(scores), axis=1)]


class Model:
    """Interface every trained classifier follows.

    ``predict_scores`` returns an ``(n, 4)`` array whose meaning is given by
    ``score_kind`` ("probability", "votes" or "margin"); ``predict`` returns
    class labels 1..4.  ``state`` / ``from_state`` give a JSON-able metadata
    dict plus a dict of numpy arrays, which :mod:`.model_io` serializes.
    """

    kind: str = ""
    score_kind: str = ""
    n_features: int = N_FEATURES

    def _check_input(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise InvalidParameterError(f"{self.kind} model expects {self.n_features} features, got shape {X.shape}")
        return X

    def predict_scores(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict(self, X) -> np.ndarray:
        return argmax_class(self.predict_scores(X))

    def predict_one(self, x):
        """``(class, scores)`` for a single feature vector."""
        s = self.predict_scores(x)
        return int(self.predict(x)[0]), s[0]

    def state(self) -> tuple[dict, dict]:
        raise NotImplementedError

    @classmethod
    def from_state(cls, meta: dict, arrays: dict):
        raise NotImplementedError
