"""Multinomial logistic regression fitted by full-batch gradient descent."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InvalidParameterError
from .base import CLASS_VALUES, Model, check_dataset, one_hot
from .gboost import softmax


@dataclass(frozen=True)
class LogregParams:
    learning_rate: float = 0.5
    epochs: int = 2000
    l2: float = 0.0

    def __post_init__(self):
        if not self.learning_rate > 0 or self.epochs < 1 or self.l2 < 0:
            raise InvalidParameterError("need learning_rate > 0, epochs >= 1, l2 >= 0")


def unpack(theta, n_features: int, n_classes: int = len(CLASS_VALUES)):
    W = theta[: n_features * n_classes].reshape(n_features, n_classes)
    b = theta[n_features * n_classes:]
    return W, b


def loss_and_grad(theta, X, Y, l2: float = 0.0):
    """Mean cross-entropy (plus ``l2/2 |W|^2``) and its gradient.

    ``theta`` is the flattened ``(W, b)`` with ``W`` of shape
    ``(n_features, n_classes)``; ``Y`` is one-hot.
    """
    n, d = X.shape
    k = Y.shape[1]
    W, b = unpack(theta, d, k)
    Z = X @ W + b
    Zs = Z - Z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(Zs).sum(axis=1))
    loss = float(np.mean(logsum - (Zs * Y).sum(axis=1))) + 0.5 * l2 * float((W ** 2).sum())
    P = softmax(Z)
    D = (P - Y) / n
    gW = X.T @ D + l2 * W
    gb = D.sum(axis=0)
    return loss, np.concatenate([gW.ravel(), gb])


class LogregModel(Model):
    kind = "logreg"
    score_kind = "probability"

    def __init__(self, W, b, params: LogregParams):
        self.W = W
        self.b = b
        self.params = params

    def predict_scores(self, X):
        X = self._check_input(X)
        return softmax(X @ self.W + self.b)

    def state(self):
        return {"params": asdict(self.params)}, {"W": self.W, "b": self.b}

    @classmethod
    def from_state(cls, meta, arrays):
        return cls(arrays["W"], arrays["b"], LogregParams(**meta["params"]))


def train_logreg(X, y, params: LogregParams = LogregParams()) -> LogregModel:
    X, y = check_dataset(X, y)
    Y = one_hot(y)
    d, k = X.shape[1], Y.shape[1]
    theta = np.zeros(d * k + k)
    for _ in range(params.epochs):
        _, g = loss_and_grad(theta, X, Y, params.l2)
        theta -= params.learning_rate * g
    W, b = unpack(theta, d, k)
    return LogregModel(W.copy(), b.copy(), params)
