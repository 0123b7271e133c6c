"""Kernel support vector machine trained with SMO, one-vs-one for multiclass.

The binary solver is the working-set SMO used by LIBSVM: at each step it
picks the maximal violating pair of the dual problem

    min 1/2 a^T Q a - e^T a,   y^T a = 0,   0 <= a_i <= C_i,

with ``Q_ij = y_i y_j K(x_i, x_j)``, optimizes the pair analytically, and
stops when the violation gap is below the tolerance.  At that point every
sample satisfies its KKT condition on ``y f(x)`` to within the tolerance.
"""
from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InvalidParameterError, InvariantViolation
from .base import CLASS_VALUES, Model, check_dataset

log = logging.getLogger(__name__)

TAU = 1e-12


@dataclass(frozen=True)
class SvmParams:
    kernel: str = "rbf"
    gamma: float | None = None  # None: 1 / (n_features * X.var())
    C: float = 1.0
    tol: float = 1e-3
    max_iter: int = 100_000
    class_weight: str | None = None  # None or "balanced"

    def __post_init__(self):
        if self.kernel not in ("rbf", "linear"):
            raise InvalidParameterError(f"unknown kernel {self.kernel!r}")
        if not self.C > 0:
            raise InvalidParameterError("C must be positive")
        if self.gamma is not None and not self.gamma > 0:
            raise InvalidParameterError("gamma must be positive")
        if not self.tol > 0 or self.max_iter < 1:
            raise InvalidParameterError("tol must be positive and max_iter >= 1")
        if self.class_weight not in (None, "balanced"):
            raise InvalidParameterError("class_weight must be None or 'balanced'")


def kernel_matrix(A, B, kernel: str, gamma: float) -> np.ndarray:
    if kernel == "linear":
        return A @ B.T
    sq = (A ** 2).sum(axis=1)[:, None] + (B ** 2).sum(axis=1)[None, :] - 2.0 * (A @ B.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass
class BinarySolution:
    alpha: np.ndarray
    b: float
    n_iter: int
    converged: bool


def smo(K, y, C, tol=1e-3, max_iter=100_000) -> BinarySolution:
    """Solve the binary dual for labels ``y`` in {-1, +1}.

    ``C`` is a scalar or a per-sample bound.  Decision values are
    ``f(x_i) = sum_j alpha_j y_j K_ij + b``.
    """
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    C = np.broadcast_to(np.asarray(C, dtype=np.float64), (n,)).copy()
    Q = (y[:, None] * y[None, :]) * K
    diag = np.diag(Q).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient Q a - e
    converged = False
    it = 0
    while it < max_iter:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        score = -y * G
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        if score[i] - score[j] <= tol:
            converged = True
            break
        it += 1
        # move along y_i d_i = -y_j d_j; t is the step in y_i * alpha_i
        quad = max(diag[i] + diag[j] - 2.0 * y[i] * y[j] * Q[i, j], TAU)
        t = (score[i] - score[j]) / quad
        # feasible range for t: alpha_i + y_i t in [0, C_i], alpha_j - y_j t in [0, C_j]
        lo_i, hi_i = (-alpha[i], C[i] - alpha[i]) if y[i] > 0 else (alpha[i] - C[i], alpha[i])
        lo_j, hi_j = (alpha[j] - C[j], alpha[j]) if y[j] > 0 else (-alpha[j], C[j] - alpha[j])
        t = min(t, hi_i, hi_j)
        t = max(t, lo_i, lo_j, 0.0)
        di, dj = y[i] * t, -y[j] * t
        alpha[i] = min(max(alpha[i] + di, 0.0), C[i])
        alpha[j] = min(max(alpha[j] + dj, 0.0), C[j])
        G += Q[:, i] * di + Q[:, j] * dj
    score = -y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        b = float(score[free].mean())
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        m = score[up].max() if up.any() else 0.0
        M = score[low].min() if low.any() else 0.0
        b = float(0.5 * (m + M))
    return BinarySolution(alpha, b, it, converged)


def kkt_violation(K, y, alpha, b, C) -> float:
    """Largest KKT violation measured on ``y f(x)``.

    ``alpha = 0`` needs ``y f >= 1``, free ``alpha`` needs ``y f = 1`` and
    ``alpha = C`` needs ``y f <= 1``; the bounds ``0 <= alpha <= C`` must hold
    exactly.
    """
    y = np.asarray(y, dtype=np.float64)
    C = np.broadcast_to(np.asarray(C, dtype=np.float64), y.shape)
    if (alpha < 0).any() or (alpha > C).any():
        return np.inf
    margin = y * (K @ (alpha * y) + b)
    at_zero = alpha <= 0
    at_c = alpha >= C
    free = ~at_zero & ~at_c
    v = np.zeros_like(margin)
    v[at_zero] = np.maximum(1.0 - margin[at_zero], 0.0)
    v[at_c] = np.maximum(margin[at_c] - 1.0, 0.0)
    v[free] = np.abs(margin[free] - 1.0)
    return float(v.max()) if v.size else 0.0


class SvmModel(Model):
    kind = "svm"
    score_kind = "votes"

    def __init__(self, params: SvmParams, gamma: float, pairs, classes):
        """``pairs`` is a list of ``(a, b, sv_x, sv_coef, intercept)``: the
        binary machine that answers class ``a`` for positive decisions."""
        self.params = params
        self.gamma = gamma
        self.pairs = pairs
        self.classes = list(classes)
        self.kkt_max = 0.0

    def pair_decisions(self, X):
        X = self._check_input(X)
        out = np.zeros((len(X), len(self.pairs)))
        for p, (_, _, sv, coef, b) in enumerate(self.pairs):
            out[:, p] = kernel_matrix(X, sv, self.params.kernel, self.gamma) @ coef + b
        return out

    def _votes_and_margins(self, X):
        X = self._check_input(X)
        votes = np.zeros((len(X), len(CLASS_VALUES)))
        margins = np.zeros_like(votes)
        if len(self.classes) == 1:
            votes[:, self.classes[0] - 1] = 1.0
            return votes, margins
        d = self.pair_decisions(X)
        for p, (a, b, *_rest) in enumerate(self.pairs):
            pos = d[:, p] > 0
            votes[pos, a - 1] += 1
            votes[~pos, b - 1] += 1
            margins[:, a - 1] += d[:, p]
            margins[:, b - 1] -= d[:, p]
        return votes, margins

    def predict_scores(self, X):
        return self._votes_and_margins(X)[0]

    def predict(self, X):
        """Most pairwise votes; ties go to the larger summed margin, then the smaller class."""
        votes, margins = self._votes_and_margins(X)
        top = votes == votes.max(axis=1, keepdims=True)
        m = np.where(top, margins, -np.inf)
        return CLASS_VALUES[np.argmax(m, axis=1)]

    def state(self):
        meta = {"params": asdict(self.params), "gamma": self.gamma, "classes": self.classes,
                "pairs": [[a, b] for a, b, *_ in self.pairs], "kkt_max": self.kkt_max}
        arrays = {}
        for p, (_, _, sv, coef, b) in enumerate(self.pairs):
            arrays[f"sv{p}"] = sv
            arrays[f"coef{p}"] = coef
            arrays[f"b{p}"] = np.array([b])
        return meta, arrays

    @classmethod
    def from_state(cls, meta, arrays):
        pairs = [(a, b, arrays[f"sv{p}"], arrays[f"coef{p}"], float(arrays[f"b{p}"][0]))
                 for p, (a, b) in enumerate(meta["pairs"])]
        model = cls(SvmParams(**meta["params"]), meta["gamma"], pairs, meta["classes"])
        model.kkt_max = meta["kkt_max"]
        return model


def default_gamma(X) -> float:
    var = float(X.var())
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


def train_svm(X, y, params: SvmParams = SvmParams(), threads: int = 1, check_kkt: bool = True) -> SvmModel:
    """One-vs-one SVMs over the classes present in ``y``.

    The KKT conditions of every binary machine are verified after training
    when ``check_kkt`` is set; a violation above the tolerance (after a
    converged solve) raises :class:`InvariantViolation`.
    """
    X, y = check_dataset(X, y)
    gamma = params.gamma if params.gamma is not None else default_gamma(X)
    classes = sorted(int(c) for c in np.unique(y))
    if len(classes) == 1:
        log.warning("SVM trained on a single class (%d); predicting it constantly", classes[0])
        return SvmModel(params, gamma, [], classes)
    weights = {c: 1.0 for c in classes}
    if params.class_weight == "balanced":
        weights = {c: len(y) / (len(classes) * np.count_nonzero(y == c)) for c in classes}

    def fit_pair(ab):
        a, b = ab
        idx = np.flatnonzero((y == a) | (y == b))
        Xp = X[idx]
        yp = np.where(y[idx] == a, 1.0, -1.0)
        Cp = params.C * np.array([weights[int(c)] for c in y[idx]])
        K = kernel_matrix(Xp, Xp, params.kernel, gamma)
        sol = smo(K, yp, Cp, params.tol, params.max_iter)
        viol = kkt_violation(K, yp, sol.alpha, sol.b, Cp)
        if not sol.converged:
            log.warning("SMO for pair (%d, %d) hit max_iter=%d; KKT violation %.3g", a, b, params.max_iter, viol)
        elif check_kkt and viol > params.tol * (1 + 1e-6):
            raise InvariantViolation(f"SVM pair ({a}, {b}) violates KKT by {viol:.3g} > tol {params.tol}")
        sv = sol.alpha > 0
        return (a, b, Xp[sv], sol.alpha[sv] * yp[sv], sol.b), viol

    combos = list(itertools.combinations(classes, 2))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            fitted = list(pool.map(fit_pair, combos))
    else:
        fitted = [fit_pair(ab) for ab in combos]
    model = SvmModel(params, gamma, [f[0] for f in fitted], classes)
    model.kkt_max = max(f[1] for f in fitted)
    return model
