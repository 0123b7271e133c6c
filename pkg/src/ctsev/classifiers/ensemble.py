"""Hard-voting ensemble of a gradient-boosted model, an ERT forest and an SVM."""
from __future__ import annotations

import logging
from collections import Counter

import numpy as np

from ..errors import InvalidParameterError
from .base import CLASS_VALUES, Model

log = logging.getLogger(__name__)

MEMBER_KINDS = ("gboost", "ert", "svm")
DEFAULT_PRIORITY = ("gboost", "ert", "svm")


def vote(votes, kinds=MEMBER_KINDS, priority=DEFAULT_PRIORITY) -> int:
    """Majority class of the member ``votes``; without a majority the vote
    of the highest-priority member wins."""
    counts = Counter(int(v) for v in votes)
    cls, n = max(counts.items(), key=lambda kv: (kv[1], -kv[0]))
    if n * 2 > len(votes):
        return cls
    return int(votes[list(kinds).index(priority[0])])


class EnsembleModel(Model):
    kind = "ensemble"
    score_kind = "votes"

    def __init__(self, members, priority=DEFAULT_PRIORITY):
        kinds = tuple(m.kind for m in members)
        if sorted(kinds) != sorted(MEMBER_KINDS):
            raise InvalidParameterError(f"ensemble needs exactly one each of {MEMBER_KINDS}, got {kinds}")
        if sorted(priority) != sorted(MEMBER_KINDS):
            raise InvalidParameterError(f"priority must order {MEMBER_KINDS}")
        dims = {m.n_features for m in members}
        if len(dims) != 1:
            raise InvalidParameterError(f"member feature dimensions differ: {dims}")
        self.members = list(members)
        self.priority = tuple(priority)
        self.n_features = dims.pop()

    def member_votes(self, X) -> np.ndarray:
        """``(n, 3)`` class votes, columns in member order."""
        X = self._check_input(X)
        return np.stack([m.predict(X) for m in self.members], axis=1)

    def predict(self, X):
        kinds = [m.kind for m in self.members]
        return np.array([vote(row, kinds, self.priority) for row in self.member_votes(X)], dtype=np.int64)

    def predict_scores(self, X):
        votes = self.member_votes(X)
        return (votes[:, :, None] == CLASS_VALUES[None, None, :]).sum(axis=1).astype(np.float64)

    def state(self):
        meta = {"priority": list(self.priority), "members": []}
        arrays = {}
        for i, m in enumerate(self.members):
            mm, ma = m.state()
            meta["members"].append({"kind": m.kind, "meta": mm})
            arrays.update({f"m{i}/{k}": v for k, v in ma.items()})
        return meta, arrays

    @classmethod
    def from_state(cls, meta, arrays):
        from .model_io import MODEL_KINDS

        members = []
        for i, entry in enumerate(meta["members"]):
            prefix = f"m{i}/"
            sub = {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}
            members.append(MODEL_KINDS[entry["kind"]].from_state(entry["meta"], sub))
        return cls(members, tuple(meta["priority"]))


def build_ensemble(gboost, ert, svm, priority=DEFAULT_PRIORITY) -> EnsembleModel:
    log.info("ensemble tie-break priority: %s", ", ".join(priority))
    return EnsembleModel([gboost, ert, svm], priority)
