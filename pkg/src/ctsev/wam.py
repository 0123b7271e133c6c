"""Weighted Average Method: a linear severity baseline from infection rates.

Each lung side gets a 1..4 score from its infection rate, the sides are
combined with weights 3 (right) and 2 (left), and the per-slice scores are
averaged over the scan and rounded to a class.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import EmptyScanError, InvalidParameterError
from .severity import SeverityClass


@dataclass(frozen=True)
class WamWeights:
    right: float = 3.0
    left: float = 2.0

    def __post_init__(self):
        if not (self.right > 0 and self.left > 0):
            raise InvalidParameterError("WAM weights must be positive")


def bin_score(rate: float) -> int:
    """1 below 25%, 2 below 50%, 3 below 75%, else 4."""
    if not 0.0 <= rate <= 1.0:
        raise InvalidParameterError(f"infection rate {rate} outside [0, 1]")
    if rate < 0.25:
        return 1
    if rate < 0.50:
        return 2
    if rate < 0.75:
        return 3
    return 4


def slice_wam(left_rate: float, right_rate: float, w: WamWeights = WamWeights()) -> float:
    return (w.right * bin_score(right_rate) + w.left * bin_score(left_rate)) / (w.right + w.left)


def score_to_class(score: float) -> SeverityClass:
    """Round half-up, clamped to 1..4."""
    return SeverityClass(min(max(int(math.floor(score + 0.5)), 1), 4))


def wam_from_pairs(pairs, w: WamWeights = WamWeights()) -> tuple[SeverityClass, float]:
    scores = [slice_wam(left, right, w) for left, right in pairs]
    if not scores:
        raise EmptyScanError("WAM needs at least one retained slice")
    mean = math.fsum(scores) / len(scores)
    return score_to_class(mean), mean


def scan_wam(results, w: WamWeights = WamWeights()) -> tuple[SeverityClass, float]:
    """``(class, mean score)`` over the retained slices of a scan."""
    return wam_from_pairs([(r.left_rate, r.right_rate) for r in results if r.retained], w)
