"""Confusion matrices, macro precision/recall/F1 and stratified folds."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .severity import CLASSES, N_CLASSES

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows = true class and columns = predicted class, both 1..4."""

    counts: np.ndarray

    def at(self, true_cls: int, pred_cls: int) -> int:
        return int(self.counts[true_cls - 1, pred_cls - 1])

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion_matrix(y_true, y_pred) -> ConfusionMatrix:
    t = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(y_pred, dtype=np.int64)
    if t.shape != p.shape or t.ndim != 1:
        raise InvalidParameterError(f"label arrays must be aligned 1-D, got {t.shape} and {p.shape}")
    if t.size == 0:
        raise InvalidParameterError("no labels to evaluate")
    for arr in (t, p):
        if ((arr < 1) | (arr > N_CLASSES)).any():
            raise InvalidParameterError(f"labels must lie in 1..{N_CLASSES}")
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(counts, (t - 1, p - 1), 1)
    return ConfusionMatrix(counts)


def _ratio(num, den):
    """Elementwise num/den with 0/0 defined as 0."""
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


@dataclass(frozen=True)
class MetricsReport:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f1: float
    # F1 computed from the macro precision and recall; reported alongside
    macro_f1_of_means: float


def macro_metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Per-class and macro metrics; every 0/0 is 0.

    ``macro_f1`` is the unweighted mean of the per-class F1 scores.
    """
    c = np.asarray(cm.counts, dtype=np.float64)
    tp = np.diag(c)
    precision = _ratio(tp, c.sum(axis=0))
    recall = _ratio(tp, c.sum(axis=1))
    f1 = _ratio(2 * precision * recall, precision + recall)
    mp, mr = float(precision.mean()), float(recall.mean())
    f1_means = float(_ratio(2 * mp * mr, mp + mr))
    return MetricsReport(precision, recall, f1, mp, mr, float(f1.mean()), f1_means)


def evaluate(y_true, y_pred) -> tuple[ConfusionMatrix, MetricsReport]:
    cm = confusion_matrix(y_true, y_pred)
    return cm, macro_metrics(cm)


def stratified_k_fold(y, k: int, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """``k`` ``(train, test)`` index splits with per-class balance.

    Each class is shuffled with the seed and dealt round-robin over the folds;
    the dealing start rotates from class to class so fold sizes stay within
    one of each other as well.
    """
    y = np.asarray(y)
    n = len(y)
    if k < 2:
        raise InvalidParameterError("k must be >= 2")
    if k > n:
        raise InvalidParameterError(f"k={k} exceeds the {n} samples")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(n, dtype=np.int64)
    start = 0
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        if len(idx) < k:
            log.warning("class %s has %d < k=%d samples; stratification is best-effort", cls, len(idx), k)
        idx = idx[rng.permutation(len(idx))]
        fold_of[idx] = (start + np.arange(len(idx))) % k
        start = (start + len(idx)) % k
    all_idx = np.arange(n)
    return [(all_idx[fold_of != f], all_idx[fold_of == f]) for f in range(k)]


# ---------------------------------------------------------------------------
# Reports

METRIC_ROWS = ("Precision", "Recall", "F1 score")


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def write_metrics_csv(path, reports: dict[str, MetricsReport]) -> None:
    """Macro metrics, one row per metric and one column per model."""
    names = list(reports)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["Models", *names])
        w.writerow(["Precision", *(_fmt(reports[m].macro_precision) for m in names)])
        w.writerow(["Recall", *(_fmt(reports[m].macro_recall) for m in names)])
        w.writerow(["F1 score", *(_fmt(reports[m].macro_f1) for m in names)])
        w.writerow(["F1 of macro P/R", *(_fmt(reports[m].macro_f1_of_means) for m in names)])


def write_per_class_csv(path, report: MetricsReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "precision", "recall", "f1"])
        for i, cls in enumerate(CLASSES):
            w.writerow([cls.short, _fmt(report.precision[i]), _fmt(report.recall[i]), _fmt(report.f1[i])])


def write_confusion_csv(path, cm: ConfusionMatrix) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true\\pred", *(c.short for c in CLASSES)])
        for i, cls in enumerate(CLASSES):
            w.writerow([cls.short, *cm.counts[i].tolist()])


def format_table(reports: dict[str, MetricsReport], verbose: bool = False) -> str:
    """Plain-text table: metric rows, model columns."""
    names = list(reports)
    rows = [("Models", *names),
            ("Precision", *(f"{reports[m].macro_precision:.2f}" for m in names)),
            ("Recall", *(f"{reports[m].macro_recall:.2f}" for m in names)),
            ("F1 score", *(f"{reports[m].macro_f1:.2f}" for m in names))]
    if verbose:
        rows.append(("F1 of macro P/R", *(f"{reports[m].macro_f1_of_means:.2f}" for m in names)))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(cell.ljust(wd) for cell, wd in zip(r, widths)).rstrip() for r in rows) + "\n"


def format_confusion(cm: ConfusionMatrix, title: str = "") -> str:
    head = [""] + [c.short for c in CLASSES]
    lines = [title] if title else []
    lines.append(" ".join(f"{h:>4}" for h in head))
    for i, cls in enumerate(CLASSES):
        lines.append(" ".join(f"{v:>4}" for v in [cls.short, *cm.counts[i].tolist()]))
    return "\n".join(lines) + "\n"
