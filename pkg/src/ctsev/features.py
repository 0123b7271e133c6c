"""Fixed-length per-scan feature vectors and the feature/rates CSV formats."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import EmptyScanError, ScanLoadError

N_REGIONS = 40
N_FEATURES = 2 * N_REGIONS

FEATURE_COLUMNS = [f"{side}_{r:02d}" for r in range(N_REGIONS) for side in ("left", "right")]


def region_median_indices(m: int, n_regions: int = N_REGIONS) -> list[int]:
    """Position of the lower-median slice in each of ``n_regions`` contiguous
    regions ``[floor(r*m/n), floor((r+1)*m/n))``; requires ``m >= n_regions``."""
    out = []
    for r in range(n_regions):
        lo = r * m // n_regions
        hi = (r + 1) * m // n_regions
        out.append(lo + (hi - lo - 1) // 2)
    return out


def feature_vector_from_rates(pairs) -> np.ndarray:
    """80-vector from the ``(left, right)`` rates of the retained slices, in order.

    More than 40 slices: one pair per region (its median slice).  Otherwise
    every pair is kept and the tail is padded with the mean pair.
    """
    p = np.asarray(pairs, dtype=np.float64).reshape(-1, 2)
    m = len(p)
    if m == 0:
        raise EmptyScanError("no retained slices to build a feature vector from")
    if m > N_REGIONS:
        chosen = p[region_median_indices(m)]
    else:
        pad = np.repeat(p.mean(axis=0, keepdims=True), N_REGIONS - m, axis=0)
        chosen = np.vstack([p, pad])
    return np.clip(chosen.ravel(), 0.0, 1.0)


def build_feature_vector(results) -> np.ndarray:
    """Feature vector from a scan's slice results; unretained slices are ignored."""
    return feature_vector_from_rates([(r.left_rate, r.right_rate) for r in results if r.retained])


# ---------------------------------------------------------------------------
# Per-slice rates CSV (output of the segment stage)

RATES_COLUMNS = ["slice_index", "retained", "left_rate", "right_rate"]
# whole-lung rate per slice; extra trailing column, ignored by the feature path
LUNG_RATE_COLUMN = "lung_rate"


def write_rates_csv(path, results) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*RATES_COLUMNS, LUNG_RATE_COLUMN])
        for r in results:
            w.writerow([r.index, int(r.retained), repr(float(r.left_rate)), repr(float(r.right_rate)),
                        repr(float(r.rate))])


def _read_rates_rows(path):
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or list(reader.fieldnames[:4]) != RATES_COLUMNS:
                raise ScanLoadError(f"{path}: expected columns {RATES_COLUMNS}")
            return list(reader.fieldnames), list(reader)
    except (OSError, ValueError) as exc:
        raise ScanLoadError(f"cannot read rates file {path}: {exc}") from exc


def read_rates_csv(path) -> list[tuple[int, bool, float, float]]:
    """``(slice_index, retained, left_rate, right_rate)`` per row."""
    _, rows = _read_rates_rows(path)
    try:
        return [(int(r["slice_index"]), r["retained"] == "1", float(r["left_rate"]), float(r["right_rate"]))
                for r in rows]
    except (ValueError, TypeError) as exc:
        raise ScanLoadError(f"cannot read rates file {path}: {exc}") from exc


def read_scan_rate(path) -> float:
    """Mean whole-lung infection rate over the retained slices of a rates CSV."""
    fields, rows = _read_rates_rows(path)
    if LUNG_RATE_COLUMN not in fields:
        raise ScanLoadError(f"{path}: no {LUNG_RATE_COLUMN} column")
    try:
        kept = [float(r[LUNG_RATE_COLUMN]) for r in rows if r["retained"] == "1"]
    except (ValueError, TypeError) as exc:
        raise ScanLoadError(f"cannot read rates file {path}: {exc}") from exc
    if not kept:
        raise EmptyScanError(f"{path}: no retained slices")
    return float(np.mean(kept))


def retained_pairs(rows) -> list[tuple[float, float]]:
    return [(left, right) for _, kept, left, right in rows if kept]


# ---------------------------------------------------------------------------
# Feature CSV: patient_id, 80 feature columns, optional label


def write_feature_csv(path, ids, X, labels=None) -> None:
    X = np.asarray(X, dtype=np.float64)
    header = ["patient_id", *FEATURE_COLUMNS] + (["label"] if labels is not None else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, pid in enumerate(ids):
            row = [pid, *(repr(float(v)) for v in X[i])]
            if labels is not None:
                row.append("" if labels[i] is None else int(labels[i]))
            w.writerow(row)


def read_feature_csv(path):
    """Return ``(ids, X, y)``; ``y`` is ``None`` without a label column."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
    except (OSError, StopIteration) as exc:
        raise ScanLoadError(f"cannot read feature file {path}: {exc}") from exc
    if header[: 1 + N_FEATURES] != ["patient_id", *FEATURE_COLUMNS]:
        raise ScanLoadError(f"{path}: not a feature CSV (bad header)")
    has_label = len(header) > 1 + N_FEATURES and header[1 + N_FEATURES] == "label"
    ids = [r[0] for r in rows]
    X = np.array([[float(v) for v in r[1:1 + N_FEATURES]] for r in rows], dtype=np.float64).reshape(-1, N_FEATURES)
    y = None
    if has_label:
        y = np.array([int(r[1 + N_FEATURES]) if r[1 + N_FEATURES] != "" else 0 for r in rows], dtype=np.int64)
    return ids, X, y
