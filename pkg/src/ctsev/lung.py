"""Scan loading, lung masks, the slice-retention gate and left/right split."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imaging as im
from .errors import GeometryError, InvalidParameterError, ScanLoadError
from .imageio import IMAGE_SUFFIXES, read_gray, read_mask

REFERENCE_AREA = 512 * 512


def natural_key(name: str):
    return [int(tok) if tok.isdigit() else tok.lower() for tok in re.split(r"(\d+)", name)]


@dataclass
class ScanVolume:
    patient_id: str
    slices: list
    names: list = field(default_factory=list)

    def __post_init__(self):
        if not self.slices:
            raise ScanLoadError(f"scan {self.patient_id!r} has no slices")
        shapes = {s.shape for s in self.slices}
        if len(shapes) != 1:
            raise GeometryError(f"scan {self.patient_id!r} mixes slice geometries {sorted(shapes)}")
        if not self.names:
            self.names = [f"{i}.png" for i in range(len(self.slices))]

    def __len__(self):
        return len(self.slices)

    @property
    def shape(self):
        return self.slices[0].shape


def list_slice_files(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise ScanLoadError(f"scan directory not found: {directory}")
    files = [p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES]
    return sorted(files, key=lambda p: natural_key(p.name))


def load_scan(directory, patient_id: str | None = None) -> ScanVolume:
    """Load every slice image in ``directory`` in numeric-aware name order."""
    files = list_slice_files(directory)
    if not files:
        raise ScanLoadError(f"no slice images in {directory}")
    slices = [read_gray(p) for p in files]
    return ScanVolume(patient_id or Path(directory).name, slices, [p.name for p in files])


# ---------------------------------------------------------------------------
# Mask sources


def classical_lung_segment(img, air_cutoff: float = 0.35) -> np.ndarray:
    """Threshold-based lung mask used when no external masks are available.

    Dark pixels are candidate air; air connected to the image border (outside
    the body) is discarded, the two largest remaining components are kept,
    holes are filled and the result is closed with a 3x3 element.
    """
    a = im.as_gray(img)
    air = a < air_cutoff
    labels, stats = im.connected_components(air)
    if not stats:
        return np.zeros(a.shape, dtype=bool)
    border = set(np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]])).tolist())
    inner = [s for s in stats if s.label not in border]
    inner.sort(key=lambda s: (-s.area, s.label))
    keep = [s.label for s in inner[:2]]
    mask = np.isin(labels, keep)
    return im.binary_close(im.fill_holes(mask))


class ExternalMaskSource:
    """Lung masks read from a directory mirroring the scan's file names."""

    kind = "external-directory"

    def __init__(self, directory):
        self.directory = Path(directory)

    def masks(self, scan: ScanVolume) -> list:
        if not self.directory.is_dir():
            raise ScanLoadError(f"mask directory not found: {self.directory}")
        out = []
        for name in scan.names:
            path = self.directory / name
            if not path.exists():
                raise ScanLoadError(f"missing lung mask {path}")
            m = read_mask(path)
            if m.shape != scan.shape:
                raise GeometryError(f"mask {path} has shape {m.shape}, scan slices are {scan.shape}")
            out.append(m)
        return out


class ClassicalMaskSource:
    kind = "classical-fallback"

    def __init__(self, air_cutoff: float = 0.35):
        self.air_cutoff = air_cutoff

    def masks(self, scan: ScanVolume) -> list:
        return [classical_lung_segment(s, self.air_cutoff) for s in scan.slices]


# ---------------------------------------------------------------------------
# Slice gate


@dataclass(frozen=True)
class GateParams:
    min_mask_area: float = 10000
    large_area_fraction: float = 0.7

    def __post_init__(self):
        if not self.min_mask_area > 0:
            raise InvalidParameterError("min_mask_area must be > 0")
        if not 0 < self.large_area_fraction <= 1:
            raise InvalidParameterError("large_area_fraction must lie in (0, 1]")


def gate_by_area(area: int, shape, index: int, n_slices: int, params: GateParams = GateParams()) -> bool:
    """Retention predicate on a lung-mask pixel count.

    The absolute area threshold is defined for 512x512 slices and scaled by
    the actual image area; the large-lung fraction is relative to it.
    """
    image_area = shape[0] * shape[1]
    min_area = params.min_mask_area * image_area / REFERENCE_AREA
    in_middle = 3 * index >= n_slices and 3 * index <= 2 * n_slices
    return bool((area >= min_area and in_middle) or area >= params.large_area_fraction * image_area)


def slice_gate(mask, index: int, n_slices: int, params: GateParams = GateParams()) -> bool:
    m = im.as_mask(mask)
    return gate_by_area(int(m.sum()), m.shape, index, n_slices, params)


# ---------------------------------------------------------------------------
# Left / right


def split_left_right(mask) -> tuple[np.ndarray, np.ndarray]:
    """Split a lung mask into ``(left, right)`` patient-side masks.

    Radiological convention: the patient's right lung appears on the viewer's
    left.  With two or more components each one goes to the side of the
    overall foreground centroid its own centroid lies on; a single component
    is cut at the middle of its bounding box.
    """
    m = im.as_mask(mask)
    left = np.zeros_like(m)
    right = np.zeros_like(m)
    labels, stats = im.connected_components(m)
    if not stats:
        return left, right
    if len(stats) >= 2:
        total = sum(s.area for s in stats)
        cx = sum(s.centroid[0] * s.area for s in stats) / total
        to_right = np.zeros(len(stats) + 1, dtype=bool)
        for s in stats:
            to_right[s.label] = s.centroid[0] < cx
        right = m & to_right[labels]
        left = m & ~right
        return left, right
    x_min, _, x_max, _ = stats[0].bbox
    mid = (x_min + x_max + 1) / 2.0
    cols = np.arange(m.shape[1])[None, :]
    right = m & (cols < mid)
    left = m & ~right
    return left, right
