"""Infection-mask extraction for a single slice and the per-scan driver."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imaging as im
from .errors import DegenerateHistogramError, EmptyScanError, GeometryError, InvalidParameterError
from .imageio import write_gray, write_mask
from .lung import GateParams, ScanVolume, slice_gate, split_left_right

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InfectionParams:
    c: float = 0.5
    sigma: float = 1.0
    band_lo: float = 0.08
    band_hi: float = 0.90
    noise_min_area: int = 50
    vessel_min_area: int = 30
    kernel: im.StructuringElement = field(default_factory=lambda: im.RECT3)
    otsu_guard: float = 1e-6

    def __post_init__(self):
        if not (self.c > 0 and self.sigma > 0 and self.noise_min_area > 0 and self.vessel_min_area > 0):
            raise InvalidParameterError("infection parameters must be positive")
        if not 0 <= self.band_lo < self.band_hi <= 1:
            raise InvalidParameterError(f"need 0 <= band_lo < band_hi <= 1, got {self.band_lo}, {self.band_hi}")


@dataclass
class SliceResult:
    index: int
    lung_mask: np.ndarray
    infection_mask: np.ndarray
    left_rate: float
    right_rate: float
    retained: bool

    @property
    def rate(self) -> float:
        """Infected fraction of the whole lung on this slice."""
        lung = int(self.lung_mask.sum())
        return float((self.infection_mask & self.lung_mask).sum() / lung) if lung else 0.0


def guarded_otsu(values, region, guard: float) -> np.ndarray:
    """OTSU over ``region`` pixels; empty mask when the region has no contrast."""
    hist = im.histogram(values, region)
    try:
        t, between = im.otsu_from_histogram(hist)
    except DegenerateHistogramError:
        return np.zeros(region.shape, dtype=bool)
    if between < guard:
        return np.zeros(region.shape, dtype=bool)
    return (im.intensity_bins(values) > t) & region


def segment_infection(img, lung_mask, params: InfectionParams = InfectionParams(), stages: dict | None = None):
    """Infection mask for one slice.

    Steps: mask the slice with the lung, drop pixels outside the intensity
    band, smooth and hyperbolize the remaining region, binarize and open it
    and drop small components, subtract the top-hat vessel mask, fill holes
    and dilate.  The result is clipped to the lung mask.

    The binarization before the opening uses the OTSU threshold of the
    smoothed (pre-enhancement) lung histogram and applies it to the enhanced
    image.  Hyperbolization is a monotone function of the histogram bin, so
    this selects exactly the pixels above that bin; OTSU on the enhanced
    histogram itself would be choosing between values the equalization has
    already spread evenly.

    Work happens on the lung's bounding box plus a margin wider than any
    kernel; everything outside the lung is zero, so the result is identical
    to processing the full frame.  ``stages``, if given, receives the
    intermediate images (full frame).
    """
    a = im.as_gray(img)
    lung = im.as_mask(lung_mask)
    if a.shape != lung.shape:
        raise GeometryError(f"slice shape {a.shape} does not match lung mask shape {lung.shape}")
    out = np.zeros(a.shape, dtype=bool)
    if not lung.any():
        if stages is not None:
            stages.update(seg=np.zeros_like(a), hyper=np.zeros_like(a), vessel=out, infection=out)
        return out
    ys, xs = np.nonzero(lung)
    margin = max(int(np.ceil(3 * params.sigma)), *params.kernel.radii) + 2
    y0, y1 = max(ys.min() - margin, 0), min(ys.max() + margin + 1, a.shape[0])
    x0, x1 = max(xs.min() - margin, 0), min(xs.max() + margin + 1, a.shape[1])
    window = (slice(y0, y1), slice(x0, x1))
    local = {} if stages is not None else None
    out[window] = _segment_region(a[window], lung[window], params, local)
    if stages is not None:
        for key, v in local.items():
            full = np.zeros(a.shape, dtype=v.dtype)
            full[window] = v
            stages[key] = full
    return out


def segment_infection_full_frame(img, lung_mask, params: InfectionParams = InfectionParams()):
    """Reference path without cropping; used to check the cropped one."""
    a = im.as_gray(img)
    lung = im.as_mask(lung_mask)
    if a.shape != lung.shape:
        raise GeometryError(f"slice shape {a.shape} does not match lung mask shape {lung.shape}")
    return _segment_region(a, lung, params, None)


def _segment_region(a, lung, params: InfectionParams, stages):
    se = params.kernel
    empty = np.zeros(a.shape, dtype=bool)

    seg = np.where(lung, a, 0.0)
    band = im.intensity_band_filter(seg, params.band_lo, params.band_hi) & lung
    seg = np.where(band, seg, 0.0)
    if not band.any():
        if stages is not None:
            stages.update(seg=seg, hyper=np.zeros_like(a), vessel=empty, infection=empty)
        return empty

    smooth = im.gaussian_smooth(seg, params.sigma, mask=band)
    hyper = im.hyperbolize(smooth, params.c, mask=band)

    bright = guarded_otsu(smooth, band, params.otsu_guard)
    hyper_new = im.area_filter(im.binary_open(bright, se), params.noise_min_area)

    tophat = im.top_hat(hyper, se)
    vessel = im.area_filter(guarded_otsu(tophat, band, params.otsu_guard), params.vessel_min_area)

    temp = hyper_new & ~vessel
    infection = im.dilate(im.fill_holes(temp), se) & lung

    if stages is not None:
        stages.update(seg=seg, smooth=smooth, hyper=hyper, bright=bright, hyper_new=hyper_new,
                      tophat=tophat, vessel=vessel, infection=infection)
    return infection


def side_rates(infection, lung) -> tuple[float, float]:
    """``(left_rate, right_rate)``: infected fraction of each lung, 0 for an empty side."""
    left, right = split_left_right(lung)
    rates = []
    for side in (left, right):
        n = int(side.sum())
        rates.append(float((infection & side).sum() / n) if n else 0.0)
    return rates[0], rates[1]


def _process_slice(args):
    index, img, lung, n, gate, params, debug_dir = args
    retained = slice_gate(lung, index, n, gate)
    if not retained:
        return SliceResult(index, lung, np.zeros_like(lung), 0.0, 0.0, False)
    stages = {} if debug_dir is not None else None
    infection = segment_infection(img, lung, params, stages)
    if debug_dir is not None:
        _write_debug(Path(debug_dir), index, stages)
    left, right = side_rates(infection, lung)
    return SliceResult(index, lung, infection, left, right, True)


def _write_debug(root: Path, index: int, stages: dict) -> None:
    root.mkdir(parents=True, exist_ok=True)
    write_gray(root / f"{index}_seg.png", stages["seg"])
    write_gray(root / f"{index}_hyper.png", stages["hyper"])
    write_mask(root / f"{index}_vessel.png", stages["vessel"])
    write_mask(root / f"{index}_infection.png", stages["infection"])


def process_scan(scan: ScanVolume, lung_masks, gate: GateParams = GateParams(),
                 params: InfectionParams = InfectionParams(), threads: int = 1, debug_dir=None) -> list[SliceResult]:
    """One :class:`SliceResult` per slice, in slice order.

    ``lung_masks`` is either a list of masks or a mask source object with a
    ``masks(scan)`` method.
    """
    if len(scan) == 0:
        raise EmptyScanError("scan has no slices")
    masks = lung_masks.masks(scan) if hasattr(lung_masks, "masks") else list(lung_masks)
    if len(masks) != len(scan):
        raise GeometryError(f"{len(masks)} lung masks for {len(scan)} slices")
    n = len(scan)
    jobs = [(i, img, im.as_mask(m), n, gate, params, debug_dir) for i, (img, m) in enumerate(zip(scan.slices, masks))]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(_process_slice, jobs))
    else:
        results = [_process_slice(j) for j in jobs]
    log.debug("%s: %d/%d slices retained", scan.patient_id, sum(r.retained for r in results), n)
    return results


def scan_infection_rate(results: list[SliceResult]) -> float:
    """Mean whole-lung infection rate over retained slices."""
    kept = [r.rate for r in results if r.retained]
    if not kept:
        raise EmptyScanError("no retained slices")
    return float(np.mean(kept))
