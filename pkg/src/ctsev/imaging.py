"""Two-dimensional image primitives for the infection pipeline.

Images are plain numpy arrays: a gray image is a 2-D ``float64`` array with
values in ``[0, 1]`` (row-major, ``shape == (height, width)``) and a mask is
a 2-D ``bool`` array of the same geometry.  Every function here is pure.

Border conventions
------------------
Binary morphology treats out-of-bounds pixels as ``False``.  Grayscale
operations (smoothing, grayscale erosion/dilation) replicate edge pixels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateHistogramError, GeometryError, InvalidParameterError

N_BINS = 256


@dataclass(frozen=True)
class StructuringElement:
    """Rectangular structuring element anchored at its center pixel."""

    height: int = 3
    width: int = 3

    def __post_init__(self):
        for name in ("height", "width"):
            v = getattr(self, name)
            if v < 1 or v % 2 == 0:
                raise InvalidParameterError(f"structuring element {name} must be odd and >= 1, got {v}")

    @property
    def radii(self) -> tuple[int, int]:
        return self.height // 2, self.width // 2


RECT3 = StructuringElement(3, 3)


@dataclass(frozen=True)
class HyperbolizationParams:
    c: float = 0.5

    def __post_init__(self):
        if not self.c > 0:
            raise InvalidParameterError(f"hyperbolization constant c must be > 0, got {self.c}")


@dataclass(frozen=True)
class ComponentStats:
    label: int
    area: int
    bbox: tuple[int, int, int, int]  # x_min, y_min, x_max, y_max (inclusive)
    centroid: tuple[float, float]  # x, y


def as_gray(img) -> np.ndarray:
    """Validate and return ``img`` as a float64 gray image."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise GeometryError(f"expected a non-empty 2-D image, got shape {a.shape}")
    if a.size and (np.nanmin(a) < 0.0 or np.nanmax(a) > 1.0 or np.isnan(a).any()):
        raise InvalidParameterError("gray image intensities must lie in [0, 1]")
    return a


def as_mask(mask) -> np.ndarray:
    m = np.asarray(mask)
    if m.ndim != 2:
        raise GeometryError(f"expected a 2-D mask, got shape {m.shape}")
    return m.astype(bool, copy=False)


def check_same_geometry(*arrays) -> None:
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) > 1:
        raise GeometryError(f"geometry mismatch: {sorted(shapes)}")


# ---------------------------------------------------------------------------
# Smoothing


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian kernel with radius ``ceil(3 * sigma)``."""
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be > 0, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _convolve_separable(a: np.ndarray, k: np.ndarray) -> np.ndarray:
    r = len(k) // 2
    h, w = a.shape
    padded = np.pad(a, ((0, 0), (r, r)), mode="edge")
    rows = np.zeros_like(a)
    for i, weight in enumerate(k):
        rows += weight * padded[:, i:i + w]
    padded = np.pad(rows, ((r, r), (0, 0)), mode="edge")
    out = np.zeros_like(a)
    for i, weight in enumerate(k):
        out += weight * padded[i:i + h, :]
    return out


def gaussian_smooth(img, sigma: float = 1.0, mask=None) -> np.ndarray:
    """Separable Gaussian blur with edge replication, clamped to ``[0, 1]``.

    If ``mask`` is given the blur is a normalized convolution restricted to the
    mask: pixels outside it neither contribute nor receive a value (they come
    back as 0).  This keeps a segmented region from being darkened by the
    zeroed background around it.
    """
    a = as_gray(img)
    k = gaussian_kernel(sigma)
    if mask is None:
        return np.clip(_convolve_separable(a, k), 0.0, 1.0)
    m = as_mask(mask)
    check_same_geometry(a, m)
    w = m.astype(np.float64)
    num = _convolve_separable(a * w, k)
    den = _convolve_separable(w, k)
    out = np.zeros_like(a)
    ok = m & (den > 0)
    out[ok] = num[ok] / den[ok]
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Histograms, hyperbolization, OTSU


def intensity_bins(img) -> np.ndarray:
    """Map intensities in [0, 1] to 256 histogram bins.

    ``k / 255`` (an 8-bit source value) lands exactly in bin ``k``.
    """
    a = np.asarray(img, dtype=np.float64)
    return np.clip(np.floor(a * N_BINS), 0, N_BINS - 1).astype(np.int64)


def histogram(img, mask=None) -> np.ndarray:
    b = intensity_bins(img)
    if mask is not None:
        m = as_mask(mask)
        check_same_geometry(b, m)
        b = b[m]
    return np.bincount(b.ravel(), minlength=N_BINS).astype(np.int64)


def histogram_cdf(img, bins: int = N_BINS, mask=None) -> np.ndarray:
    """Normalized cumulative intensity histogram (``normcm``).

    Entry ``k`` is the fraction of pixels whose bin is ``<= k``.  An empty
    pixel set yields all zeros.
    """
    if bins != N_BINS:
        raise InvalidParameterError("only 256-bin histograms are supported")
    h = histogram(img, mask)
    total = h.sum()
    if total == 0:
        return np.zeros(N_BINS)
    cdf = np.cumsum(h) / total
    cdf[-1] = 1.0
    return cdf


def hyperbolize_values(normcm, c: float) -> np.ndarray:
    """Evaluate ``c * (exp(log(1 + 1/c) * normcm) - 1)``."""
    if not c > 0:
        raise InvalidParameterError(f"c must be > 0, got {c}")
    u = np.asarray(normcm, dtype=np.float64)
    out = c * np.expm1(math.log1p(1.0 / c) * u)
    out = np.where(u >= 1.0, 1.0, out)
    return np.clip(out, 0.0, 1.0)


def hyperbolize(img, params: HyperbolizationParams | float = HyperbolizationParams(), mask=None) -> np.ndarray:
    """Histogram hyperbolization of a gray image.

    Each pixel is replaced by the hyperbolic transfer function applied to the
    normalized cumulative histogram at its bin.  With ``mask`` the histogram
    is taken over masked pixels only and unmasked pixels map to 0.
    """
    c = params.c if isinstance(params, HyperbolizationParams) else HyperbolizationParams(float(params)).c
    a = as_gray(img)
    cdf = histogram_cdf(a, mask=mask)
    out = hyperbolize_values(cdf[intensity_bins(a)], c)
    if mask is not None:
        out[~as_mask(mask)] = 0.0
    return out


def otsu_from_histogram(hist) -> tuple[int, float]:
    """Return ``(threshold, between_class_variance)`` for a 256-bin histogram.

    Pixels in bins ``<= threshold`` form the lower class.  The between-class
    variance is compared exactly (integer arithmetic) so ties resolve to the
    smallest maximizing threshold.  The returned variance is in normalized
    intensity units (bin index / 255).
    """
    h = [int(v) for v in np.asarray(hist).ravel()]
    if len(h) != N_BINS:
        raise InvalidParameterError("histogram must have 256 bins")
    if sum(1 for v in h if v > 0) < 2:
        raise DegenerateHistogramError("histogram needs at least two occupied bins")
    n = sum(h)
    s = sum(i * v for i, v in enumerate(h))
    best_t, best_num, best_den = -1, 0, 1
    n0 = s0 = 0
    for t in range(N_BINS - 1):
        n0 += h[t]
        s0 += t * h[t]
        n1 = n - n0
        if n0 == 0 or n1 == 0:
            continue
        # w0 * w1 * (mu0 - mu1)^2  ==  (n*s0 - s*n0)^2 / (n^2 * n0 * n1)
        num = (n * s0 - s * n0) ** 2
        den = n0 * n1
        if best_t < 0 or num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    var = best_num / (best_den * n * n) / (255.0 * 255.0)
    return best_t, var


def otsu_threshold(img, mask=None) -> tuple[int, np.ndarray]:
    """OTSU binarization over a 256-bin histogram.

    Returns the threshold bin and a mask that is true where the pixel bin is
    strictly above it.  With ``mask`` only masked pixels enter the histogram
    and only they can be marked.
    """
    a = np.asarray(img, dtype=np.float64)
    t, _ = otsu_from_histogram(histogram(a, mask))
    out = intensity_bins(a) > t
    if mask is not None:
        out &= as_mask(mask)
    return t, out


# ---------------------------------------------------------------------------
# Morphology


def _shifted_views(padded: np.ndarray, shape, se: StructuringElement):
    h, w = shape
    for dy in range(se.height):
        for dx in range(se.width):
            yield padded[dy:dy + h, dx:dx + w]


def dilate(mask, se: StructuringElement = RECT3) -> np.ndarray:
    m = as_mask(mask)
    ry, rx = se.radii
    padded = np.pad(m, ((ry, ry), (rx, rx)), constant_values=False)
    out = np.zeros_like(m)
    for view in _shifted_views(padded, m.shape, se):
        out |= view
    return out


def erode(mask, se: StructuringElement = RECT3) -> np.ndarray:
    m = as_mask(mask)
    ry, rx = se.radii
    padded = np.pad(m, ((ry, ry), (rx, rx)), constant_values=False)
    out = np.ones_like(m)
    for view in _shifted_views(padded, m.shape, se):
        out &= view
    return out


def binary_open(mask, se: StructuringElement = RECT3) -> np.ndarray:
    return dilate(erode(mask, se), se)


def binary_close(mask, se: StructuringElement = RECT3) -> np.ndarray:
    return erode(dilate(mask, se), se)


# Algorithm-level alias; ``open`` would shadow the builtin.
open_ = binary_open


def grey_erode(img, se: StructuringElement = RECT3) -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    ry, rx = se.radii
    padded = np.pad(a, ((ry, ry), (rx, rx)), mode="edge")
    out = np.full_like(a, np.inf)
    for view in _shifted_views(padded, a.shape, se):
        np.minimum(out, view, out=out)
    return out


def grey_dilate(img, se: StructuringElement = RECT3) -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    ry, rx = se.radii
    padded = np.pad(a, ((ry, ry), (rx, rx)), mode="edge")
    out = np.full_like(a, -np.inf)
    for view in _shifted_views(padded, a.shape, se):
        np.maximum(out, view, out=out)
    return out


def grey_open(img, se: StructuringElement = RECT3) -> np.ndarray:
    return grey_dilate(grey_erode(img, se), se)


def top_hat(img, se: StructuringElement = RECT3) -> np.ndarray:
    """White top-hat: the image minus its grayscale opening, floored at 0."""
    a = as_gray(img)
    return np.maximum(a - grey_open(a, se), 0.0)


# ---------------------------------------------------------------------------
# Connected components


def _row_runs(m: np.ndarray):
    """Foreground runs per row as (row, start, stop) with ``stop`` exclusive."""
    h, w = m.shape
    padded = np.zeros((h, w + 2), dtype=np.int8)
    padded[:, 1:-1] = m
    d = np.diff(padded, axis=1)
    starts = np.argwhere(d == 1)
    stops = np.argwhere(d == -1)
    return starts[:, 0], starts[:, 1], stops[:, 1]


def label(mask, connectivity: int = 8) -> tuple[np.ndarray, int]:
    """Label foreground components; labels are dense ``1..K`` in raster order
    of each component's first pixel."""
    if connectivity not in (4, 8):
        raise InvalidParameterError("connectivity must be 4 or 8")
    m = as_mask(mask)
    rows, starts, stops = _row_runs(m)
    n_runs = len(rows)
    labels = np.zeros(m.shape, dtype=np.int32)
    if n_runs == 0:
        return labels, 0

    parent = list(range(n_runs))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    slack = 1 if connectivity == 8 else 0
    rows_l, starts_l, stops_l = rows.tolist(), starts.tolist(), stops.tolist()
    # runs arrive sorted by row then column; walk adjacent rows with two pointers
    prev_lo = prev_hi = 0
    cur_lo = 0
    while cur_lo < n_runs:
        r = rows_l[cur_lo]
        cur_hi = cur_lo
        while cur_hi < n_runs and rows_l[cur_hi] == r:
            cur_hi += 1
        if prev_hi > prev_lo and rows_l[prev_lo] == r - 1:
            j = prev_lo
            for i in range(cur_lo, cur_hi):
                s, e = starts_l[i] - slack, stops_l[i] + slack
                while j < prev_hi and stops_l[j] <= s:
                    j += 1
                k = j
                while k < prev_hi and starts_l[k] < e:
                    a, b = find(i), find(k)
                    if a != b:
                        if a < b:
                            parent[b] = a
                        else:
                            parent[a] = b
                    k += 1
        prev_lo, prev_hi = cur_lo, cur_hi
        cur_lo = cur_hi

    roots = [find(i) for i in range(n_runs)]
    dense = {}
    for root in roots:
        if root not in dense:
            dense[root] = len(dense) + 1
    for i in range(n_runs):
        labels[rows_l[i], starts_l[i]:stops_l[i]] = dense[roots[i]]
    return labels, len(dense)


def component_stats(labels: np.ndarray, n: int) -> list[ComponentStats]:
    if n == 0:
        return []
    ys, xs = np.nonzero(labels)
    lab = labels[ys, xs]
    area = np.bincount(lab, minlength=n + 1)
    sx = np.bincount(lab, weights=xs, minlength=n + 1)
    sy = np.bincount(lab, weights=ys, minlength=n + 1)
    x_min = np.full(n + 1, np.iinfo(np.int64).max)
    y_min = np.full(n + 1, np.iinfo(np.int64).max)
    x_max = np.full(n + 1, -1)
    y_max = np.full(n + 1, -1)
    np.minimum.at(x_min, lab, xs)
    np.minimum.at(y_min, lab, ys)
    np.maximum.at(x_max, lab, xs)
    np.maximum.at(y_max, lab, ys)
    return [
        ComponentStats(
            label=k,
            area=int(area[k]),
            bbox=(int(x_min[k]), int(y_min[k]), int(x_max[k]), int(y_max[k])),
            centroid=(float(sx[k] / area[k]), float(sy[k] / area[k])),
        )
        for k in range(1, n + 1)
    ]


def connected_components(mask, connectivity: int = 8) -> tuple[np.ndarray, list[ComponentStats]]:
    labels, n = label(mask, connectivity)
    return labels, component_stats(labels, n)


def area_filter(mask, min_area: int) -> np.ndarray:
    """Keep the 8-connected components with at least ``min_area`` pixels."""
    labels, n = label(mask)
    if n == 0:
        return np.zeros_like(labels, dtype=bool)
    areas = np.bincount(labels.ravel(), minlength=n + 1)
    keep = areas >= min_area
    keep[0] = False
    return keep[labels]


def fill_holes(mask) -> np.ndarray:
    """Set background regions not 4-connected to the image border."""
    m = as_mask(mask)
    labels, n = label(~m, connectivity=4)
    if n == 0:
        return m.copy()
    border = np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]]))
    outside = np.zeros(n + 1, dtype=bool)
    outside[border] = True
    outside[0] = True
    return m | ~outside[labels]


def intensity_band_filter(img, lo: float, hi: float) -> np.ndarray:
    """Mask of pixels with ``lo <= value <= hi``."""
    if not (0.0 <= lo < hi <= 1.0):
        raise InvalidParameterError(f"need 0 <= lo < hi <= 1, got lo={lo}, hi={hi}")
    a = np.asarray(img, dtype=np.float64)
    return (a >= lo) & (a <= hi)
