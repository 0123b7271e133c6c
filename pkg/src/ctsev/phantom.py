"""Synthetic lung phantoms with planted ground truth.

A phantom slice is a bright body ellipse holding two dark lung ellipses.
Thin bright curvilinear vessels run through the lungs and mid-gray GGO-like
blobs cover a controlled fraction of the lung pixels.  Lung size follows the
slice axis (small at apex and base), involvement varies +/-10% per slice and
is split unevenly between the two lungs.  Images are quantized to 8 bits so
what is generated in memory is exactly what lands on disk.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import PhantomSpecError
from .imageio import quantize, write_gray, write_mask
from .lung import ScanVolume
from .severity import CLASSES, SeverityClass, class_for_fraction

MAX_INVOLVEMENT = 0.98
# Corpus sampling stays below this: per-slice involvement near 1 leaves no
# normal-tissue class for the OTSU split (see segment_infection).
CRITICAL_SAMPLING_CAP = 0.90

BACKGROUND = 0.02
BODY = 0.70
PARENCHYMA = 0.15
VESSEL = 0.60
GGO = 0.45


@dataclass(frozen=True)
class PhantomSpec:
    severity: SeverityClass
    involvement: float
    n_slices: int = 32
    size: int = 256
    vessel_density: int = 2
    noise: float = 0.01
    seed: int = 0
    slice_variation: float = 0.10
    asymmetry: float = 0.20

    def validate(self) -> None:
        f = self.involvement
        if not 0.0 <= f <= MAX_INVOLVEMENT:
            raise PhantomSpecError(f"involvement {f} is infeasible (must lie in [0, {MAX_INVOLVEMENT}])")
        if class_for_fraction(f) != SeverityClass(self.severity):
            lo, hi = SeverityClass(self.severity).band
            raise PhantomSpecError(f"involvement {f} outside the {SeverityClass(self.severity).name} band [{lo}, {hi})")
        if self.n_slices < 1 or self.size < 32:
            raise PhantomSpecError("need n_slices >= 1 and size >= 32")
        if self.noise < 0 or self.vessel_density < 0:
            raise PhantomSpecError("noise and vessel density must be non-negative")


@dataclass
class PhantomScan:
    scan: ScanVolume
    lung_masks: list
    infection_masks: list
    label: SeverityClass
    spec: PhantomSpec

    def planted_fraction(self) -> float:
        lung = sum(int(m.sum()) for m in self.lung_masks)
        inf = sum(int(m.sum()) for m in self.infection_masks)
        return inf / lung if lung else 0.0

    def slice_fractions(self) -> np.ndarray:
        return np.array([i.sum() / max(int(l.sum()), 1) for l, i in zip(self.lung_masks, self.infection_masks)])


def _ellipse(shape, cy, cx, ry, rx):
    out = np.zeros(shape, dtype=bool)
    y0, y1 = max(int(cy - ry) - 1, 0), min(int(cy + ry) + 2, shape[0])
    x0, x1 = max(int(cx - rx) - 1, 0), min(int(cx + rx) + 2, shape[1])
    if y0 >= y1 or x0 >= x1:
        return out
    yy = np.arange(y0, y1)[:, None]
    xx = np.arange(x0, x1)[None, :]
    out[y0:y1, x0:x1] = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    return out


def _lung_scale(i: int, n: int) -> float:
    z = 0.5 if n == 1 else i / (n - 1)
    return 0.35 + 0.65 * math.sqrt(math.sin(math.pi * z))


def _allocate(desired: np.ndarray, caps: np.ndarray, total: int) -> np.ndarray:
    """Integer allocation close to ``desired``, within ``caps``, summing to ``total``."""
    if total > caps.sum():
        raise PhantomSpecError("requested involvement exceeds the available lung pixels")
    alloc = np.minimum(desired.astype(float), caps)
    for _ in range(50):
        gap = total - alloc.sum()
        free = alloc < caps - 1e-9 if gap > 0 else alloc > 1e-9
        if abs(gap) < 1e-9 or not free.any():
            break
        alloc[free] += gap * alloc[free].clip(1e-9) / alloc[free].clip(1e-9).sum()
        alloc = np.clip(alloc, 0, caps)
    out = np.floor(alloc).astype(int)
    rest = total - out.sum()
    order = np.argsort(-(alloc - out), kind="stable")
    for k in order:
        if rest <= 0:
            break
        if out[k] < caps[k]:
            out[k] += 1
            rest -= 1
    if out.sum() != total:
        raise PhantomSpecError("could not allocate the requested involvement")
    return out


def _draw_vessels(shape, lung, rng, count, hilum):
    vessels = np.zeros(shape, dtype=bool)
    if count == 0 or not lung.any():
        return vessels
    # keep vessels off the lung boundary
    inner = lung.copy()
    for _ in range(2):
        inner[1:-1, 1:-1] &= inner[:-2, 1:-1] & inner[2:, 1:-1] & inner[1:-1, :-2] & inner[1:-1, 2:]
        inner[0, :] = inner[-1, :] = inner[:, 0] = inner[:, -1] = False
    ys, xs = np.nonzero(inner)
    if len(ys) == 0:
        return vessels
    t = np.linspace(0.0, 1.0, 600)[:, None]
    for _ in range(count):
        k = rng.integers(len(ys))
        end = np.array([ys[k], xs[k]], dtype=float)
        start = np.asarray(hilum, dtype=float) + rng.normal(0, 0.015 * shape[0], 2)
        bend = (start + end) / 2 + rng.normal(0, 0.04 * shape[0], 2)
        pts = (1 - t) ** 2 * start + 2 * (1 - t) * t * bend + t ** 2 * end
        tangent = np.gradient(pts, axis=0)
        py = np.rint(pts[:, 0]).astype(int)
        px = np.rint(pts[:, 1]).astype(int)
        # 1-px centerline plus one neighbour across the local direction: a 2-px line
        horizontal = np.abs(tangent[:, 1]) >= np.abs(tangent[:, 0])
        qy = np.where(horizontal, py + 1, py)
        qx = np.where(horizontal, px, px + 1)
        for yy, xx in ((py, px), (qy, qx)):
            vessels[np.clip(yy, 0, shape[0] - 1), np.clip(xx, 0, shape[1] - 1)] = True
    return vessels & inner


def generate_phantom(spec: PhantomSpec) -> PhantomScan:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, size = spec.n_slices, spec.size
    shape = (size, size)
    c = size / 2.0

    body = _ellipse(shape, c, c, 0.38 * size, 0.45 * size)
    jitter = rng.uniform(0.95, 1.05, 4)
    # viewer-left lung is the patient's right lung, slightly larger
    lungs_geo = [
        dict(cy=c, cx=0.30 * size, ry=0.26 * size * jitter[0], rx=0.13 * size * jitter[1]),
        dict(cy=c, cx=0.70 * size, ry=0.25 * size * jitter[2], rx=0.12 * size * jitter[3]),
    ]
    # lesion seeds in lung-normalized polar coordinates, fixed for the whole scan
    seeds = []
    for _ in lungs_geo:
        k = int(rng.integers(1, 4))
        r = np.sqrt(rng.uniform(0, 0.8, k))
        th = rng.uniform(0, 2 * math.pi, k)
        seeds.append((r * np.sin(th), r * np.cos(th), rng.uniform(0.7, 1.3, k)))
    ggo_level = GGO + rng.uniform(-0.03, 0.03)
    asym = rng.uniform(-spec.asymmetry, spec.asymmetry)
    delta = rng.uniform(-spec.slice_variation, spec.slice_variation, n)

    lung_side = []  # per slice: [right_mask, left_mask]
    vessel_side = []
    for i in range(n):
        s = _lung_scale(i, n)
        sides, vsides = [], []
        for g in lungs_geo:
            m = _ellipse(shape, g["cy"], g["cx"], g["ry"] * s, g["rx"] * s) & body
            hilum = (g["cy"], g["cx"] + (g["rx"] * s * 0.8 if g["cx"] < c else -g["rx"] * s * 0.8))
            v = _draw_vessels(shape, m, rng, spec.vessel_density, hilum)
            sides.append(m)
            vsides.append(v)
        lung_side.append(sides)
        vessel_side.append(vsides)

    areas = np.array([[m.sum() for m in sides] for sides in lung_side], dtype=float)  # (n, 2)
    caps = np.array([[(m & ~v).sum() for m, v in zip(ls, vs)] for ls, vs in zip(lung_side, vessel_side)], dtype=float)
    f = spec.involvement
    area_r, area_l = areas[:, 0].sum(), areas[:, 1].sum()
    f_r = f * (1 + asym)
    f_l = (f * (area_r + area_l) - f_r * area_r) / area_l
    desired = np.stack([f_r * areas[:, 0], f_l * areas[:, 1]], axis=1) * (1 + delta)[:, None]
    total = int(round(f * areas.sum()))
    counts = _allocate(desired.ravel(), caps.ravel(), total).reshape(n, 2)

    slices, lung_masks, inf_masks = [], [], []
    for i in range(n):
        s = _lung_scale(i, n)
        img = np.full(shape, BACKGROUND)
        img[body] = BODY
        infection = np.zeros(shape, dtype=bool)
        lung = np.zeros(shape, dtype=bool)
        for side, g in enumerate(lungs_geo):
            m, v = lung_side[i][side], vessel_side[i][side]
            lung |= m
            img[m] = PARENCHYMA
            want = counts[i, side]
            if want:
                ys, xs = np.nonzero(m & ~v)
                uy = (ys - g["cy"]) / (g["ry"] * s)
                ux = (xs - g["cx"]) / (g["rx"] * s)
                sy, sx, w = seeds[side]
                d = np.min(np.hypot(uy[:, None] - sy[None, :], ux[:, None] - sx[None, :]) / w[None, :], axis=1)
                pick = np.argsort(d, kind="stable")[:want]
                infection[ys[pick], xs[pick]] = True
            img[infection & m] = ggo_level
            img[v] = VESSEL
        if spec.noise > 0:
            img = img + rng.normal(0.0, spec.noise, shape)
        slices.append(quantize(np.clip(img, 0.0, 1.0)))
        lung_masks.append(lung)
        inf_masks.append(infection)

    pid = f"phantom_seed{spec.seed}"
    scan = ScanVolume(pid, slices, [f"{i}.png" for i in range(n)])
    return PhantomScan(scan, lung_masks, inf_masks, SeverityClass(spec.severity), spec)


# ---------------------------------------------------------------------------
# Corpora


@dataclass(frozen=True)
class CorpusEntry:
    patient_id: str
    spec: PhantomSpec


def corpus_specs(per_class: int, seed: int = 0, n_slices=(27, 36), size: int = 512, noise: float = 0.01,
                 vessel_density: int = 2) -> list[CorpusEntry]:
    """Balanced corpus: ``per_class`` scans per severity class, interleaved.

    Involvement is drawn uniformly inside each class band (Critical capped at
    0.90), slice counts uniformly in ``n_slices`` (inclusive).
    """
    if per_class < 1:
        raise PhantomSpecError("per_class must be >= 1")
    ss = np.random.SeedSequence(seed)
    rng = np.random.default_rng(ss.spawn(1)[0])
    child_seeds = ss.generate_state(per_class * len(CLASSES), dtype=np.uint32)
    entries = []
    for i in range(per_class * len(CLASSES)):
        cls = CLASSES[i % len(CLASSES)]
        lo, hi = cls.band
        hi = min(hi, CRITICAL_SAMPLING_CAP)
        f = float(rng.uniform(lo, hi))
        n = int(rng.integers(n_slices[0], n_slices[1] + 1))
        spec = PhantomSpec(cls, f, n_slices=n, size=size, noise=noise, vessel_density=vessel_density,
                           seed=int(child_seeds[i]))
        entries.append(CorpusEntry(f"phantom_{i:04d}", spec))
    return entries


def write_phantom(phantom: PhantomScan, root, patient_id: str) -> None:
    root = Path(root)
    dirs = {k: root / k / patient_id for k in ("scans", "lungs", "infection")}
    for d in dirs.values():
        d.mkdir(parents=True, exist_ok=True)
    for name, img, lung, inf in zip(phantom.scan.names, phantom.scan.slices, phantom.lung_masks,
                                    phantom.infection_masks):
        write_gray(dirs["scans"] / name, img)
        write_mask(dirs["lungs"] / name, lung)
        write_mask(dirs["infection"] / name, inf)


MANIFEST_FIELDS = ["patient_id", "label", "involvement", "seed", "n_slices", "planted_fraction"]


def write_corpus(root, entries: list[CorpusEntry], threads: int = 1) -> Path:
    """Generate and write every entry; returns the manifest path.

    Layout: ``scans/<id>/<k>.png``, ``lungs/<id>/<k>.png`` (the external mask
    source format), ``infection/<id>/<k>.png`` and ``manifest.csv``.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)

    def work(entry):
        ph = generate_phantom(entry.spec)
        write_phantom(ph, root, entry.patient_id)
        return ph.planted_fraction()

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            planted = list(pool.map(work, entries))
    else:
        planted = [work(e) for e in entries]

    manifest = root / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_FIELDS)
        for e, p in zip(entries, planted):
            w.writerow([e.patient_id, int(e.spec.severity), repr(e.spec.involvement), e.spec.seed,
                        e.spec.n_slices, repr(p)])
    return manifest


def read_manifest(path) -> dict[str, dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {
        r["patient_id"]: {
            "label": int(r["label"]),
            "involvement": float(r["involvement"]),
            "seed": int(r["seed"]),
            "n_slices": int(r["n_slices"]),
            "planted_fraction": float(r["planted_fraction"]),
        }
        for r in rows
    }
