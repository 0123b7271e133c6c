"""Reading and writing 8-bit single-channel slices and masks."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ScanLoadError

IMAGE_SUFFIXES = (".png", ".pgm", ".jpg", ".jpeg")


def read_gray(path) -> np.ndarray:
    """Decode an image file to a float image in [0, 1] (value / 255)."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            data = np.asarray(im.convert("L"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ScanLoadError(f"cannot decode {path}: {exc}") from exc
    return data.astype(np.float64) / 255.0


def read_mask(path) -> np.ndarray:
    """Nonzero pixels are foreground."""
    return read_gray(path) > 0


def to_uint8(img) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def quantize(img) -> np.ndarray:
    """Round-trip an image through 8-bit storage."""
    return to_uint8(img).astype(np.float64) / 255.0


# zlib level 1: noisy slices compress poorly anyway and level 6 is ~2x slower
PNG_COMPRESS_LEVEL = 1


def write_gray(path, img) -> None:
    Image.fromarray(to_uint8(img)).save(path, compress_level=PNG_COMPRESS_LEVEL)


def write_mask(path, mask) -> None:
    data = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(data).save(path, compress_level=PNG_COMPRESS_LEVEL)
