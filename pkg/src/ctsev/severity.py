"""Severity classes and their parenchymal-involvement bands."""
from enum import IntEnum


class SeverityClass(IntEnum):
    MILD = 1
    MODERATE = 2
    SEVERE = 3
    CRITICAL = 4

    @property
    def band(self) -> tuple[float, float]:
        return BANDS[self]

    @property
    def short(self) -> str:
        return SHORT_NAMES[self]


# [lo, hi) involvement fractions; the top band is closed at 1.
BANDS = {
    SeverityClass.MILD: (0.0, 0.25),
    SeverityClass.MODERATE: (0.25, 0.50),
    SeverityClass.SEVERE: (0.50, 0.75),
    SeverityClass.CRITICAL: (0.75, 1.0),
}

SHORT_NAMES = {
    SeverityClass.MILD: "Mi",
    SeverityClass.MODERATE: "Mo",
    SeverityClass.SEVERE: "Se",
    SeverityClass.CRITICAL: "Cr",
}

CLASSES = tuple(SeverityClass)
N_CLASSES = len(CLASSES)


def class_for_fraction(f: float) -> SeverityClass:
    for cls in CLASSES:
        lo, hi = cls.band
        if lo <= f < hi:
            return cls
    if f == 1.0:
        return SeverityClass.CRITICAL
    raise ValueError(f"involvement fraction {f} outside [0, 1]")
