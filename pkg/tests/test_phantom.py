import numpy as np
import pytest

from ctsev.errors import PhantomSpecError
from ctsev.lung import ExternalMaskSource, load_scan
from ctsev.phantom import (
    CRITICAL_SAMPLING_CAP,
    PhantomSpec,
    corpus_specs,
    generate_phantom,
    read_manifest,
    write_corpus,
)
from ctsev.severity import SeverityClass


def small(severity, f, **kw):
    kw.setdefault("n_slices", 8)
    kw.setdefault("size", 256)
    return PhantomSpec(severity, f, **kw)


def test_deterministic_per_seed():
    a = generate_phantom(small(SeverityClass.MILD, 0.10, seed=7))
    b = generate_phantom(small(SeverityClass.MILD, 0.10, seed=7))
    for x, y in zip(a.scan.slices, b.scan.slices):
        np.testing.assert_array_equal(x, y)
    c = generate_phantom(small(SeverityClass.MILD, 0.10, seed=8))
    assert any((x != y).any() for x, y in zip(a.scan.slices, c.scan.slices))


@pytest.mark.parametrize("severity,f", [(SeverityClass.MILD, 0.1), (SeverityClass.MODERATE, 0.4),
                                        (SeverityClass.SEVERE, 0.65), (SeverityClass.CRITICAL, 0.90)])
def test_planted_fraction_and_containment(severity, f):
    ph = generate_phantom(small(severity, f, seed=11))
    assert abs(ph.planted_fraction() - f) <= 0.02
    for lung, inf in zip(ph.lung_masks, ph.infection_masks):
        assert not (inf & ~lung).any()
    assert ph.label == severity


def test_critical_at_ninety_percent():
    ph = generate_phantom(small(SeverityClass.CRITICAL, 0.90, seed=5))
    assert 0.88 <= ph.planted_fraction() <= 0.92


def test_slice_variation_present():
    ph = generate_phantom(small(SeverityClass.SEVERE, 0.6, n_slices=12, seed=1))
    fr = ph.slice_fractions()
    assert fr.std() > 0


@pytest.mark.parametrize("severity,f", [(SeverityClass.MILD, 0.3), (SeverityClass.CRITICAL, 0.5),
                                        (SeverityClass.CRITICAL, 0.99), (SeverityClass.MILD, -0.1)])
def test_invalid_specs(severity, f):
    with pytest.raises(PhantomSpecError):
        generate_phantom(small(severity, f))


def test_images_are_eight_bit():
    ph = generate_phantom(small(SeverityClass.MODERATE, 0.3, n_slices=3))
    for img in ph.scan.slices:
        np.testing.assert_array_equal(img * 255, np.round(img * 255))
        assert img.min() >= 0 and img.max() <= 1


def test_corpus_balanced_and_in_band():
    entries = corpus_specs(50, seed=3)
    assert len(entries) == 200
    labels = [int(e.spec.severity) for e in entries]
    assert np.bincount(labels, minlength=5)[1:].tolist() == [50, 50, 50, 50]
    for e in entries:
        lo, hi = SeverityClass(e.spec.severity).band
        assert lo <= e.spec.involvement < min(hi, CRITICAL_SAMPLING_CAP)
        assert 27 <= e.spec.n_slices <= 36
    again = corpus_specs(50, seed=3)
    assert [e.spec for e in again] == [e.spec for e in entries]


def test_corpus_on_disk_roundtrip(tmp_path):
    entries = corpus_specs(1, seed=9, n_slices=(4, 5), size=128)
    manifest = write_corpus(tmp_path, entries)
    rows = read_manifest(manifest)
    assert sorted(rows) == [e.patient_id for e in entries]
    e = entries[2]
    scan = load_scan(tmp_path / "scans" / e.patient_id)
    ph = generate_phantom(e.spec)
    assert len(scan) == e.spec.n_slices
    for a, b in zip(scan.slices, ph.scan.slices):
        np.testing.assert_array_equal(a, b)
    masks = ExternalMaskSource(tmp_path / "lungs" / e.patient_id).masks(scan)
    for a, b in zip(masks, ph.lung_masks):
        np.testing.assert_array_equal(a, b)
    assert rows[e.patient_id]["planted_fraction"] == pytest.approx(ph.planted_fraction(), abs=0)
    first = manifest.read_bytes()
    write_corpus(tmp_path, entries, threads=2)
    assert manifest.read_bytes() == first
