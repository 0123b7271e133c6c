import numpy as np
import pytest

from ctsev.errors import EmptyScanError, GeometryError, InvalidParameterError
from ctsev.infection import (
    InfectionParams,
    process_scan,
    scan_infection_rate,
    segment_infection,
    segment_infection_full_frame,
    side_rates,
)
from ctsev.lung import GateParams, ScanVolume, gate_by_area
from ctsev.phantom import PhantomSpec, generate_phantom
from ctsev.severity import SeverityClass

from oracles import gate_oracle


def ellipse(shape, cy, cx, ry, rx):
    yy, xx = np.mgrid[: shape[0], : shape[1]]
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1


def dice(a, b):
    return 2 * (a & b).sum() / (a.sum() + b.sum())


def vessel_slice(rng):
    """Lung with one planted 2000-px GGO disk and four straight 2-px vessels."""
    shape = (256, 256)
    lung = ellipse(shape, 128, 128, 100, 80)
    img = np.full(shape, 0.70)
    img[lung] = 0.15
    yy, xx = np.mgrid[:256, :256]
    blob = ((yy - 100) ** 2 + (xx - 110) ** 2 <= 25.23 ** 2) & lung
    assert abs(int(blob.sum()) - 2000) <= 10
    img[blob] = 0.45
    vessel = np.zeros(shape, bool)
    for x0 in (75, 175):
        vessel[60:200, x0:x0 + 2] = True
    for y0 in (170, 190):
        vessel[y0:y0 + 2, 80:180] = True
    vessel &= lung & ~blob
    img[vessel] = 0.60
    img = np.clip(img + rng.normal(0, 0.01, shape), 0, 1)
    return np.round(img * 255) / 255, lung, blob, vessel


class TestSegmentInfection:
    def test_empty_lung(self, rng):
        out = segment_infection(rng.uniform(size=(32, 32)), np.zeros((32, 32), bool))
        assert out.shape == (32, 32) and not out.any()

    def test_geometry_mismatch(self):
        with pytest.raises(GeometryError):
            segment_infection(np.zeros((8, 8)), np.zeros((8, 9), bool))

    def test_blob_found_vessels_rejected(self, rng):
        img, lung, blob, vessel = vessel_slice(rng)
        out = segment_infection(img, lung)
        assert dice(out, blob) >= 0.7
        assert (out & vessel).sum() < 0.2 * vessel.sum()

    def test_uniform_lung_near_empty(self):
        shape = (128, 128)
        lung = ellipse(shape, 64, 64, 50, 40)
        img = np.where(lung, 0.45, 0.7)
        out = segment_infection(img, lung)
        assert out.sum() / lung.sum() <= 0.05

    def test_contained_in_lung(self, rng):
        img, lung, *_ = vessel_slice(rng)
        out = segment_infection(img, lung)
        assert not (out & ~lung).any()

    def test_cropped_equals_full_frame(self):
        ph = generate_phantom(PhantomSpec(SeverityClass.SEVERE, 0.6, n_slices=6, size=192, seed=4))
        for img, lung in zip(ph.scan.slices, ph.lung_masks):
            np.testing.assert_array_equal(segment_infection(img, lung), segment_infection_full_frame(img, lung))

    def test_stages_exposed(self, rng):
        img, lung, *_ = vessel_slice(rng)
        stages = {}
        out = segment_infection(img, lung, stages=stages)
        for key in ("seg", "hyper", "vessel", "infection"):
            assert stages[key].shape == img.shape
        np.testing.assert_array_equal(stages["infection"], out)
        assert (stages["hyper"][~lung] == 0).all()

    def test_bad_params(self):
        with pytest.raises(InvalidParameterError):
            InfectionParams(band_lo=0.9, band_hi=0.1)
        with pytest.raises(InvalidParameterError):
            InfectionParams(c=0)


class TestProcessScan:
    @pytest.fixture(scope="class")
    @staticmethod
    def phantom():
        return generate_phantom(PhantomSpec(SeverityClass.SEVERE, 0.60, n_slices=27, size=512, seed=21))

    def test_gate_and_order(self, phantom):
        results = process_scan(phantom.scan, phantom.lung_masks)
        assert [r.index for r in results] == list(range(27))
        h, w = phantom.scan.shape
        for r, m in zip(results, phantom.lung_masks):
            assert r.retained == gate_oracle(int(m.sum()), r.index, 27, h, w)
            assert 0 <= r.left_rate <= 1 and 0 <= r.right_rate <= 1
            assert not (r.infection_mask & ~r.lung_mask).any()
            if not r.retained:
                assert not r.infection_mask.any() and r.left_rate == r.right_rate == 0

    def test_scan_rate_close_to_planted(self, phantom):
        rate = scan_infection_rate(process_scan(phantom.scan, phantom.lung_masks))
        assert abs(rate - 0.60) <= 0.05

    def test_threads_do_not_change_results(self, phantom):
        a = process_scan(phantom.scan, phantom.lung_masks, threads=1)
        b = process_scan(phantom.scan, phantom.lung_masks, threads=3)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.infection_mask, y.infection_mask)
            assert (x.left_rate, x.right_rate, x.retained) == (y.left_rate, y.right_rate, y.retained)

    def test_debug_dir(self, phantom, tmp_path):
        scan = ScanVolume("p", phantom.scan.slices[10:14])
        results = process_scan(scan, phantom.lung_masks[10:14], GateParams(min_mask_area=1), debug_dir=tmp_path)
        kept = [r.index for r in results if r.retained]
        assert kept
        for i in kept:
            for stage in ("seg", "hyper", "vessel", "infection"):
                assert (tmp_path / f"{i}_{stage}.png").exists()

    def test_all_rejected(self, phantom):
        gate = GateParams(min_mask_area=10 ** 9, large_area_fraction=1.0)
        results = process_scan(phantom.scan, phantom.lung_masks, gate)
        assert not any(r.retained for r in results)
        with pytest.raises(EmptyScanError):
            scan_infection_rate(results)

    def test_mask_count_mismatch(self, phantom):
        with pytest.raises(GeometryError):
            process_scan(phantom.scan, phantom.lung_masks[:-1])


def test_rates_increase_with_severity():
    rates = []
    for sev, f in [(SeverityClass.MILD, 0.10), (SeverityClass.MODERATE, 0.40),
                   (SeverityClass.SEVERE, 0.65), (SeverityClass.CRITICAL, 0.90)]:
        ph = generate_phantom(PhantomSpec(sev, f, n_slices=12, size=256, seed=31))
        rates.append(scan_infection_rate(process_scan(ph.scan, ph.lung_masks)))
    assert all(a < b for a, b in zip(rates, rates[1:]))


def test_side_rates_empty_side():
    lung = np.zeros((10, 20), bool)
    lung[2:8, 2:6] = True
    lung[2:8, 12:16] = True
    inf = np.zeros_like(lung)
    inf[2:8, 2:6] = True  # whole right (viewer-left) lung
    left, right = side_rates(inf, lung)
    assert (left, right) == (0.0, 1.0)
    assert side_rates(np.zeros((4, 4), bool), np.zeros((4, 4), bool)) == (0.0, 0.0)


def test_gate_oracle_agrees_on_phantom_sizes():
    for area in (0, 2499, 2500, 45875, 45876):
        for idx in range(27):
            assert gate_by_area(area, (256, 256), idx, 27) == gate_oracle(area, idx, 27, 256, 256)
