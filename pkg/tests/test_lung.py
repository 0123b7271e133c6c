import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ctsev.errors import GeometryError, InvalidParameterError, ScanLoadError
from ctsev.imageio import write_gray, write_mask
from ctsev.lung import (
    ClassicalMaskSource,
    ExternalMaskSource,
    GateParams,
    ScanVolume,
    classical_lung_segment,
    gate_by_area,
    load_scan,
    slice_gate,
    split_left_right,
)
from ctsev.phantom import PhantomSpec, generate_phantom
from ctsev.severity import SeverityClass
from oracles import gate_oracle


class TestLoadScan:
    def test_numeric_order(self, tmp_path):
        for k in (10, 2, 1):
            write_gray(tmp_path / f"{k}.png", np.full((8, 8), k / 20))
        scan = load_scan(tmp_path)
        assert scan.names == ["1.png", "2.png", "10.png"]
        assert len(scan) == 3 and scan.patient_id == tmp_path.name
        np.testing.assert_allclose(scan.slices[2], round(0.5 * 255) / 255)

    def test_twenty_seven_slices(self, tmp_path):
        for k in range(27):
            write_gray(tmp_path / f"{k}.png", np.zeros((4, 4)))
        assert len(load_scan(tmp_path)) == 27

    def test_mixed_geometry(self, tmp_path):
        write_gray(tmp_path / "0.png", np.zeros((16, 16)))
        write_gray(tmp_path / "1.png", np.zeros((8, 8)))
        with pytest.raises(GeometryError):
            load_scan(tmp_path)

    def test_missing_and_empty(self, tmp_path):
        with pytest.raises(ScanLoadError, match="scan directory not found"):
            load_scan(tmp_path / "nope")
        with pytest.raises(ScanLoadError):
            load_scan(tmp_path)

    def test_undecodable(self, tmp_path):
        (tmp_path / "0.png").write_bytes(b"not an image")
        with pytest.raises(ScanLoadError):
            load_scan(tmp_path)

    def test_pgm_input(self, tmp_path):
        data = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
        (tmp_path / "0.pgm").write_bytes(b"P5\n4 3\n255\n" + data.tobytes())
        scan = load_scan(tmp_path)
        np.testing.assert_allclose(scan.slices[0], data / 255.0)


class TestMaskSources:
    def test_external_matches_names(self, tmp_path):
        (tmp_path / "s").mkdir()
        (tmp_path / "m").mkdir()
        m = np.zeros((8, 8), bool)
        m[2:5, 2:5] = True
        for k in range(3):
            write_gray(tmp_path / "s" / f"{k}.png", np.zeros((8, 8)))
            write_mask(tmp_path / "m" / f"{k}.png", m)
        masks = ExternalMaskSource(tmp_path / "m").masks(load_scan(tmp_path / "s"))
        assert len(masks) == 3
        assert all((x == m).all() for x in masks)

    def test_external_geometry_and_missing(self, tmp_path):
        (tmp_path / "s").mkdir()
        (tmp_path / "m").mkdir()
        write_gray(tmp_path / "s" / "0.png", np.zeros((8, 8)))
        write_gray(tmp_path / "s" / "1.png", np.zeros((8, 8)))
        write_mask(tmp_path / "m" / "0.png", np.zeros((4, 4), bool))
        scan = load_scan(tmp_path / "s")
        with pytest.raises(GeometryError):
            ExternalMaskSource(tmp_path / "m").masks(scan)
        write_mask(tmp_path / "m" / "0.png", np.zeros((8, 8), bool))
        with pytest.raises(ScanLoadError, match="missing"):
            ExternalMaskSource(tmp_path / "m").masks(scan)

    def test_classical_covers_phantom_lungs(self):
        # lesion-free lungs: GGO sits above the air cutoff and is not lung to this segmenter
        ph = generate_phantom(PhantomSpec(SeverityClass.MILD, 0.0, n_slices=9, size=256, seed=3))
        for img, truth in zip(ph.scan.slices, ph.lung_masks):
            mask = classical_lung_segment(img)
            assert (mask & truth).sum() >= 0.95 * truth.sum()
        masks = ClassicalMaskSource().masks(ph.scan)
        assert len(masks) == len(ph.scan) and masks[0].shape == ph.scan.shape

    @pytest.mark.parametrize("value", [0.0, 1.0])
    def test_classical_uniform_image_is_empty(self, value):
        assert not classical_lung_segment(np.full((40, 40), value)).any()


class TestGate:
    @pytest.mark.parametrize("area", [0, 9999, 10000, 183500, 183501])
    @pytest.mark.parametrize("n", [27, 100, 702])
    def test_matches_oracle(self, area, n):
        for index in range(n):
            assert gate_by_area(area, (512, 512), index, n) == gate_oracle(area, index, n)

    def test_examples(self):
        assert gate_by_area(10000, (512, 512), 50, 100)
        assert not gate_by_area(9999, (512, 512), 50, 100)
        assert gate_by_area(183501, (512, 512), 0, 100)
        assert not gate_by_area(183500, (512, 512), 0, 100)

    def test_scales_with_resolution(self):
        for area in (2499, 2500, 45875, 45876):
            for index in (0, 10, 20, 29):
                assert gate_by_area(area, (256, 256), index, 30) == gate_oracle(area, index, 30, 256, 256)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.bool_, (12, 12)), arrays(np.bool_, (12, 12)), st.integers(0, 9))
    def test_monotone_under_superset(self, a, b, index):
        p = GateParams(min_mask_area=20 * 512 * 512 / 144, large_area_fraction=0.5)
        if slice_gate(a, index, 10, p):
            assert slice_gate(a | b, index, 10, p)

    def test_bad_params(self):
        with pytest.raises(InvalidParameterError):
            GateParams(min_mask_area=0)
        with pytest.raises(InvalidParameterError):
            GateParams(large_area_fraction=1.5)


class TestSplit:
    def test_two_blobs(self):
        m = np.zeros((64, 512), bool)
        m[10:30, 90:111] = True
        m[10:30, 390:411] = True
        left, right = split_left_right(m)
        assert right[:, :256].sum() == m[:, :256].sum() and not right[:, 256:].any()
        assert left[:, 256:].sum() == m[:, 256:].sum() and not left[:, :256].any()

    def test_empty(self):
        left, right = split_left_right(np.zeros((5, 5), bool))
        assert not left.any() and not right.any()

    def test_single_blob_split_at_bbox_midline(self):
        m = np.zeros((10, 20), bool)
        m[2:8, 3:14] = True  # columns 3..13, midline (3 + 14) / 2 = 8.5
        left, right = split_left_right(m)
        cols = np.arange(20)[None, :].repeat(10, 0)
        np.testing.assert_array_equal(right, m & (cols < 8.5))
        np.testing.assert_array_equal(left, m & (cols >= 8.5))

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.bool_, (16, 16)))
    def test_partition(self, m):
        left, right = split_left_right(m)
        np.testing.assert_array_equal(left | right, m)
        assert not (left & right).any()


def test_scan_volume_requires_slices():
    with pytest.raises(ScanLoadError):
        ScanVolume("x", [])
