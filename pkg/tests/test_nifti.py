from __future__ import annotations

import struct

import numpy as np
import pytest

from panct.nifti import (
    DimsMismatchError,
    HEADER_SIZE,
    LabelMask,
    MalformedHeaderError,
    TruncatedDataError,
    UnsupportedDatatypeError,
    VoxelVolume,
    load_mask,
    load_volume,
    pair,
    volume_stem,
    write_nifti1,
)

MSD_MAP = {"pancreas": 1, "tumor": 2}


def small_volume() -> np.ndarray:
    rng = np.random.default_rng(5)
    return rng.normal(40.0, 100.0, size=(4, 4, 2)).astype(np.float32)


class TestLoadVolume:
    def test_float_round_trip(self, tmp_path):
        grid = small_volume()
        path = write_nifti1(tmp_path / "v.nii", grid)
        volume = load_volume(path)
        assert volume.dims == (4, 4, 2)
        assert volume.volume_name == "v.nii"
        np.testing.assert_array_equal(volume.intensities, grid)

    def test_gzip_round_trip_matches_plain(self, tmp_path):
        grid = small_volume()
        plain = load_volume(write_nifti1(tmp_path / "v.nii", grid))
        zipped = load_volume(write_nifti1(tmp_path / "v.nii.gz", grid))
        np.testing.assert_array_equal(plain.intensities, zipped.intensities)

    def test_slope_intercept_scaling(self, tmp_path):
        grid = small_volume()
        path = write_nifti1(tmp_path / "v.nii", grid, scl_slope=2.0, scl_inter=-1.0)
        volume = load_volume(path)
        np.testing.assert_allclose(volume.intensities, grid.astype(np.float64) * 2.0 - 1.0, rtol=0, atol=0)

    @pytest.mark.parametrize("dtype", [np.uint8, np.int8, np.int16, np.uint16, np.int32, np.uint32, np.float64])
    def test_integer_and_double_round_trips(self, tmp_path, dtype):
        rng = np.random.default_rng(2)
        if np.issubdtype(dtype, np.integer):
            info = np.iinfo(dtype)
            grid = rng.integers(max(info.min, -500), min(info.max, 500), size=(3, 5, 4)).astype(dtype)
        else:
            grid = rng.normal(size=(3, 5, 4)).astype(dtype)
        volume = load_volume(write_nifti1(tmp_path / "v.nii", grid))
        np.testing.assert_array_equal(volume.intensities, grid)

    def test_truncated_payload(self, tmp_path):
        path = write_nifti1(tmp_path / "v.nii", small_volume())
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - len(blob[352:]) // 2])
        with pytest.raises(TruncatedDataError):
            load_volume(path)

    def test_bad_magic(self, tmp_path):
        path = write_nifti1(tmp_path / "v.nii", small_volume())
        blob = bytearray(path.read_bytes())
        blob[344:348] = b"xxxx"
        path.write_bytes(bytes(blob))
        with pytest.raises(MalformedHeaderError):
            load_volume(path)

    def test_unsupported_datatype_code(self, tmp_path):
        path = write_nifti1(tmp_path / "v.nii", small_volume())
        blob = bytearray(path.read_bytes())
        struct.pack_into("<2h", blob, 70, 1536, 128)  # float128
        path.write_bytes(bytes(blob))
        with pytest.raises(UnsupportedDatatypeError):
            load_volume(path)

    def test_nifti2_rejected(self, tmp_path):
        header = bytearray(540)
        struct.pack_into("<i", header, 0, 540)
        header[4:12] = b"n+2\0\r\n\x1a\n"
        path = tmp_path / "v2.nii"
        path.write_bytes(bytes(header) + b"\0" * 64)
        with pytest.raises(MalformedHeaderError, match="NIfTI-2"):
            load_volume(path)

    def test_short_file(self, tmp_path):
        path = tmp_path / "short.nii"
        path.write_bytes(b"\0" * 100)
        with pytest.raises(MalformedHeaderError):
            load_volume(path)

    def test_big_endian_payload(self, tmp_path):
        grid = np.arange(24, dtype=np.int16).reshape(2, 3, 4)
        header = bytearray(HEADER_SIZE)
        struct.pack_into(">i", header, 0, HEADER_SIZE)
        struct.pack_into(">8h", header, 40, 3, 2, 3, 4, 1, 1, 1, 1)
        struct.pack_into(">2h", header, 70, 4, 16)
        struct.pack_into(">8f", header, 76, 1, 1, 1, 1, 0, 0, 0, 0)
        struct.pack_into(">f", header, 108, 352.0)
        header[344:348] = b"n+1\0"
        payload = grid.astype(">i2").tobytes(order="F")
        path = tmp_path / "be.nii"
        path.write_bytes(bytes(header) + b"\0\0\0\0" + payload)
        volume = load_volume(path)
        np.testing.assert_array_equal(volume.intensities, grid)

    def test_chunked_read_equals_whole_read(self, tmp_path):
        grid = small_volume()
        path = write_nifti1(tmp_path / "v.nii.gz", grid)
        whole = load_volume(path)
        streamed = load_volume(path, chunk_size=3)
        np.testing.assert_array_equal(whole.intensities, streamed.intensities)

    def test_spacing_recorded(self, tmp_path):
        path = write_nifti1(tmp_path / "v.nii", small_volume(), spacing=(0.8, 0.8, 2.5))
        volume = load_volume(path)
        assert volume.spacing == pytest.approx((0.8, 0.8, 2.5))


class TestLoadMask:
    def test_distinct_codes(self, tmp_path):
        labels = np.zeros((4, 4, 3), dtype=np.uint8)
        labels[1, 1, 0] = 1
        labels[2, 2, 1] = 2
        mask = load_mask(write_nifti1(tmp_path / "m.nii", labels), MSD_MAP)
        assert mask.distinct_codes == (0, 1, 2)
        assert mask.unknown_codes == ()

    def test_all_zero_mask(self, tmp_path):
        labels = np.zeros((4, 4, 2), dtype=np.uint8)
        mask = load_mask(write_nifti1(tmp_path / "m.nii", labels), MSD_MAP)
        assert mask.distinct_codes == (0,)

    def test_unknown_code_is_reported_not_fatal(self, tmp_path, caplog):
        labels = np.zeros((4, 4, 2), dtype=np.uint8)
        labels[0, 0, 0] = 7
        with caplog.at_level("WARNING"):
            mask = load_mask(write_nifti1(tmp_path / "m.nii", labels), MSD_MAP)
        assert mask.unknown_codes == (7,)
        assert any("7" in message for message in caplog.messages)

    def test_non_integral_float_mask_rejected(self, tmp_path):
        labels = np.full((2, 2, 1), 0.5, dtype=np.float32)
        with pytest.raises(UnsupportedDatatypeError):
            load_mask(write_nifti1(tmp_path / "m.nii", labels), MSD_MAP)


class TestPair:
    @staticmethod
    def _volume(dims):
        return VoxelVolume(dims, (1, 1, 1), np.zeros(dims, dtype=np.int16), "", "v.nii")

    @staticmethod
    def _mask(dims):
        return LabelMask(dims, np.zeros(dims, dtype=np.uint8), MSD_MAP)

    def test_reference_dims(self):
        paired = pair(self._volume((512, 512, 113)), self._mask((512, 512, 113)))
        assert paired.slice_count == 113

    def test_mismatch(self):
        with pytest.raises(DimsMismatchError):
            pair(self._volume((512, 512, 100)), self._mask((512, 512, 99)))

    def test_small_fixture(self):
        paired = pair(self._volume((4, 4, 2)), self._mask((4, 4, 2)))
        assert paired.slice_count == 2

    def test_slice_access_shapes_agree(self, tmp_path):
        grid = np.arange(24, dtype=np.int16).reshape(2, 3, 4)
        volume = load_volume(write_nifti1(tmp_path / "v.nii", grid))
        mask = load_mask(write_nifti1(tmp_path / "m.nii", np.zeros((2, 3, 4), dtype=np.uint8)), MSD_MAP)
        paired = pair(volume, mask)
        for z in range(paired.slice_count):
            image, labels = paired.axial_pair(z)
            assert image.shape == labels.shape == (3, 2)  # (height=ny, width=nx)


def test_volume_stem():
    assert volume_stem("pancreas_228.nii.gz") == "pancreas_228"
    assert volume_stem("vol.nii") == "vol"
    assert volume_stem("plain") == "plain"
