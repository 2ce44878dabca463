from __future__ import annotations

import numpy as np
import pytest

from panct.nifti import LabelMask, PairedVolume, VoxelVolume, pair

MSD_LABEL_MAP = {"pancreas": 1, "tumor": 2}


def paint(labels: np.ndarray, z: int, cols: tuple[int, int], rows: tuple[int, int], code: int) -> None:
    """Fill an inclusive [cols] x [rows] block on slice z. labels is (nx, ny, nz)."""
    labels[cols[0] : cols[1] + 1, rows[0] : rows[1] + 1, z] = code


def paired_from_labels(labels: np.ndarray, label_map: dict[str, int], volume_name: str = "fixture.nii.gz") -> PairedVolume:
    dims = labels.shape
    volume = VoxelVolume(
        dims=dims,
        spacing=(1.0, 1.0, 1.0),
        intensities=np.zeros(dims, dtype=np.int16),
        source_path="",
        volume_name=volume_name,
    )
    mask = LabelMask(
        dims=dims,
        labels=labels,
        label_map=dict(label_map),
        volume_name=volume_name,
        distinct_codes=tuple(int(c) for c in np.unique(labels)),
    )
    return pair(volume, mask)


def build_reference_volume() -> PairedVolume:
    """512x512x113 volume whose slice 52 reproduces the reference record values.

    Slice 30 carries the per-volume organ maxima (1304 px, bbox area 2652),
    slice 40 the tumor maxima (279 px, bbox area 306), slice 52 the record
    under test (804/258 px, boxes (196,235,237,260) / (220,238,237,255)).
    """
    labels = np.zeros((512, 512, 113), dtype=np.uint8)

    # slice 30: organ maxima
    paint(labels, 30, (100, 149), (100, 125), 1)  # 50 x 26 = 1300
    paint(labels, 30, (152, 152), (100, 100), 1)
    paint(labels, 30, (100, 100), (151, 151), 1)
    paint(labels, 30, (151, 151), (150, 150), 1)
    paint(labels, 30, (150, 150), (151, 151), 1)  # total 1304, bbox (100,100,152,151)

    # slice 40: tumor maxima inside a mid-sized organ
    paint(labels, 40, (110, 139), (130, 139), 1)  # 300 organ-only pixels
    paint(labels, 40, (110, 127), (110, 124), 2)  # 270
    paint(labels, 40, (110, 117), (128, 128), 2)  # +8
    paint(labels, 40, (127, 127), (125, 125), 2)  # +1 -> 279, bbox (110,110,127,128)

    # slice 52: the reference slice
    paint(labels, 52, (196, 237), (256, 260), 1)  # 42 x 5 = 210
    paint(labels, 52, (196, 237), (235, 237), 1)  # 42 x 3 = 126
    paint(labels, 52, (196, 216), (240, 249), 1)  # 21 x 10 = 210 -> 546 organ-only
    paint(labels, 52, (220, 237), (238, 251), 2)  # 18 x 14 = 252
    paint(labels, 52, (220, 224), (255, 255), 2)  # +5
    paint(labels, 52, (237, 237), (252, 252), 2)  # +1 -> 258, bbox (220,238,237,255)

    return paired_from_labels(labels, MSD_LABEL_MAP, volume_name="pancreas_228.nii.gz")


@pytest.fixture(scope="session")
def reference_paired() -> PairedVolume:
    return build_reference_volume()
