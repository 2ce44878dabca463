"""Synthetic CT fixtures: small on-disk NIfTI datasets and in-memory records.

Used by tests and by the demo workflow; real datasets plug in through the
same config schema.
"""

from __future__ import annotations

import math
import random
from pathlib import Path

import numpy as np

from .boxes import PixelBox, round_ratio
from .catalog import SliceRecord
from .nifti import write_nifti1


def _paint_ellipse(mask: np.ndarray, z: int, cx: int, cy: int, rx: int, ry: int, code: int) -> None:
    """Set code inside an axis-aligned ellipse on slice z. mask is (nx, ny, nz)."""
    xs = np.arange(mask.shape[0])[:, None]
    ys = np.arange(mask.shape[1])[None, :]
    inside = ((xs - cx) / max(rx, 1)) ** 2 + ((ys - cy) / max(ry, 1)) ** 2 <= 1.0
    plane = mask[:, :, z]
    plane[inside] = code


def generate_nifti_dataset(
    root: str | Path,
    name: str = "MSD",
    n_volumes: int = 2,
    shape: tuple[int, int, int] = (64, 64, 10),
    with_tumor: bool = True,
    seed: int = 0,
    gzip_files: bool = True,
) -> dict:
    """Write a small paired NIfTI dataset under root/name; returns its config block.

    Each volume gets an organ blob on a central band of slices, waxing and
    waning so bbox ratios spread over (0, 1]; tumor datasets embed a smaller
    code-2 blob on part of that band.
    """
    root = Path(root)
    images_dir = root / name / "images"
    labels_dir = root / name / "labels"
    rng = random.Random(f"{seed}:{name}")
    nx, ny, nz = shape
    suffix = ".nii.gz" if gzip_files else ".nii"

    for v in range(n_volumes):
        intensities = np.asarray(
            np.array([rng.gauss(40.0, 120.0) for _ in range(nx * ny * nz)]).reshape(shape), dtype=np.float32
        )
        mask = np.zeros(shape, dtype=np.uint8)
        band_lo = rng.randrange(1, max(2, nz // 3))
        band_hi = rng.randrange(nz * 2 // 3, nz)
        cx = rng.randrange(nx // 3, nx * 2 // 3)
        cy = rng.randrange(ny // 3, ny * 2 // 3)
        max_r = min(nx, ny) // 4
        for z in range(band_lo, band_hi + 1):
            # radius peaks mid-band
            phase = (z - band_lo) / max(1, band_hi - band_lo)
            r = max(2, int(round(max_r * math.sin(math.pi * phase) + 2)))
            _paint_ellipse(mask, z, cx, cy, r, max(2, r - 1), code=1)
            intensities[:, :, z][mask[:, :, z] == 1] += 60.0
            if with_tumor and phase > 0.35 and phase < 0.8:
                _paint_ellipse(mask, z, cx + r // 3, cy, max(1, r // 3), max(1, r // 3), code=2)
        volume_file = f"vol_{v:03d}{suffix}"
        write_nifti1(images_dir / volume_file, intensities, spacing=(1.0, 1.0, 2.0))
        write_nifti1(labels_dir / volume_file, mask, spacing=(1.0, 1.0, 2.0))

    label_map = {"pancreas": 1, "tumor": 2} if with_tumor else {"pancreas": 1}
    return {
        "images_dir": str(images_dir),
        "labels_dir": str(labels_dir),
        "label_map": label_map,
    }


MULTIORGAN_CODES = {"liver": 1, "kidney": 2, "spleen": 3, "pancreas": 4}


def generate_multiorgan_dataset(
    root: str | Path,
    name: str = "ABD",
    n_volumes: int = 2,
    shape: tuple[int, int, int] = (64, 64, 10),
    seed: int = 0,
    gzip_files: bool = True,
) -> dict:
    """Paired dataset with one labeled blob per organ; returns its config block."""
    root = Path(root)
    images_dir = root / name / "images"
    labels_dir = root / name / "labels"
    rng = random.Random(f"{seed}:{name}:multiorgan")
    nx, ny, nz = shape
    suffix = ".nii.gz" if gzip_files else ".nii"
    anchors = {"liver": (0.3, 0.3), "kidney": (0.7, 0.35), "spleen": (0.7, 0.7), "pancreas": (0.4, 0.65)}

    for v in range(n_volumes):
        intensities = np.asarray(
            np.array([rng.gauss(40.0, 120.0) for _ in range(nx * ny * nz)]).reshape(shape), dtype=np.float32
        )
        mask = np.zeros(shape, dtype=np.uint8)
        band_lo = 1
        band_hi = nz - 2
        for organ, code in MULTIORGAN_CODES.items():
            fx, fy = anchors[organ]
            cx = int(nx * fx) + rng.randrange(-2, 3)
            cy = int(ny * fy) + rng.randrange(-2, 3)
            max_r = min(nx, ny) // 8
            for z in range(band_lo, band_hi + 1):
                phase = (z - band_lo) / max(1, band_hi - band_lo)
                r = max(2, int(round(max_r * math.sin(math.pi * phase) + 1)))
                _paint_ellipse(mask, z, cx, cy, r, max(2, r - 1), code=code)
        volume_file = f"vol_{v:03d}{suffix}"
        write_nifti1(images_dir / volume_file, intensities, spacing=(1.0, 1.0, 2.0))
        write_nifti1(labels_dir / volume_file, mask, spacing=(1.0, 1.0, 2.0))

    return {
        "images_dir": str(images_dir),
        "labels_dir": str(labels_dir),
        "label_map": dict(MULTIORGAN_CODES),
        "organs": list(MULTIORGAN_CODES),
    }


def synthetic_records(
    n_volumes: int = 20,
    slices_per_volume: int = 8,
    dataset: str = "NIH",
    with_tumor: bool = False,
    seed: int = 0,
    width: int = 512,
    height: int = 512,
    start_id: int = 0,
) -> list[SliceRecord]:
    """In-memory catalog records with consistent per-volume maxima and ratios."""
    rng = random.Random(f"{seed}:{dataset}")
    records: list[SliceRecord] = []
    slice_id = start_id
    for v in range(n_volumes):
        volume_name = f"{dataset.lower()}_{v:04d}.nii.gz"
        slices = []
        for z in range(slices_per_volume):
            x1 = rng.randrange(0, width - 80)
            y1 = rng.randrange(0, height - 80)
            bbox = PixelBox(x1, y1, x1 + rng.randrange(20, 80), y1 + rng.randrange(20, 80))
            pixels = max(1, int(bbox.area * rng.uniform(0.4, 0.9)))
            tumor = None
            pixels_tumor = 0
            if with_tumor and rng.random() < 0.5:
                tx1 = x1 + rng.randrange(0, 10)
                ty1 = y1 + rng.randrange(0, 10)
                tumor = PixelBox(tx1, ty1, tx1 + rng.randrange(4, 12), ty1 + rng.randrange(4, 12))
                pixels_tumor = max(1, int(tumor.area * rng.uniform(0.5, 0.9)))
            slices.append((z, bbox, pixels, tumor, pixels_tumor))
        # organ pixel counts subsume the tumor's, as in real catalogs
        max_pixels = max(s[2] + s[4] for s in slices)
        max_area = max(s[1].area for s in slices)
        max_pixels_tumor = max(s[4] for s in slices)
        max_tumor_area = max((s[3].area for s in slices if s[3]), default=0)
        for z, bbox, pixels, tumor, pixels_tumor in slices:
            records.append(
                SliceRecord(
                    dataset=dataset,
                    volume_name=volume_name,
                    slice_id=slice_id,
                    slice_index=z,
                    slice_count=slices_per_volume,
                    organ="pancreas",
                    pixels=pixels + pixels_tumor,
                    pixels_ratio=round_ratio(pixels + pixels_tumor, max_pixels),
                    max_pixels=max_pixels,
                    bbox=bbox,
                    bbox_ratio=round_ratio(bbox.area, max_area),
                    max_bbox_area=max_area,
                    width=width,
                    height=height,
                    pixels_tumor=pixels_tumor if with_tumor else None,
                    tumor_pixels_ratio=round_ratio(pixels_tumor, max_pixels_tumor) if with_tumor else None,
                    max_pixels_tumor=max_pixels_tumor if with_tumor else None,
                    bbox_tumor=tumor,
                    tumor_bbox_ratio=round_ratio(tumor.area, max_tumor_area) if tumor else None,
                    max_bbox_tumor=max_tumor_area if with_tumor else None,
                )
            )
            slice_id += 1
    return records
