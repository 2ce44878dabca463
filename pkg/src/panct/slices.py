"""Axial slice selection, intensity preprocessing, and PNG export.

A slice is kept when its mask contains at least one pixel of the target
organ; kept slices get percentile clipping followed by histogram
equalization onto 8-bit, then land in ``<out>/<dataset>/`` as grayscale PNGs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import IoFailureError, PanctError
from .nifti import PairedVolume, volume_stem

DEFAULT_CLIP_FRACTION = 0.02


class UnknownOrganError(PanctError):
    """Requested organ has no code in the mask's label map."""


@dataclass(frozen=True)
class SliceImage:
    """Preprocessed 8-bit slice ready for export."""

    width: int
    height: int
    intensities: np.ndarray  # uint8, shape (height, width)
    slice_index: int
    volume_name: str
    degenerate: bool = False  # constant input slice, forced to uniform gray


def target_codes(label_map: dict[str, int], organ: str) -> set[int]:
    """Label codes counting as the organ; pancreas subsumes the tumor code."""
    if organ not in label_map:
        raise UnknownOrganError(f"{organ!r} not in label map {sorted(label_map)}")
    codes = {label_map[organ]}
    if organ == "pancreas" and "tumor" in label_map:
        codes.add(label_map["tumor"])
    return codes


def select_slices(paired: PairedVolume, target_label: str) -> list[int]:
    """z-indices whose mask slice contains at least one target-organ pixel."""
    codes = target_codes(paired.mask.label_map, target_label)
    labels = paired.mask.labels
    present = np.isin(labels, sorted(codes))
    hits = present.any(axis=(0, 1))
    return [int(z) for z in np.flatnonzero(hits)]


def preprocess(
    raw: np.ndarray,
    clip_fraction: float = DEFAULT_CLIP_FRACTION,
    slice_index: int = 0,
    volume_name: str = "",
) -> SliceImage:
    """Clip intensity outliers and equalize a raw slice onto [0, 255].

    clip_fraction is the total clipped mass, split evenly between tails;
    equalization uses the discrete CDF of the clipped slice's own values,
    rescaled so the clipped range covers the full 8-bit span. The mapping is
    monotone non-decreasing in the input intensity. Constant slices come
    back as uniform mid-gray with the degenerate flag set.
    """
    if not 0 <= clip_fraction < 1.0:
        raise ValueError(f"clip_fraction {clip_fraction} outside [0, 1)")
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise ValueError(f"expected a 2D slice, got shape {raw.shape}")
    height, width = raw.shape

    tail = clip_fraction / 2.0
    if tail > 0:
        lo, hi = np.percentile(raw, [tail * 100.0, (1.0 - tail) * 100.0])
    else:
        lo, hi = raw.min(), raw.max()
    clipped = np.clip(raw, lo, hi)

    values, counts = np.unique(clipped, return_counts=True)
    if len(values) == 1:
        out = np.full((height, width), 128, dtype=np.uint8)
        return SliceImage(width, height, out, slice_index, volume_name, degenerate=True)

    cdf = np.cumsum(counts) / clipped.size
    cdf_min = cdf[0]
    levels = np.rint(255.0 * (cdf - cdf_min) / (1.0 - cdf_min)).astype(np.uint8)
    out = levels[np.searchsorted(values, clipped)].reshape(height, width)
    return SliceImage(width, height, out, slice_index, volume_name)


def png_name(dataset: str, volume_name: str, slice_index: int) -> str:
    return f"{dataset}_{volume_stem(volume_name)}_{slice_index}.png"


def export(image: SliceImage, out_dir: str | Path, dataset: str) -> Path:
    """Write the slice as an 8-bit grayscale PNG under <out_dir>/<dataset>/.

    The encoder settings are fixed, so re-exporting identical input is
    byte-identical.
    """
    out_path = Path(out_dir) / dataset / png_name(dataset, image.volume_name, image.slice_index)
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(image.intensities, mode="L").save(out_path, format="PNG", compress_level=6)
    except OSError as exc:
        raise IoFailureError(f"cannot write {out_path}: {exc}") from exc
    return out_path
