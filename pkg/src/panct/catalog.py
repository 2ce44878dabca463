"""Per-slice annotation records and the JSON catalog they live in.

Record keys follow the established per-slice annotation schema: counts,
tight bounding boxes, per-volume maxima, and 2-decimal ratio fields, with
tumor-specific keys present only for datasets that annotate tumors. The key
names are organ-parameterized (``pixels_pancreas``, ``bbox_liver``, ...);
the pancreas spelling is the reference schema and is kept bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .boxes import PixelBox, round_ratio
from .errors import IoFailureError, PanctError
from .nifti import PairedVolume
from .slices import target_codes


class MissingTargetError(PanctError):
    """Record requested for a slice without any target-organ pixel."""


class SchemaViolationError(PanctError):
    """Catalog file violates the record schema."""


@dataclass(frozen=True)
class SliceRecord:
    """One selected slice's annotations for one target organ."""

    dataset: str
    volume_name: str
    slice_id: int
    slice_index: int
    slice_count: int
    organ: str
    pixels: int
    pixels_ratio: float
    max_pixels: int
    bbox: PixelBox
    bbox_ratio: float
    max_bbox_area: int
    width: int
    height: int
    # tumor group; populated only when the dataset annotates tumors
    pixels_tumor: int | None = None
    tumor_pixels_ratio: float | None = None
    max_pixels_tumor: int | None = None
    bbox_tumor: PixelBox | None = None
    tumor_bbox_ratio: float | None = None
    max_bbox_tumor: int | None = None

    @property
    def has_tumor(self) -> bool:
        return bool(self.pixels_tumor)


def extract_bbox(mask_slice: np.ndarray, codes: set[int]) -> PixelBox | None:
    """Tight box over pixels whose label is in codes; None when empty.

    mask_slice is indexed [y, x]; box coordinates are x = column, y = row.
    """
    hit = np.isin(mask_slice, sorted(codes))
    ys, xs = np.nonzero(hit)
    if ys.size == 0:
        return None
    return PixelBox(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))


@dataclass
class _SliceStats:
    z: int
    pixels: int
    bbox: PixelBox | None
    pixels_tumor: int
    bbox_tumor: PixelBox | None


def _volume_stats(paired: PairedVolume, organ: str) -> list[_SliceStats]:
    label_map = paired.mask.label_map
    codes = target_codes(label_map, organ)
    tumor_code = label_map.get("tumor") if organ == "pancreas" else None
    stats = []
    for z in range(paired.slice_count):
        mask_slice = paired.mask.axial_slice(z)
        hit = np.isin(mask_slice, sorted(codes))
        pixels = int(hit.sum())
        if pixels == 0:
            continue
        ys, xs = np.nonzero(hit)
        bbox = PixelBox(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))
        pixels_tumor = 0
        bbox_tumor = None
        if tumor_code is not None:
            tumor_hit = mask_slice == tumor_code
            pixels_tumor = int(tumor_hit.sum())
            if pixels_tumor:
                tys, txs = np.nonzero(tumor_hit)
                bbox_tumor = PixelBox(int(txs.min()), int(tys.min()), int(txs.max()), int(tys.max()))
        stats.append(_SliceStats(z, pixels, bbox, pixels_tumor, bbox_tumor))
    return stats


def build_volume_records(
    paired: PairedVolume,
    dataset: str,
    organ: str = "pancreas",
    next_slice_id: int = 0,
) -> tuple[list[SliceRecord], int]:
    """Two-pass record build for one volume: maxima first, then ratios.

    For the pancreas target, tumor-labeled pixels count toward the organ
    (the organ region subsumes its tumor). Returns the records in slice
    order plus the next free slice_id.
    """
    stats = _volume_stats(paired, organ)
    has_tumor_schema = organ == "pancreas" and "tumor" in paired.mask.label_map

    max_pixels = max((s.pixels for s in stats), default=0)
    max_bbox_area = max((s.bbox.area for s in stats if s.bbox), default=0)
    max_pixels_tumor = max((s.pixels_tumor for s in stats), default=0)
    max_bbox_tumor = max((s.bbox_tumor.area for s in stats if s.bbox_tumor), default=0)

    records = []
    for s in stats:
        assert s.bbox is not None
        rec = SliceRecord(
            dataset=dataset,
            volume_name=paired.volume.volume_name,
            slice_id=next_slice_id,
            slice_index=s.z,
            slice_count=paired.slice_count,
            organ=organ,
            pixels=s.pixels,
            pixels_ratio=round_ratio(s.pixels, max_pixels),
            max_pixels=max_pixels,
            bbox=s.bbox,
            bbox_ratio=round_ratio(s.bbox.area, max_bbox_area),
            max_bbox_area=max_bbox_area,
            width=paired.width,
            height=paired.height,
        )
        if has_tumor_schema:
            rec = replace(
                rec,
                pixels_tumor=s.pixels_tumor,
                tumor_pixels_ratio=round_ratio(s.pixels_tumor, max_pixels_tumor),
                max_pixels_tumor=max_pixels_tumor,
                bbox_tumor=s.bbox_tumor,
                tumor_bbox_ratio=(
                    round_ratio(s.bbox_tumor.area, max_bbox_tumor) if s.bbox_tumor else None
                ),
                max_bbox_tumor=max_bbox_tumor,
            )
        records.append(rec)
        next_slice_id += 1
    return records, next_slice_id


def build_record(paired: PairedVolume, slice_index: int, dataset: str, slice_id: int, organ: str = "pancreas") -> SliceRecord:
    """Record for a single slice (ratios still against per-volume maxima)."""
    records, _ = build_volume_records(paired, dataset, organ, next_slice_id=0)
    for rec in records:
        if rec.slice_index == slice_index:
            return replace(rec, slice_id=slice_id)
    raise MissingTargetError(f"slice {slice_index} has no {organ} pixel")


def record_to_obj(rec: SliceRecord) -> dict:
    """Serialize with the organ-parameterized key names, reference key order."""
    o = rec.organ
    obj: dict = {
        "dataset": rec.dataset,
        "volume_name": rec.volume_name,
        "slice_id": rec.slice_id,
        "slice_index": rec.slice_index,
        "slice_count": rec.slice_count,
        f"pixels_{o}": rec.pixels,
        f"{o}_pixels_ratio": rec.pixels_ratio,
        f"max_pixels_{o}": rec.max_pixels,
    }
    if rec.pixels_tumor is not None:
        obj["pixels_tumor"] = rec.pixels_tumor
        obj["tumor_pixels_ratio"] = rec.tumor_pixels_ratio
        obj["max_pixels_tumor"] = rec.max_pixels_tumor
    obj[f"bbox_{o}"] = rec.bbox.as_list()
    obj[f"{o}_bbox_ratio"] = rec.bbox_ratio
    obj[f"max_bbox_{o}"] = rec.max_bbox_area
    if rec.bbox_tumor is not None:
        obj["bbox_tumor"] = rec.bbox_tumor.as_list()
        obj["tumor_bbox_ratio"] = rec.tumor_bbox_ratio
    if rec.pixels_tumor is not None:
        # volume-level maximum, meaningful even on tumor-free slices
        obj["max_bbox_tumor"] = rec.max_bbox_tumor
    obj["width"] = rec.width
    obj["height"] = rec.height
    return obj


def _expect(obj: dict, key: str, kinds: type | tuple) -> object:
    if key not in obj:
        raise SchemaViolationError(f"record {obj.get('slice_id', '?')}: missing key {key!r}")
    value = obj[key]
    if not isinstance(value, kinds) or isinstance(value, bool):
        raise SchemaViolationError(f"record {obj.get('slice_id', '?')}: key {key!r} has wrong type")
    return value


def _expect_ratio(obj: dict, key: str) -> float:
    value = _expect(obj, key, (int, float))
    if not 0.0 <= value <= 1.0:
        raise SchemaViolationError(f"record {obj.get('slice_id', '?')}: {key}={value} outside [0, 1]")
    return float(value)


def _expect_box(obj: dict, key: str) -> PixelBox:
    value = obj[key]
    if not (isinstance(value, list) and len(value) == 4 and all(isinstance(c, int) for c in value)):
        raise SchemaViolationError(f"record {obj.get('slice_id', '?')}: {key} is not a 4-int list")
    try:
        return PixelBox(*value)
    except ValueError as exc:
        raise SchemaViolationError(f"record {obj.get('slice_id', '?')}: {exc}") from exc


def record_from_obj(obj: dict) -> SliceRecord:
    """Parse and validate one catalog object; organ inferred from its bbox key."""
    organs = [k[len("bbox_"):] for k in obj if k.startswith("bbox_") and k != "bbox_tumor"]
    if len(organs) != 1:
        raise SchemaViolationError(f"record {obj.get('slice_id', '?')}: expected exactly one organ bbox key")
    o = organs[0]
    rec = SliceRecord(
        dataset=str(_expect(obj, "dataset", str)),
        volume_name=str(_expect(obj, "volume_name", str)),
        slice_id=int(_expect(obj, "slice_id", int)),
        slice_index=int(_expect(obj, "slice_index", int)),
        slice_count=int(_expect(obj, "slice_count", int)),
        organ=o,
        pixels=int(_expect(obj, f"pixels_{o}", int)),
        pixels_ratio=_expect_ratio(obj, f"{o}_pixels_ratio"),
        max_pixels=int(_expect(obj, f"max_pixels_{o}", int)),
        bbox=_expect_box(obj, f"bbox_{o}"),
        bbox_ratio=_expect_ratio(obj, f"{o}_bbox_ratio"),
        max_bbox_area=int(_expect(obj, f"max_bbox_{o}", int)),
        width=int(_expect(obj, "width", int)),
        height=int(_expect(obj, "height", int)),
    )
    if "pixels_tumor" in obj:
        rec = replace(
            rec,
            pixels_tumor=int(_expect(obj, "pixels_tumor", int)),
            tumor_pixels_ratio=_expect_ratio(obj, "tumor_pixels_ratio"),
            max_pixels_tumor=int(_expect(obj, "max_pixels_tumor", int)),
            max_bbox_tumor=int(_expect(obj, "max_bbox_tumor", int)),
        )
        if "bbox_tumor" in obj:
            rec = replace(
                rec,
                bbox_tumor=_expect_box(obj, "bbox_tumor"),
                tumor_bbox_ratio=_expect_ratio(obj, "tumor_bbox_ratio"),
            )
    return rec


def write_catalog(records: list[SliceRecord], path: str | Path) -> Path:
    """Write records as a UTF-8 JSON array; refuses an empty catalog."""
    if not records:
        raise ValueError("refusing to write an empty catalog")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump([record_to_obj(r) for r in records], f, indent=2)
            f.write("\n")
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc
    return path


def read_catalog(path: str | Path) -> list[SliceRecord]:
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except OSError as exc:
        raise IoFailureError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaViolationError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise SchemaViolationError(f"{path}: catalog root must be a JSON array")
    return [record_from_obj(obj) for obj in data]


def by_slice_id(records: list[SliceRecord]) -> dict[int, SliceRecord]:
    index = {}
    for rec in records:
        if rec.slice_id in index:
            raise SchemaViolationError(f"duplicate slice_id {rec.slice_id}")
        index[rec.slice_id] = rec
    return index
