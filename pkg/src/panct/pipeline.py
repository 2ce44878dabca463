"""End-to-end orchestration: ingest, dataset build, evaluation, heatmaps.

Thin, deterministic glue over the other modules; the CLI calls these
functions and so can tests.
"""

from __future__ import annotations

import logging
from pathlib import Path

from .backends import Backend, OracleBackend, Perturbation, RemoteBackend, ReplayBackend, collect_predictions
from .boxes import NormalizedBox
from .catalog import SliceRecord, build_volume_records, by_slice_id, write_catalog
from .config import DatasetConfig, PipelineConfig
from .errors import BadConfigError
from .heatmap import HeatmapGrid, heatmap
from .instructions import CORE_STAGES, InstructionSample, Stage, SplitReport, build_stage_dataset, emit_manifest, write_samples
from .metrics import MetricsReport, PredictionRecord, aggregate, read_predictions
from .nifti import load_mask, load_volume, pair
from .parsing import ParsedBox, parse_output
from .slices import export, preprocess, select_slices

log = logging.getLogger(__name__)

# Slice counts reported for the public pancreas CT datasets; ingest flags a
# deviation when a dataset with one of these names yields a different count.
EXPECTED_PUBLIC_COUNTS = {"MSD": 8792, "NIH": 6882}


def discover_pairs(ds: DatasetConfig) -> list[tuple[Path, Path]]:
    """Volume/mask file pairs matched by identical filename."""
    if not ds.images_dir.is_dir():
        raise BadConfigError(f"dataset {ds.name}: images_dir {ds.images_dir} does not exist")
    if not ds.labels_dir.is_dir():
        raise BadConfigError(f"dataset {ds.name}: labels_dir {ds.labels_dir} does not exist")
    pairs = []
    for image_path in sorted(ds.images_dir.iterdir()):
        if not image_path.name.endswith((".nii", ".nii.gz")):
            continue
        mask_path = ds.labels_dir / image_path.name
        if not mask_path.exists():
            raise BadConfigError(f"dataset {ds.name}: no mask for {image_path.name}")
        pairs.append((image_path, mask_path))
    if not pairs:
        raise BadConfigError(f"dataset {ds.name}: no volumes under {ds.images_dir}")
    return pairs


def ingest(config: PipelineConfig) -> tuple[list[SliceRecord], dict[tuple[str, str], int]]:
    """Volumes -> preprocessed PNGs + annotation catalog.

    Returns all records (written to the catalog path) and per-(dataset,
    organ) selected-slice counts.
    """
    records: list[SliceRecord] = []
    counts: dict[tuple[str, str], int] = {}
    next_id = 0
    for ds in config.datasets:
        for image_path, mask_path in discover_pairs(ds):
            volume = load_volume(image_path)
            mask = load_mask(mask_path, ds.label_map)
            paired = pair(volume, mask)
            exported: set[int] = set()
            for organ in ds.organs:
                selected = select_slices(paired, organ)
                for z in selected:
                    if z not in exported:
                        image = preprocess(
                            paired.axial_pair(z)[0],
                            clip_fraction=config.clip_fraction,
                            slice_index=z,
                            volume_name=volume.volume_name,
                        )
                        export(image, config.png_root, ds.name)
                        exported.add(z)
                volume_records, next_id = build_volume_records(paired, ds.name, organ, next_id)
                counts[(ds.name, organ)] = counts.get((ds.name, organ), 0) + len(volume_records)
                records.extend(volume_records)
    if not records:
        raise BadConfigError("ingest produced no records; check dataset contents")
    write_catalog(records, config.catalog_path)

    for (dataset, organ), count in counts.items():
        expected = EXPECTED_PUBLIC_COUNTS.get(dataset)
        if organ == "pancreas" and expected is not None and count != expected:
            log.warning(
                "%s: selected %d pancreas slices; the public dataset reference count is %d",
                dataset, count, expected,
            )
    return records, counts


def make_backend(config: PipelineConfig, records: dict[int, SliceRecord]) -> Backend:
    backend_config = config.backend
    if backend_config.kind == "oracle":
        return OracleBackend(
            records,
            Perturbation(
                shift_pct=backend_config.shift_pct,
                scale_pct=backend_config.scale_pct,
                flip_to_failure_prob=backend_config.flip_to_failure_prob,
            ),
            seed=backend_config.seed,
        )
    if backend_config.kind == "replay":
        assert backend_config.recording is not None
        return ReplayBackend(read_predictions(backend_config.recording))
    assert backend_config.endpoint is not None
    return RemoteBackend(
        backend_config.endpoint,
        records=records,
        png_root=config.png_root,
        timeout_s=backend_config.timeout_s,
    )


def stage_dataset_paths(config: PipelineConfig, stage: Stage, threshold: float) -> dict[str, Path]:
    tag = f"{stage.value}_t{int(round(threshold * 100)):02d}"
    return {
        "train": config.datasets_dir / f"{tag}_train.jsonl",
        "test": config.datasets_dir / f"{tag}_test.jsonl",
    }


def build_stage(
    config: PipelineConfig,
    records: list[SliceRecord],
    stage: Stage,
    threshold: float | None = None,
) -> tuple[list[InstructionSample], SplitReport, dict[str, Path]]:
    """Build one stage's dataset and write its train/test JSONL files."""
    if threshold is None:
        # tumor boxes are scarce; by default keep them all
        threshold = 0.0 if stage == Stage.TUMOR_DETECTION else config.threshold
    samples, report = build_stage_dataset(
        records, stage, threshold, split_seed=config.split_seed, instruction_seed=config.instruction_seed
    )
    paths = stage_dataset_paths(config, stage, threshold)
    write_samples([s for s in samples if s.split == "train"], paths["train"])
    write_samples([s for s in samples if s.split == "test"], paths["test"])
    return samples, report, paths


def build_manifest_file(config: PipelineConfig, records: list[SliceRecord]) -> Path:
    stage_files = {}
    for stage in CORE_STAGES:
        _, _, paths = build_stage(config, records, stage)
        stage_files[stage] = {k: str(p.relative_to(config.output_dir)) for k, p in paths.items()}
    return emit_manifest(stage_files, config.output_dir / "manifest.json")


def evaluate_stages(
    config: PipelineConfig,
    records: list[SliceRecord],
    stages: list[Stage],
    predictions: list[PredictionRecord] | None = None,
    max_workers: int = 1,
) -> tuple[MetricsReport, list[PredictionRecord]]:
    """Score a predictions file, or drive the configured backend over the test split."""
    index = by_slice_id(records)
    if predictions is None:
        backend = make_backend(config, index)
        predictions = []
        for stage in stages:
            samples, _, _ = build_stage(config, records, stage)
            predictions.extend(collect_predictions(backend, samples, split="test"))
    report = aggregate(predictions, index, max_workers=max_workers)
    return report, predictions


def heatmap_pair_for_stage(
    records: list[SliceRecord],
    samples: list[InstructionSample],
    predictions: list[PredictionRecord],
) -> tuple[HeatmapGrid, HeatmapGrid]:
    """GT and prediction occupancy grids over the evaluated samples."""
    gt_boxes: list[NormalizedBox] = []
    for sample in samples:
        parsed = parse_output(sample.target_text, "bbox")
        if isinstance(parsed, ParsedBox):
            gt_boxes.append(parsed.box)
    predicted_boxes: list[NormalizedBox] = []
    for prediction in predictions:
        parsed = parse_output(prediction.raw_text, "bbox")
        if isinstance(parsed, ParsedBox):
            predicted_boxes.append(parsed.box)
    return heatmap(gt_boxes, side="GT"), heatmap(predicted_boxes, side="prediction")
