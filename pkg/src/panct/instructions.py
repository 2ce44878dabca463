"""Multimodal instruction datasets and the three-stage fine-tuning manifest.

Builds, from the annotation catalog: prompt text with task-identifier
tokens, bbox-as-text targets, threshold-filtered and volume-disjoint
train/test splits, and a JSON manifest describing the cascaded fine-tuning
plan that an external trainer consumes. No training happens here.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .boxes import normalize_box, render_bbox_text
from .catalog import SliceRecord
from .errors import IoFailureError, PanctError
from .slices import png_name


class UnknownInstructionError(PanctError):
    """Instruction text not in any stage's candidate list."""


class EmptyStageError(PanctError):
    """Stage filter removed every record."""


class Task(str, Enum):
    REFER = "refer"
    VQA = "vqa"

    @property
    def token(self) -> str:
        return f"[{self.value}]"


class Stage(str, Enum):
    PANCREAS_DETECTION = "pancreas_detection"
    TUMOR_CLASSIFICATION = "tumor_classification"
    TUMOR_DETECTION = "tumor_detection"
    MULTI_ORGAN_DETECTION = "multi_organ_detection"


CORE_STAGES = (Stage.PANCREAS_DETECTION, Stage.TUMOR_CLASSIFICATION, Stage.TUMOR_DETECTION)

# Detection instructions are phrased against a target noun so the same list
# serves the organ, the tumor, and the multi-organ variants.
_DETECTION_TEMPLATES = (
    "Give me the location of the {target}",
    "Give me the position of the {target}",
    "Where is the {target}?",
    "Where is located the {target} in this image?",
    "Which is the position of the {target}?",
    "From this image, tell me the location of the {target}",
    "Could you tell me the location of the {target}?",
    "Where can I locate the {target}?",
)

CLASSIFICATION_INSTRUCTIONS = (
    "Does the pancreas in the image present a tumor?",
    "Is there a tumor in the pancreas shown in the image?",
    "Can you see a tumor in the pancreas in this picture?",
    "Does the image show a tumor in the pancreas?",
    "Is a pancreatic tumor visible in the image?",
    "Is the pancreas in this image showing signs of a tumor?",
    "Is the pancreas in the image affected by a tumor?",
    "Does the pancreas in the picture have a tumor?",
)


def detection_instructions(target: str) -> tuple[str, ...]:
    return tuple(t.format(target=target) for t in _DETECTION_TEMPLATES)


def candidate_instructions(stage: Stage, organ: str = "pancreas") -> tuple[str, ...]:
    if stage == Stage.TUMOR_CLASSIFICATION:
        return CLASSIFICATION_INSTRUCTIONS
    if stage == Stage.TUMOR_DETECTION:
        return detection_instructions("pancreas tumor")
    return detection_instructions(organ)


def stage_task(stage: Stage) -> Task:
    return Task.VQA if stage == Stage.TUMOR_CLASSIFICATION else Task.REFER


IMAGE_REF_TOKEN = "<ImageRef>"


def instruction_target(instruction_text: str) -> str | None:
    """The target noun a detection instruction asks about, or None for no match."""
    for template in _DETECTION_TEMPLATES:
        pre, post = template.split("{target}")
        if (
            instruction_text.startswith(pre)
            and instruction_text.endswith(post)
            and len(instruction_text) > len(pre) + len(post)
        ):
            return instruction_text[len(pre) : len(instruction_text) - len(post)]
    return None


def assemble_prompt(task: Task, instruction_text: str, image_ref: str = IMAGE_REF_TOKEN) -> str:
    """Full chat prompt with the task-identifier token in canonical order.

    The image reference stays a placeholder token; the consumer (trainer or
    serving backend) resolves it against the actual image.
    """
    if instruction_text not in CLASSIFICATION_INSTRUCTIONS and instruction_target(instruction_text) is None:
        raise UnknownInstructionError(f"not a candidate instruction: {instruction_text!r}")
    return f"[INST] <Img>{image_ref}</Img> {task.token} {instruction_text} [/INST]"


@dataclass(frozen=True)
class InstructionSample:
    image_path: str
    task: Task
    instruction_text: str
    target_text: str
    stage: Stage
    organ: str
    split: str  # train | test
    slice_id: int

    def to_obj(self) -> dict:
        return {
            "image_path": self.image_path,
            "task": self.task.value,
            "instruction_text": self.instruction_text,
            "target_text": self.target_text,
            "stage": self.stage.value,
            "organ": self.organ,
            "split": self.split,
            "slice_id": self.slice_id,
        }


@dataclass(frozen=True)
class SplitReport:
    """Volume-level split plus resulting slice counts per dataset."""

    train_volumes: dict[str, list[str]]
    test_volumes: dict[str, list[str]]
    train_slices: dict[str, int]
    test_slices: dict[str, int]


def split_volumes(records: list[SliceRecord], split_seed: int) -> tuple[dict[str, set[str]], dict[str, set[str]]]:
    """Volume-disjoint 80/20 split per dataset, ceil(0.8 V) volumes to train.

    Depends only on (volume set, split_seed): thresholds subset one master
    split rather than re-splitting.
    """
    volumes: dict[str, set[str]] = {}
    for rec in records:
        volumes.setdefault(rec.dataset, set()).add(rec.volume_name)
    train: dict[str, set[str]] = {}
    test: dict[str, set[str]] = {}
    for dataset, names in volumes.items():
        ordered = sorted(names)
        rng = random.Random(f"{split_seed}:{dataset}")
        rng.shuffle(ordered)
        n_train = -(-len(ordered) * 8 // 10)  # ceil(0.8 V)
        train[dataset] = set(ordered[:n_train])
        test[dataset] = set(ordered[n_train:])
    return train, test


def _split_of(rec: SliceRecord, train: dict[str, set[str]]) -> str:
    return "train" if rec.volume_name in train.get(rec.dataset, ()) else "test"


def _pick_instruction(candidates: tuple[str, ...], instruction_seed: int, stage: Stage, slice_id: int) -> str:
    # keyed rng: deterministic per sample regardless of build order
    rng = random.Random(f"{instruction_seed}:{stage.value}:{slice_id}")
    return candidates[rng.randrange(len(candidates))]


def _detection_sample(
    rec: SliceRecord, stage: Stage, split: str, instruction_seed: int, use_tumor_box: bool
) -> InstructionSample:
    box = rec.bbox_tumor if use_tumor_box else rec.bbox
    assert box is not None
    nbox = normalize_box(box, rec.width, rec.height)
    organ = "pancreas tumor" if use_tumor_box else rec.organ
    candidates = candidate_instructions(stage, rec.organ)
    return InstructionSample(
        image_path=f"{rec.dataset}/{png_name(rec.dataset, rec.volume_name, rec.slice_index)}",
        task=Task.REFER,
        instruction_text=_pick_instruction(candidates, instruction_seed, stage, rec.slice_id),
        target_text=render_bbox_text(nbox),
        stage=stage,
        organ=organ,
        split=split,
        slice_id=rec.slice_id,
    )


def build_stage_dataset(
    records: list[SliceRecord],
    stage: Stage,
    threshold: float = 0.0,
    split_seed: int = 0,
    instruction_seed: int = 0,
) -> tuple[list[InstructionSample], SplitReport]:
    """Assemble one stage's samples plus its split report.

    Detection stages keep records whose relevant bbox ratio meets the
    threshold; classification pairs tumor-bearing positives with healthy
    negatives subsampled to class balance within each split.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    train, test = split_volumes(records, split_seed)
    samples: list[InstructionSample] = []

    if stage == Stage.PANCREAS_DETECTION:
        kept = [r for r in records if r.organ == "pancreas" and r.bbox_ratio >= threshold]
        for rec in kept:
            samples.append(_detection_sample(rec, stage, _split_of(rec, train), instruction_seed, use_tumor_box=False))
    elif stage == Stage.TUMOR_DETECTION:
        kept = [
            r
            for r in records
            if r.organ == "pancreas" and r.bbox_tumor is not None and (r.tumor_bbox_ratio or 0.0) >= threshold
        ]
        for rec in kept:
            samples.append(_detection_sample(rec, stage, _split_of(rec, train), instruction_seed, use_tumor_box=True))
    elif stage == Stage.MULTI_ORGAN_DETECTION:
        kept = [r for r in records if r.bbox_ratio >= threshold]
        for rec in kept:
            samples.append(_detection_sample(rec, stage, _split_of(rec, train), instruction_seed, use_tumor_box=False))
    elif stage == Stage.TUMOR_CLASSIFICATION:
        pancreas = [r for r in records if r.organ == "pancreas"]
        positives = [r for r in pancreas if r.has_tumor]
        negative_pool = [r for r in pancreas if not r.has_tumor]
        for split_name in ("train", "test"):
            pos = [r for r in positives if _split_of(r, train) == split_name]
            pool = [r for r in negative_pool if _split_of(r, train) == split_name]
            rng = random.Random(f"{split_seed}:negatives:{split_name}")
            rng.shuffle(pool)
            negs = sorted(pool[: len(pos)], key=lambda r: r.slice_id)
            for rec, answer in [(r, "yes") for r in pos] + [(r, "no") for r in negs]:
                samples.append(
                    InstructionSample(
                        image_path=f"{rec.dataset}/{png_name(rec.dataset, rec.volume_name, rec.slice_index)}",
                        task=Task.VQA,
                        instruction_text=_pick_instruction(
                            CLASSIFICATION_INSTRUCTIONS, instruction_seed, stage, rec.slice_id
                        ),
                        target_text=answer,
                        stage=stage,
                        organ="pancreas",
                        split=split_name,
                        slice_id=rec.slice_id,
                    )
                )
    else:  # pragma: no cover
        raise ValueError(f"unknown stage {stage}")

    if not samples:
        raise EmptyStageError(f"{stage.value}: no records survive threshold {threshold}")

    samples.sort(key=lambda s: s.slice_id)
    report = SplitReport(
        train_volumes={d: sorted(v) for d, v in train.items()},
        test_volumes={d: sorted(v) for d, v in test.items()},
        train_slices=_count_by_dataset(samples, "train"),
        test_slices=_count_by_dataset(samples, "test"),
    )
    return samples, report


def _count_by_dataset(samples: list[InstructionSample], split: str) -> dict[str, int]:
    counts: dict[str, int] = {}
    for s in samples:
        if s.split == split:
            dataset = s.image_path.split("/", 1)[0]
            counts[dataset] = counts.get(dataset, 0) + 1
    return dict(sorted(counts.items()))


def write_samples(samples: list[InstructionSample], path: str | Path) -> Path:
    """One JSON object per line, in slice_id order."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            for s in samples:
                f.write(json.dumps(s.to_obj()) + "\n")
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc
    return path


def read_samples(path: str | Path) -> list[InstructionSample]:
    samples = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            obj = json.loads(line)
            samples.append(
                InstructionSample(
                    image_path=obj["image_path"],
                    task=Task(obj["task"]),
                    instruction_text=obj["instruction_text"],
                    target_text=obj["target_text"],
                    stage=Stage(obj["stage"]),
                    organ=obj["organ"],
                    split=obj["split"],
                    slice_id=obj["slice_id"],
                )
            )
    return samples


# Fine-tuning hyperparameters recorded in the manifest, common to all stages.
STAGE_HYPERPARAMETERS = {
    "epochs": 50,
    "image_size": 448,
    "optimizer": "AdamW",
    "lr_schedule": "linear_warmup_cosine",
    "learning_rate": 1e-5,
    "warmup_lr": 1e-6,
    "min_lr": 1e-6,
    "weight_decay": 0.05,
    "adapter_rank": 64,
    "adapter_alpha": 16,
    "adapter_target_matrices": ["query", "key"],
    "loss": "cross_entropy",
}

BASE_CHECKPOINT_SLOT = "checkpoints/base"


def build_manifest(stage_files: dict[Stage, dict[str, str]]) -> dict:
    """Cascade manifest: ordered stages, each starting from its predecessor.

    stage_files maps each core stage to its dataset file refs, e.g.
    {"train": "...", "test": "..."}.
    """
    missing = [s.value for s in CORE_STAGES if s not in stage_files]
    if missing:
        raise IoFailureError(f"manifest needs datasets for every core stage; missing {missing}")
    stages = []
    previous_output = BASE_CHECKPOINT_SLOT
    for order, stage in enumerate(CORE_STAGES, start=1):
        output = f"checkpoints/stage{order}_{stage.value}"
        stages.append(
            {
                "order": order,
                "name": stage.value,
                "task": stage_task(stage).value,
                "datasets": dict(stage_files[stage]),
                "init_checkpoint": previous_output,
                "output_checkpoint": output,
                "hyperparameters": dict(STAGE_HYPERPARAMETERS),
            }
        )
        previous_output = output
    return {"kind": "cascade-finetune-manifest", "version": 1, "stages": stages}


def emit_manifest(stage_files: dict[Stage, dict[str, str]], out_path: str | Path) -> Path:
    manifest = build_manifest(stage_files)
    out_path = Path(out_path)
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailureError(f"cannot write {out_path}: {exc}") from exc
    return out_path
