"""Scoring and aggregation: IoU means, classification scores, sweep tables.

Scoring one prediction is pure; aggregation reduces scored rows in
slice_id order, so reports are bit-identical however the scoring was
scheduled.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .boxes import NormalizedBox, iou, normalize_box
from .catalog import MissingTargetError, SliceRecord
from .errors import IoFailureError, PanctError
from .instructions import Stage
from .parsing import ParsedBox, ParseFailure, parse_output


class EmptyInputError(PanctError):
    """Metric requested over zero pairs."""


class UnknownSliceIdError(PanctError):
    """Prediction references a slice_id absent from the catalog."""


@dataclass(frozen=True)
class PredictionRecord:
    slice_id: int
    stage: Stage
    organ: str
    raw_text: str

    def to_obj(self) -> dict:
        return {
            "slice_id": self.slice_id,
            "stage": self.stage.value,
            "organ": self.organ,
            "raw_text": self.raw_text,
        }


def read_predictions(path: str | Path) -> list[PredictionRecord]:
    preds = []
    try:
        with open(path, encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                obj = json.loads(line)
                preds.append(
                    PredictionRecord(
                        slice_id=obj["slice_id"],
                        stage=Stage(obj["stage"]),
                        organ=obj["organ"],
                        raw_text=obj["raw_text"],
                    )
                )
    except OSError as exc:
        raise IoFailureError(f"cannot read {path}: {exc}") from exc
    return preds


def write_predictions(preds: list[PredictionRecord], path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            for p in preds:
                f.write(json.dumps(p.to_obj()) + "\n")
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc
    return path


@dataclass(frozen=True)
class ClassificationScores:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int


def classify_metrics(pairs: list[tuple[str | None, bool]]) -> ClassificationScores:
    """Confusion-matrix scores over (predicted "yes"/"no"/None, GT positive) pairs.

    "yes" is the positive class. A None prediction (parse failure) counts
    as the wrong answer for its GT.
    """
    if not pairs:
        raise EmptyInputError("no classification pairs")
    tp = fp = fn = tn = 0
    for predicted, positive in pairs:
        if predicted is None:
            predicted = "no" if positive else "yes"
        if predicted == "yes" and positive:
            tp += 1
        elif predicted == "yes":
            fp += 1
        elif positive:
            fn += 1
        else:
            tn += 1
    n = tp + fp + fn + tn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ClassificationScores((tp + tn) / n, precision, recall, f1, tp, fp, fn, tn)


def weighted_average(means: dict[str, float], weights: dict[str, int]) -> float:
    """Mean of per-group means weighted by per-group slice counts."""
    total = sum(weights[g] for g in means)
    if total == 0:
        raise EmptyInputError("zero total weight")
    return sum(means[g] * weights[g] for g in sorted(means)) / total


def gt_box(record: SliceRecord, stage: Stage) -> NormalizedBox:
    """The record's ground-truth box for a detection stage, normalized."""
    if stage == Stage.TUMOR_DETECTION:
        if record.bbox_tumor is None:
            raise MissingTargetError(f"slice {record.slice_id} has no tumor box")
        return normalize_box(record.bbox_tumor, record.width, record.height)
    return normalize_box(record.bbox, record.width, record.height)


@dataclass(frozen=True)
class ScoredPrediction:
    prediction: PredictionRecord
    dataset: str
    organ: str
    iou: float | None  # detection only
    answer: str | None  # classification only; None on failure
    gt_positive: bool | None
    failed: bool
    repaired: bool


def score_prediction(pred: PredictionRecord, record: SliceRecord) -> ScoredPrediction:
    if pred.stage == Stage.TUMOR_CLASSIFICATION:
        parsed = parse_output(pred.raw_text, "yesno")
        failed = isinstance(parsed, ParseFailure)
        return ScoredPrediction(
            prediction=pred,
            dataset=record.dataset,
            organ=pred.organ,
            iou=None,
            answer=None if failed else parsed,  # type: ignore[arg-type]
            gt_positive=record.has_tumor,
            failed=failed,
            repaired=False,
        )
    parsed = parse_output(pred.raw_text, "bbox")
    if isinstance(parsed, ParseFailure):
        return ScoredPrediction(pred, record.dataset, pred.organ, 0.0, None, None, True, False)
    assert isinstance(parsed, ParsedBox)
    value = iou(parsed.box, gt_box(record, pred.stage))
    return ScoredPrediction(pred, record.dataset, pred.organ, value, None, None, False, parsed.repaired)


@dataclass(frozen=True)
class MetricsReport:
    per_dataset_iou: dict[str, float]
    weighted_iou: float | None
    per_organ_iou: dict[str, float]
    accuracy: float | None
    precision: float | None
    recall: float | None
    f1: float | None
    n_slices: int
    n_detection: int
    n_classification: int
    n_parse_failures: int
    n_repaired: int
    dataset_counts: dict[str, int]

    def to_obj(self) -> dict:
        return {
            "per_dataset_iou": dict(sorted(self.per_dataset_iou.items())),
            "weighted_iou": self.weighted_iou,
            "per_organ_iou": dict(sorted(self.per_organ_iou.items())),
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "counts": {
                "slices": self.n_slices,
                "detection": self.n_detection,
                "classification": self.n_classification,
                "parse_failures": self.n_parse_failures,
                "repaired_boxes": self.n_repaired,
                "per_dataset": dict(sorted(self.dataset_counts.items())),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), indent=2) + "\n"

    def render_text(self) -> str:
        lines = []
        if self.per_dataset_iou:
            headers = ["Dataset", "IoU", "Slices"]
            rows = [
                [d, f"{v:.3f}", str(self.dataset_counts.get(d, 0))]
                for d, v in sorted(self.per_dataset_iou.items())
            ]
            if self.weighted_iou is not None:
                rows.append(["Average", f"{self.weighted_iou:.3f}", str(sum(self.dataset_counts.values()))])
            lines.append(_table(headers, rows))
        if self.per_organ_iou:
            rows = [[o, f"{v:.3f}"] for o, v in sorted(self.per_organ_iou.items())]
            mean = sum(self.per_organ_iou.values()) / len(self.per_organ_iou)
            rows.append(["Average", f"{mean:.3f}"])
            lines.append(_table(["Organ", "IoU"], rows))
        if self.accuracy is not None:
            lines.append(
                _table(
                    ["Accuracy", "Precision", "Recall", "F1"],
                    [[f"{self.accuracy:.3f}", f"{self.precision:.3f}", f"{self.recall:.3f}", f"{self.f1:.3f}"]],
                )
            )
        lines.append(
            f"slices={self.n_slices} parse_failures={self.n_parse_failures} repaired={self.n_repaired}"
        )
        return "\n".join(lines) + "\n"


def _table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max([len(h)] + [len(r[i]) for r in rows]) for i, h in enumerate(headers)]
    def fmt(cells: list[str]) -> str:
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    return "\n".join([fmt(headers), fmt(["-" * w for w in widths])] + [fmt(r) for r in rows])


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


def aggregate(
    predictions: list[PredictionRecord],
    records: dict[int, SliceRecord],
    max_workers: int = 1,
) -> MetricsReport:
    """Score every prediction against the catalog and reduce to one report.

    Parse failures score 0 IoU on detection and count as wrong answers on
    classification. The cross-dataset weighted IoU uses per-dataset scored
    slice counts as weights.
    """
    if not predictions:
        raise EmptyInputError("no predictions")
    for p in predictions:
        if p.slice_id not in records:
            raise UnknownSliceIdError(f"slice_id {p.slice_id} not in catalog")

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            scored = list(pool.map(lambda p: score_prediction(p, records[p.slice_id]), predictions))
    else:
        scored = [score_prediction(p, records[p.slice_id]) for p in predictions]
    scored.sort(key=lambda s: (s.prediction.slice_id, s.prediction.stage.value))

    det = [s for s in scored if s.iou is not None]
    cls = [s for s in scored if s.iou is None]

    by_dataset: dict[str, list[float]] = {}
    by_organ: dict[str, list[float]] = {}
    for s in det:
        by_dataset.setdefault(s.dataset, []).append(s.iou)  # type: ignore[arg-type]
        by_organ.setdefault(s.organ, []).append(s.iou)  # type: ignore[arg-type]
    per_dataset = {d: _mean(v) for d, v in by_dataset.items()}
    counts = {d: len(v) for d, v in by_dataset.items()}
    weighted = weighted_average(per_dataset, counts) if per_dataset else None

    accuracy = precision = recall = f1 = None
    if cls:
        pairs = [(s.answer, bool(s.gt_positive)) for s in cls]
        c = classify_metrics(pairs)
        accuracy, precision, recall, f1 = c.accuracy, c.precision, c.recall, c.f1

    return MetricsReport(
        per_dataset_iou=per_dataset,
        weighted_iou=weighted,
        per_organ_iou={o: _mean(v) for o, v in by_organ.items()},
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        n_slices=len(scored),
        n_detection=len(det),
        n_classification=len(cls),
        n_parse_failures=sum(1 for s in scored if s.failed),
        n_repaired=sum(1 for s in scored if s.repaired),
        dataset_counts=counts,
    )


def sweep_table(labeled: list[tuple[str, MetricsReport]], label_header: str = "Threshold (%)") -> str:
    """Aligned sweep table: one row per run, per-dataset IoU plus the average."""
    datasets = sorted({d for _, rep in labeled for d in rep.per_dataset_iou})
    headers = [label_header] + [f"{d} IoU" for d in datasets] + ["Average IoU"]
    rows = []
    for label, rep in labeled:
        cells = [label]
        cells += [f"{rep.per_dataset_iou[d]:.3f}" if d in rep.per_dataset_iou else "-" for d in datasets]
        cells.append(f"{rep.weighted_iou:.3f}" if rep.weighted_iou is not None else "-")
        rows.append(cells)
    return _table(headers, rows)


def split_count_table(labeled: list[tuple[str, dict[str, int], dict[str, int]]]) -> str:
    """Rows of (label, train counts, test counts) per dataset, sweep layout."""
    datasets = sorted({d for _, tr, te in labeled for d in list(tr) + list(te)})
    headers = ["Threshold (%)"]
    for d in datasets:
        headers += [f"{d} Train", f"{d} Test"]
    rows = []
    for label, tr, te in labeled:
        cells = [label]
        for d in datasets:
            cells += [str(tr.get(d, 0)), str(te.get(d, 0))]
        rows.append(cells)
    return _table(headers, rows)
