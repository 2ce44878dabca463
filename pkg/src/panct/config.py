"""Pipeline configuration: a JSON file validated up front, unknown keys rejected."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import BadConfigError

_DATASET_KEYS = {"images_dir", "labels_dir", "label_map", "organs"}
_BACKEND_KEYS = {"kind", "seed", "shift_pct", "scale_pct", "flip_to_failure_prob", "recording", "endpoint", "timeout_s"}
_TOP_KEYS = {"datasets", "output_dir", "clip_fraction", "threshold", "split_seed", "instruction_seed", "backend", "host", "port"}


@dataclass(frozen=True)
class DatasetConfig:
    name: str
    images_dir: Path
    labels_dir: Path
    label_map: dict[str, int]
    organs: tuple[str, ...] = ("pancreas",)


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "oracle"
    seed: int = 0
    shift_pct: float = 0.0
    scale_pct: float = 0.0
    flip_to_failure_prob: float = 0.0
    recording: Path | None = None
    endpoint: str | None = None
    timeout_s: float = 30.0


@dataclass(frozen=True)
class PipelineConfig:
    datasets: list[DatasetConfig]
    output_dir: Path
    clip_fraction: float = 0.02
    threshold: float = 0.6
    split_seed: int = 0
    instruction_seed: int = 0
    backend: BackendConfig = field(default_factory=BackendConfig)
    host: str = "127.0.0.1"
    port: int = 8080

    @property
    def catalog_path(self) -> Path:
        return self.output_dir / "catalog.json"

    @property
    def png_root(self) -> Path:
        return self.output_dir / "png"

    @property
    def datasets_dir(self) -> Path:
        return self.output_dir / "datasets"

    @property
    def reports_dir(self) -> Path:
        return self.output_dir / "reports"


def _reject_unknown(obj: dict, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise BadConfigError(f"{where}: unknown keys {sorted(unknown)}")


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise BadConfigError(f"{where}: missing required key {key!r}")
    return obj[key]


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise BadConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise BadConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise BadConfigError(f"config {path}: root must be a JSON object")
    return parse_config(raw, base_dir=path.parent)


def parse_config(raw: dict, base_dir: Path | None = None) -> PipelineConfig:
    base = base_dir or Path.cwd()
    _reject_unknown(raw, _TOP_KEYS, "config")

    datasets_raw = _require(raw, "datasets", "config")
    if not isinstance(datasets_raw, dict) or not datasets_raw:
        raise BadConfigError("config: 'datasets' must be a non-empty object")
    datasets = []
    for name, ds in datasets_raw.items():
        where = f"datasets.{name}"
        if not isinstance(ds, dict):
            raise BadConfigError(f"{where}: must be an object")
        _reject_unknown(ds, _DATASET_KEYS, where)
        label_map = _require(ds, "label_map", where)
        if not isinstance(label_map, dict) or not all(
            isinstance(k, str) and isinstance(v, int) for k, v in label_map.items()
        ):
            raise BadConfigError(f"{where}: label_map must map organ names to integer codes")
        organs = tuple(ds.get("organs", ["pancreas"]))
        for organ in organs:
            if organ not in label_map:
                raise BadConfigError(f"{where}: organ {organ!r} missing from label_map")
        datasets.append(
            DatasetConfig(
                name=name,
                images_dir=base / str(_require(ds, "images_dir", where)),
                labels_dir=base / str(_require(ds, "labels_dir", where)),
                label_map={str(k): int(v) for k, v in label_map.items()},
                organs=organs,
            )
        )

    backend_raw = raw.get("backend", {})
    if not isinstance(backend_raw, dict):
        raise BadConfigError("config: 'backend' must be an object")
    _reject_unknown(backend_raw, _BACKEND_KEYS, "backend")
    kind = backend_raw.get("kind", "oracle")
    if kind not in ("oracle", "replay", "remote"):
        raise BadConfigError(f"backend.kind must be oracle|replay|remote, got {kind!r}")
    if kind == "replay" and not backend_raw.get("recording"):
        raise BadConfigError("backend.kind=replay requires backend.recording")
    if kind == "remote" and not backend_raw.get("endpoint"):
        raise BadConfigError("backend.kind=remote requires backend.endpoint")
    backend = BackendConfig(
        kind=kind,
        seed=int(backend_raw.get("seed", 0)),
        shift_pct=float(backend_raw.get("shift_pct", 0.0)),
        scale_pct=float(backend_raw.get("scale_pct", 0.0)),
        flip_to_failure_prob=float(backend_raw.get("flip_to_failure_prob", 0.0)),
        recording=(base / backend_raw["recording"]) if backend_raw.get("recording") else None,
        endpoint=backend_raw.get("endpoint"),
        timeout_s=float(backend_raw.get("timeout_s", 30.0)),
    )

    clip_fraction = float(raw.get("clip_fraction", 0.02))
    if not 0.0 <= clip_fraction < 1.0:
        raise BadConfigError(f"clip_fraction {clip_fraction} outside [0, 1)")
    threshold = float(raw.get("threshold", 0.6))
    if not 0.0 <= threshold <= 1.0:
        raise BadConfigError(f"threshold {threshold} outside [0, 1]")

    return PipelineConfig(
        datasets=datasets,
        output_dir=base / str(_require(raw, "output_dir", "config")),
        clip_fraction=clip_fraction,
        threshold=threshold,
        split_seed=int(raw.get("split_seed", 0)),
        instruction_seed=int(raw.get("instruction_seed", 0)),
        backend=backend,
        host=str(raw.get("host", "127.0.0.1")),
        port=int(raw.get("port", 8080)),
    )
