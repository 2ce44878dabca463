"""Serving backends behind one request/response contract.

Three interchangeable answer sources: an oracle that derives responses from
ground-truth annotations (with optional perturbation), a replay source that
returns recorded model outputs verbatim, and a remote proxy that forwards
the assembled prompt to an external text-in/text-out model server.
"""

from __future__ import annotations

import base64
import random
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import httpx

from .boxes import NormalizedBox, normalize_box, render_bbox_text
from .catalog import SliceRecord
from .errors import PanctError
from .instructions import (
    CLASSIFICATION_INSTRUCTIONS,
    InstructionSample,
    Stage,
    Task,
    assemble_prompt,
    instruction_target,
)
from .metrics import PredictionRecord, UnknownSliceIdError
from .parsing import ParsedBox, ParseFailure, parse_output


class MissingRecordingError(PanctError):
    """Replay has no entry for the requested (slice, stage) pair."""


class RemoteUnavailableError(PanctError):
    """Remote endpoint cannot be reached."""


class RemoteTimeoutError(PanctError):
    """Remote endpoint did not answer within the configured timeout."""


class RemoteMalformedResponseError(PanctError):
    """Remote endpoint answered without the expected text field."""


class UnsupportedRequestError(PanctError):
    """Backend cannot serve this request shape (e.g. inline image on oracle)."""


# Natural-language non-answer used when the oracle simulates the failure
# mode of answering in prose instead of the expected format.
FAILURE_TEXT = "The region of interest lies in the upper abdomen, behind the stomach and in front of the spine."


@dataclass(frozen=True)
class ChatRequest:
    task: Task
    instruction_text: str
    slice_id: int | None = None
    image_b64: str | None = None
    session_id: str | None = None

    def __post_init__(self) -> None:
        if (self.slice_id is None) == (self.image_b64 is None):
            raise ValueError("exactly one of slice_id / image_b64 must be set")


@dataclass(frozen=True)
class ChatResponse:
    raw_text: str
    parsed: dict
    backend: str
    latency_ms: float


def parsed_echo(raw_text: str, task: Task) -> dict:
    """Convenience echo of the evaluation parser's view of raw_text."""
    parsed = parse_output(raw_text, "bbox" if task == Task.REFER else "yesno")
    if isinstance(parsed, ParseFailure):
        return {"kind": "failure", "reason": parsed.reason}
    if isinstance(parsed, ParsedBox):
        box = parsed.box
        return {
            "kind": "box",
            "box": [box.x_left, box.y_top, box.x_right, box.y_bottom],
            "repaired": parsed.repaired,
        }
    return {"kind": "answer", "answer": parsed}


class Backend(Protocol):
    name: str

    def answer(self, request: ChatRequest) -> ChatResponse: ...


def _respond(name: str, raw_text: str, task: Task, started: float) -> ChatResponse:
    return ChatResponse(
        raw_text=raw_text,
        parsed=parsed_echo(raw_text, task),
        backend=name,
        latency_ms=(time.perf_counter() - started) * 1000.0,
    )


def stage_for_request(task: Task, instruction_text: str, organ: str = "pancreas") -> Stage:
    """Infer the cascade stage a request belongs to from its instruction."""
    if task == Task.VQA or instruction_text in CLASSIFICATION_INSTRUCTIONS:
        return Stage.TUMOR_CLASSIFICATION
    target = instruction_target(instruction_text)
    if target == "pancreas tumor":
        return Stage.TUMOR_DETECTION
    if target in (None, "pancreas") and organ == "pancreas":
        return Stage.PANCREAS_DETECTION
    return Stage.MULTI_ORGAN_DETECTION


@dataclass(frozen=True)
class Perturbation:
    """Oracle noise in normalized [0, 100] units, resolution-independent."""

    shift_pct: float = 0.0
    scale_pct: float = 0.0
    flip_to_failure_prob: float = 0.0


class OracleBackend:
    """Answers from ground truth, optionally perturbed; deterministic per (seed, request)."""

    name = "oracle"

    def __init__(self, records: dict[int, SliceRecord], perturbation: Perturbation | None = None, seed: int = 0):
        self.records = records
        self.perturbation = perturbation or Perturbation()
        self.seed = seed

    def answer(self, request: ChatRequest) -> ChatResponse:
        started = time.perf_counter()
        if request.slice_id is None:
            raise UnsupportedRequestError("oracle answers only catalog slices (slice_id required)")
        record = self.records.get(request.slice_id)
        if record is None:
            raise UnknownSliceIdError(f"slice_id {request.slice_id} not in catalog")
        rng = random.Random(f"{self.seed}:{request.slice_id}:{request.task.value}:{request.instruction_text}")
        if rng.random() < self.perturbation.flip_to_failure_prob:
            return _respond(self.name, FAILURE_TEXT, request.task, started)
        if request.task == Task.VQA:
            return _respond(self.name, "yes" if record.has_tumor else "no", request.task, started)

        target = instruction_target(request.instruction_text)
        if target == "pancreas tumor":
            if record.bbox_tumor is None:
                return _respond(self.name, FAILURE_TEXT, request.task, started)
            box = record.bbox_tumor
        else:
            box = record.bbox
        nbox = normalize_box(box, record.width, record.height)
        nbox = self._perturb(nbox, rng)
        return _respond(self.name, render_bbox_text(nbox), request.task, started)

    def _perturb(self, nbox: NormalizedBox, rng: random.Random) -> NormalizedBox:
        shift, scale = self.perturbation.shift_pct, self.perturbation.scale_pct
        if shift == 0.0 and scale == 0.0:
            return nbox
        cx = (nbox.x_left + nbox.x_right) / 2.0
        cy = (nbox.y_top + nbox.y_bottom) / 2.0
        half_w = (nbox.x_right - nbox.x_left) / 2.0
        half_h = (nbox.y_bottom - nbox.y_top) / 2.0
        cx += rng.uniform(-shift, shift)
        cy += rng.uniform(-shift, shift)
        factor = 1.0 + rng.uniform(-scale, scale) / 100.0
        half_w *= factor
        half_h *= factor

        def clamp(v: float) -> int:
            return max(0, min(100, round(v)))

        x1, x2 = sorted((clamp(cx - half_w), clamp(cx + half_w)))
        y1, y2 = sorted((clamp(cy - half_h), clamp(cy + half_h)))
        return NormalizedBox(x1, y1, x2, y2)


class ReplayBackend:
    """Returns recorded raw model outputs verbatim, keyed by (slice_id, stage)."""

    name = "replay"

    def __init__(self, recorded: list[PredictionRecord]):
        self.entries = {(p.slice_id, p.stage): p.raw_text for p in recorded}

    def answer(self, request: ChatRequest) -> ChatResponse:
        started = time.perf_counter()
        if request.slice_id is None:
            raise UnsupportedRequestError("replay answers only catalog slices (slice_id required)")
        stage = stage_for_request(request.task, request.instruction_text)
        key = (request.slice_id, stage)
        if key not in self.entries:
            raise MissingRecordingError(f"no recording for slice {request.slice_id} / {stage.value}")
        return _respond(self.name, self.entries[key], request.task, started)


class RemoteBackend:
    """Forwards the fully assembled prompt to an external model server.

    Wire contract: POST endpoint with JSON {"prompt", "image_b64"? ,
    "image_ref"?}; the server answers {"text": "..."}.
    """

    name = "remote"

    def __init__(
        self,
        endpoint: str,
        records: dict[int, SliceRecord] | None = None,
        png_root: str | Path | None = None,
        timeout_s: float = 30.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.records = records or {}
        self.png_root = Path(png_root) if png_root else None
        self.timeout_s = timeout_s
        self._client = httpx.Client(timeout=timeout_s, transport=transport)

    def close(self) -> None:
        self._client.close()

    def _image_payload(self, request: ChatRequest) -> dict:
        if request.image_b64 is not None:
            return {"image_b64": request.image_b64}
        record = self.records.get(request.slice_id or -1)
        if record is None:
            raise UnknownSliceIdError(f"slice_id {request.slice_id} not in catalog")
        from .slices import png_name

        ref = f"{record.dataset}/{png_name(record.dataset, record.volume_name, record.slice_index)}"
        if self.png_root is not None:
            image_file = self.png_root / ref
            if image_file.exists():
                return {"image_b64": base64.b64encode(image_file.read_bytes()).decode("ascii"), "image_ref": ref}
        return {"image_ref": ref}

    def answer(self, request: ChatRequest) -> ChatResponse:
        started = time.perf_counter()
        payload = {"prompt": assemble_prompt(request.task, request.instruction_text)}
        payload.update(self._image_payload(request))
        try:
            response = self._client.post(self.endpoint, json=payload)
            response.raise_for_status()
        except httpx.TimeoutException as exc:
            raise RemoteTimeoutError(f"{self.endpoint}: {exc}") from exc
        except httpx.HTTPStatusError as exc:
            raise RemoteMalformedResponseError(f"{self.endpoint}: status {exc.response.status_code}") from exc
        except httpx.HTTPError as exc:
            raise RemoteUnavailableError(f"{self.endpoint}: {exc}") from exc
        try:
            body = response.json()
        except ValueError as exc:
            raise RemoteMalformedResponseError(f"{self.endpoint}: non-JSON body") from exc
        if not isinstance(body, dict) or not isinstance(body.get("text"), str):
            raise RemoteMalformedResponseError(f"{self.endpoint}: missing 'text' field")
        return _respond(self.name, body["text"], request.task, started)


def collect_predictions(backend: Backend, samples: list[InstructionSample], split: str = "test") -> list[PredictionRecord]:
    """Drive a backend over a stage dataset's split and collect raw outputs."""
    predictions = []
    for sample in samples:
        if split and sample.split != split:
            continue
        request = ChatRequest(task=sample.task, instruction_text=sample.instruction_text, slice_id=sample.slice_id)
        response = backend.answer(request)
        predictions.append(
            PredictionRecord(
                slice_id=sample.slice_id,
                stage=sample.stage,
                organ=sample.organ,
                raw_text=response.raw_text,
            )
        )
    return predictions
