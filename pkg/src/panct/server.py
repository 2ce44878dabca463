"""HTTP service exposing slices, records, and chat against any backend."""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .backends import (
    Backend,
    ChatRequest,
    MissingRecordingError,
    RemoteMalformedResponseError,
    RemoteTimeoutError,
    RemoteUnavailableError,
    UnsupportedRequestError,
)
from .catalog import SliceRecord, record_to_obj
from .errors import PanctError
from .instructions import Task
from .metrics import UnknownSliceIdError
from .slices import png_name


class PortInUseError(PanctError):
    """Requested port is already bound."""


class ChatBody(BaseModel):
    task: str
    instruction: str
    slice_id: int | None = None
    image_b64: str | None = None
    session_id: str | None = None


class SessionStore:
    """Per-session transcript, display-only; never consulted for answers."""

    def __init__(self) -> None:
        self._turns: dict[str, list[dict]] = {}
        self._lock = threading.Lock()

    def append(self, session_id: str, turn: dict) -> None:
        with self._lock:
            self._turns.setdefault(session_id, []).append(turn)

    def turns(self, session_id: str) -> list[dict]:
        with self._lock:
            return list(self._turns.get(session_id, []))


def create_app(
    records: dict[int, SliceRecord],
    backend: Backend,
    png_root: str | Path | None = None,
    console_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="panct gateway", version="1")
    sessions = SessionStore()
    png_base = Path(png_root) if png_root else None
    ordered_ids = sorted(records)

    @app.get("/v1/health")
    def health() -> dict:
        return {"status": "ok", "backend": backend.name, "slices": len(records)}

    @app.get("/v1/slices")
    def list_slices(
        dataset: str | None = None,
        has_tumor: bool | None = None,
        min_bbox_ratio: float | None = None,
        organ: str | None = None,
        page: int = Query(1, ge=1),
        page_size: int = Query(50, ge=1, le=500),
    ) -> dict:
        items = []
        for slice_id in ordered_ids:
            rec = records[slice_id]
            if dataset is not None and rec.dataset != dataset:
                continue
            if organ is not None and rec.organ != organ:
                continue
            if has_tumor is not None and rec.has_tumor != has_tumor:
                continue
            if min_bbox_ratio is not None and rec.bbox_ratio < min_bbox_ratio:
                continue
            items.append(rec)
        start = (page - 1) * page_size
        page_items = items[start : start + page_size]
        return {
            "items": [record_to_obj(r) for r in page_items],
            "total": len(items),
            "page": page,
            "page_size": page_size,
        }

    def _record_or_404(slice_id: int) -> SliceRecord:
        rec = records.get(slice_id)
        if rec is None:
            raise HTTPException(status_code=404, detail=f"slice_id {slice_id} not in catalog")
        return rec

    @app.get("/v1/slices/{slice_id}/record")
    def get_record(slice_id: int) -> dict:
        return record_to_obj(_record_or_404(slice_id))

    @app.get("/v1/slices/{slice_id}/image")
    def get_image(slice_id: int) -> FileResponse:
        rec = _record_or_404(slice_id)
        if png_base is None:
            raise HTTPException(status_code=404, detail="no image store configured")
        path = png_base / rec.dataset / png_name(rec.dataset, rec.volume_name, rec.slice_index)
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"image not exported: {path.name}")
        return FileResponse(path, media_type="image/png")

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        return {"session_id": session_id, "turns": sessions.turns(session_id)}

    @app.post("/v1/chat")
    def chat(body: ChatBody) -> JSONResponse:
        if (body.slice_id is None) == (body.image_b64 is None):
            raise HTTPException(status_code=400, detail="exactly one of slice_id / image_b64 required")
        try:
            task = Task(body.task)
        except ValueError:
            raise HTTPException(status_code=400, detail=f"unknown task {body.task!r}")
        request = ChatRequest(
            task=task,
            instruction_text=body.instruction,
            slice_id=body.slice_id,
            image_b64=body.image_b64,
            session_id=body.session_id,
        )
        try:
            response = backend.answer(request)
        except UnknownSliceIdError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except MissingRecordingError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except UnsupportedRequestError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except RemoteTimeoutError as exc:
            raise HTTPException(status_code=504, detail=str(exc))
        except (RemoteUnavailableError, RemoteMalformedResponseError) as exc:
            raise HTTPException(status_code=502, detail=str(exc))
        payload = {
            "raw_text": response.raw_text,
            "parsed": response.parsed,
            "backend": response.backend,
            "latency_ms": response.latency_ms,
        }
        if body.session_id:
            sessions.append(
                body.session_id,
                {
                    "request": {"task": task.value, "instruction": body.instruction, "slice_id": body.slice_id},
                    "response": payload,
                },
            )
        return JSONResponse(payload)

    if console_dir is not None:
        app.mount("/", StaticFiles(directory=str(console_dir), html=True), name="console")
    return app


def _port_busy(host: str, port: int) -> bool:
    import socket

    with socket.socket() as probe:
        try:
            probe.bind((host, port))
        except OSError:
            return True
    return False


def serve(app: FastAPI, host: str = "127.0.0.1", port: int = 8080, log_level: str = "info") -> None:
    """Run the service until interrupted; drains in-flight requests on shutdown."""
    import uvicorn

    config = uvicorn.Config(app, host=host, port=port, log_level=log_level)
    server = uvicorn.Server(config)
    try:
        server.run()
    except OSError as exc:
        if exc.errno == 98:  # EADDRINUSE
            raise PortInUseError(f"{host}:{port} already in use") from exc
        raise
    except SystemExit as exc:
        # uvicorn exits instead of raising when startup fails
        if _port_busy(host, port):
            raise PortInUseError(f"{host}:{port} already in use") from exc
        raise
