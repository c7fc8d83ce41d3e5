"""HTTP + WebSocket service wrapping the interactive segmenter.

Endpoints (JSON unless noted):

* POST /volumes                      raw MetaImage upload -> volume_id
* GET  /volumes/{id}/slice           windowed 8-bit PNG of one plane
* POST /sessions                     {volume_id, params?} -> session_id
* PUT  /sessions/{id}/seed           {x, y, z} -> segmentation summary
* POST /sessions/{id}/border-seeds   {x, y, z} -> segmentation summary
* DELETE /sessions/{id}/border-seeds clear border seeds
* GET  /sessions/{id}/contour        overlay polylines for one slice
* POST /sessions/{id}/commit         -> mask_id
* GET  /masks/{id}                   MetaImage download
* GET  /sessions/{id}/metrics        DSC + volumes against a reference mask
* DELETE /sessions/{id}              drop the session
* WS   /sessions/{id}/live           seed dragging with latest-wins replies

Within one session mutating calls are serialized by a lock; distinct
sessions compute concurrently.  Session state persists through the
append-only store, so a restart between any two calls is invisible to
clients (results are recomputed lazily on demand).
"""

from __future__ import annotations

import asyncio
import json
import os
import threading

import anyio.to_thread
from fastapi import FastAPI, Query, Request, Response, WebSocket, \
    WebSocketDisconnect
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel

from .. import evalstat
from ..errors import (
    ConstraintConflictError,
    ConstraintOutOfRangeError,
    GeometryMismatchError,
    InfeasibleConstraintsError,
    MetaImageParseError,
    NuggetCutError,
    OutOfVolumeError,
    UnsupportedFormatError,
    VolumeSizeError,
)
from ..segmenter import SegmentationParams, Session, segment
from .slices import contour_overlay, plane_axis, render_slice_png
from .storage import SessionRecord, Store


class SeedBody(BaseModel):
    x: float
    y: float
    z: float


class SessionCreateBody(BaseModel):
    volume_id: str
    params: dict | None = None


class _Runtime:
    """Per-session in-memory state: the live Session plus its lock."""

    def __init__(self, record: SessionRecord, session: Session):
        self.record = record
        self.session = session
        self.lock = threading.Lock()


def _http_error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"detail": message})


def create_app(data_dir: str, max_upload_mb: int = 512) -> FastAPI:
    app = FastAPI(title="nuggetcut service", version="0.1.0")
    store = Store(data_dir)
    app.state.store = store
    app.state.max_upload_bytes = max_upload_mb * 1024 * 1024
    volumes: dict = {}
    runtimes: dict[str, _Runtime] = {}
    state_lock = threading.Lock()

    def get_volume(volume_id: str):
        with state_lock:
            cached = volumes.get(volume_id)
        if cached is not None:
            return cached
        vol = store.get_volume(volume_id)
        with state_lock:
            volumes[volume_id] = vol
        return vol

    def get_runtime(session_id: str) -> _Runtime | None:
        with state_lock:
            runtime = runtimes.get(session_id)
        if runtime is not None:
            return runtime
        record = store.sessions.get(session_id)
        if record is None:
            return None
        session = Session(
            volume=get_volume(record.volume_id),
            params=record.params,
            seed=record.seed,
            border_seeds=list(record.border_seeds),
        )
        runtime = _Runtime(record, session)
        with state_lock:
            runtime = runtimes.setdefault(session_id, runtime)
        return runtime

    def compute(runtime: _Runtime):
        """Segment under the session lock and persist the session state."""
        with runtime.lock:
            runtime.session.seed = runtime.record.seed
            runtime.session.border_seeds = list(runtime.record.border_seeds)
            result = segment(runtime.session)
            store.save_session(runtime.record)
            return result

    def ensure_result(runtime: _Runtime):
        if runtime.session.last_result is None and runtime.record.seed:
            with runtime.lock:
                if runtime.session.last_result is None:
                    runtime.session.seed = runtime.record.seed
                    runtime.session.border_seeds = list(
                        runtime.record.border_seeds)
                    segment(runtime.session)
        return runtime.session.last_result

    def summary(runtime: _Runtime, seg) -> dict:
        return {
            "session_id": runtime.record.session_id,
            "seed": list(runtime.record.seed),
            "border_seed_count": len(runtime.record.border_seeds),
            "voxel_count": seg.mask.voxel_count,
            "volume_mm3": seg.mask.physical_volume_mm3,
            "avg_used": seg.avg_used,
            "tau_used": seg.tau_used,
            "elapsed_ms": round(seg.elapsed_ms, 3),
            "cut_k": seg.cut.k.tolist(),
            "cut_radius_mm": {
                "min": float(seg.cut_radii_mm.min()),
                "max": float(seg.cut_radii_mm.max()),
                "mean": float(seg.cut_radii_mm.mean()),
            },
        }

    @app.exception_handler(NuggetCutError)
    async def nuggetcut_error_handler(request, exc: NuggetCutError):
        if isinstance(exc, (ConstraintConflictError,
                            InfeasibleConstraintsError)):
            return _http_error(409, str(exc))
        if isinstance(exc, (OutOfVolumeError, ConstraintOutOfRangeError,
                            GeometryMismatchError)):
            return _http_error(422, str(exc))
        if isinstance(exc, (MetaImageParseError, VolumeSizeError,
                            UnsupportedFormatError)):
            return _http_error(400, str(exc))
        return _http_error(500, str(exc))

    # -- volumes -------------------------------------------------------------

    @app.post("/volumes")
    async def upload_volume(request: Request):
        raw = await request.body()
        if len(raw) > app.state.max_upload_bytes:
            return _http_error(413, "volume exceeds the upload size cap")
        volume_id = await anyio.to_thread.run_sync(store.put_volume_bytes, raw)
        return {"volume_id": volume_id}

    @app.get("/volumes/{volume_id}/slice")
    async def volume_slice(
        volume_id: str,
        plane: str = Query("axial"),
        index: int = Query(0),
        window_center: float = Query(75.0),
        window_width: float = Query(400.0),
    ):
        if not store.has_volume(volume_id):
            return _http_error(404, f"unknown volume {volume_id}")
        vol = get_volume(volume_id)
        try:
            png = render_slice_png(vol, plane, index, window_center,
                                   window_width)
        except (ValueError, IndexError) as exc:
            return _http_error(422, str(exc))
        return Response(content=png, media_type="image/png")

    @app.get("/volumes/{volume_id}/meta")
    async def volume_meta(volume_id: str):
        if not store.has_volume(volume_id):
            return _http_error(404, f"unknown volume {volume_id}")
        vol = get_volume(volume_id)
        return {
            "volume_id": volume_id,
            "dims": list(vol.dims),
            "spacing": list(vol.spacing),
            "origin": list(vol.origin),
        }

    # -- sessions ------------------------------------------------------------

    @app.post("/sessions")
    async def create_session(body: SessionCreateBody):
        if not store.has_volume(body.volume_id):
            return _http_error(404, f"unknown volume {body.volume_id}")
        try:
            params = (SegmentationParams.from_dict(body.params)
                      if body.params else SegmentationParams())
        except (ValueError, TypeError) as exc:
            return _http_error(422, f"bad params: {exc}")
        record = store.create_session(body.volume_id, params)
        return {"session_id": record.session_id}

    @app.get("/sessions/{session_id}")
    async def session_state(session_id: str):
        runtime = get_runtime(session_id)
        if runtime is None:
            return _http_error(404, f"unknown session {session_id}")
        return runtime.record.to_dict()

    @app.delete("/sessions/{session_id}")
    async def delete_session(session_id: str):
        if session_id not in store.sessions:
            return _http_error(404, f"unknown session {session_id}")
        store.delete_session(session_id)
        with state_lock:
            runtimes.pop(session_id, None)
        return {"deleted": session_id}

    @app.put("/sessions/{session_id}/seed")
    async def put_seed(session_id: str, body: SeedBody):
        runtime = get_runtime(session_id)
        if runtime is None:
            return _http_error(404, f"unknown session {session_id}")
        seed = (body.x, body.y, body.z)
        if not runtime.session.volume.contains(seed):
            return _http_error(422, f"seed {seed} outside volume bounds")
        runtime.record.seed = seed
        seg = await anyio.to_thread.run_sync(compute, runtime)
        return summary(runtime, seg)

    @app.post("/sessions/{session_id}/border-seeds")
    async def add_border(session_id: str, body: SeedBody):
        runtime = get_runtime(session_id)
        if runtime is None:
            return _http_error(404, f"unknown session {session_id}")
        if runtime.record.seed is None:
            return _http_error(409, "place a seed before border seeds")
        point = (body.x, body.y, body.z)
        if not runtime.session.volume.contains(point):
            return _http_error(422, f"border seed {point} outside volume")
        runtime.record.border_seeds.append(point)
        try:
            seg = await anyio.to_thread.run_sync(compute, runtime)
        except NuggetCutError:
            runtime.record.border_seeds.pop()
            raise
        return summary(runtime, seg)

    @app.delete("/sessions/{session_id}/border-seeds")
    async def clear_borders(session_id: str):
        runtime = get_runtime(session_id)
        if runtime is None:
            return _http_error(404, f"unknown session {session_id}")
        runtime.record.border_seeds.clear()
        if runtime.record.seed is not None:
            seg = await anyio.to_thread.run_sync(compute, runtime)
            return summary(runtime, seg)
        store.save_session(runtime.record)
        return {"session_id": session_id, "border_seed_count": 0}

    @app.get("/sessions/{session_id}/contour")
    async def get_contour(session_id: str, plane: str = Query("axial"),
                          index: int = Query(0)):
        runtime = get_runtime(session_id)
        if runtime is None:
            return _http_error(404, f"unknown session {session_id}")
        try:
            plane_axis(plane)
        except ValueError as exc:
            return _http_error(422, str(exc))
        seg = await anyio.to_thread.run_sync(ensure_result, runtime)
        vol = runtime.session.volume
        try:
            overlay = contour_overlay(vol, seg, plane, index,
                                      runtime.record.seed,
                                      runtime.record.border_seeds)
        except IndexError as exc:
            return _http_error(422, str(exc))
        return overlay

    @app.post("/sessions/{session_id}/commit")
    async def commit(session_id: str):
        runtime = get_runtime(session_id)
        if runtime is None:
            return _http_error(404, f"unknown session {session_id}")
        seg = await anyio.to_thread.run_sync(ensure_result, runtime)
        if seg is None:
            return _http_error(409, "nothing to commit: no seed placed")
        mask_id = store.put_mask(seg.mask)
        runtime.record.committed_masks.append(mask_id)
        store.save_session(runtime.record)
        return {"mask_id": mask_id}

    @app.get("/masks/{mask_id}")
    async def download_mask(mask_id: str):
        if not store.has_mask(mask_id):
            return _http_error(404, f"unknown mask {mask_id}")
        return FileResponse(store.mask_path(mask_id),
                            media_type="application/octet-stream",
                            filename=mask_id + ".mhd")

    @app.get("/sessions/{session_id}/metrics")
    async def metrics(session_id: str, reference: str = Query(...)):
        runtime = get_runtime(session_id)
        if runtime is None:
            return _http_error(404, f"unknown session {session_id}")
        if not store.has_mask(reference):
            return _http_error(404, f"unknown mask {reference}")
        seg = await anyio.to_thread.run_sync(ensure_result, runtime)
        if seg is None:
            return _http_error(409, "no segmentation yet: place a seed")
        ref = store.get_mask(reference)
        d = evalstat.dice(ref, seg.mask)
        return {
            "dsc": round(d, 6),
            "dsc_percent": round(100.0 * d, 2),
            "reference_voxels": ref.voxel_count,
            "reference_volume_mm3": ref.physical_volume_mm3,
            "segmentation_voxels": seg.mask.voxel_count,
            "segmentation_volume_mm3": seg.mask.physical_volume_mm3,
        }

    # -- live channel ----------------------------------------------------------

    @app.websocket("/sessions/{session_id}/live")
    async def live(websocket: WebSocket, session_id: str):
        await websocket.accept()
        runtime = get_runtime(session_id)
        if runtime is None:
            await websocket.send_text(json.dumps(
                {"type": "error", "message": f"unknown session {session_id}"}
            ))
            await websocket.close()
            return
        subscriptions: list[dict] = []
        queue: asyncio.Queue = asyncio.Queue()

        async def reader():
            try:
                while True:
                    queue.put_nowait(await websocket.receive_text())
            except WebSocketDisconnect:
                queue.put_nowait(None)

        reader_task = asyncio.create_task(reader())
        try:
            while True:
                item = await queue.get()
                if item is None:
                    break
                batch = [item]
                while not queue.empty():
                    nxt = queue.get_nowait()
                    if nxt is None:
                        batch.append(None)
                        break
                    batch.append(nxt)
                disconnected = batch and batch[-1] is None
                if disconnected:
                    batch = batch[:-1]
                target = None
                for text in batch:
                    try:
                        msg = json.loads(text)
                        kind = msg.get("type", "seed")
                    except (json.JSONDecodeError, AttributeError):
                        await websocket.send_text(json.dumps(
                            {"type": "error", "message": "malformed message"}
                        ))
                        continue
                    if kind == "subscribe":
                        slices = msg.get("slices", [])
                        if not isinstance(slices, list):
                            await websocket.send_text(json.dumps(
                                {"type": "error",
                                 "message": "subscribe.slices must be a list"}
                            ))
                            continue
                        subscriptions = slices
                        continue
                    if kind != "seed" or not all(
                            isinstance(msg.get(k), (int, float))
                            for k in ("x", "y", "z")):
                        await websocket.send_text(json.dumps(
                            {"type": "error", "message": "malformed message"}
                        ))
                        continue
                    if target is not None:
                        await websocket.send_text(json.dumps({
                            "type": "superseded",
                            "request_id": target.get("request_id"),
                        }))
                    target = msg
                if target is not None:
                    if session_id not in store.sessions:
                        await websocket.close(code=1000,
                                              reason="session deleted")
                        return
                    reply = await _compute_live_reply(
                        runtime, target, subscriptions)
                    await websocket.send_text(json.dumps(reply))
                if disconnected:
                    break
        finally:
            reader_task.cancel()

    async def _compute_live_reply(runtime: _Runtime, msg: dict,
                                  subscriptions: list[dict]) -> dict:
        request_id = msg.get("request_id")
        seed = (float(msg["x"]), float(msg["y"]), float(msg["z"]))
        if not runtime.session.volume.contains(seed):
            return {"type": "error", "request_id": request_id,
                    "message": f"seed {seed} outside volume bounds"}
        runtime.record.seed = seed
        try:
            seg = await anyio.to_thread.run_sync(compute, runtime)
        except NuggetCutError as exc:
            return {"type": "error", "request_id": request_id,
                    "message": str(exc)}
        vol = runtime.session.volume
        contours = []
        for sub in subscriptions:
            try:
                overlay = contour_overlay(
                    vol, seg, sub.get("plane", "axial"),
                    int(sub.get("index", 0)), runtime.record.seed,
                    runtime.record.border_seeds,
                )
            except (ValueError, IndexError):
                continue
            contours.append(overlay)
        reply = summary(runtime, seg)
        reply.update({
            "type": "result",
            "request_id": request_id,
            "contours": contours,
        })
        return reply

    _mount_frontend(app)
    return app


def _mount_frontend(app: FastAPI) -> None:
    """Serve the browser UI when a built bundle is available."""
    root = os.environ.get("NUGGETCUT_FRONTEND_DIR")
    if root is None:
        candidate = os.path.join(os.getcwd(), "frontend", "dist")
        root = candidate if os.path.isdir(candidate) else None
    if root and os.path.isdir(root):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=root, html=True),
                  name="frontend")
