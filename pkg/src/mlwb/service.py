"""HTTP façade over the session manager.

Routes are thin: parse the request, call the manager, map typed errors
onto 404/409/422. Handlers are sync functions so FastAPI keeps them off
the event loop; training runs in its own thread per session.
"""

from __future__ import annotations

import contextlib
import json
import pathlib

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, Response, StreamingResponse
from fastapi.staticfiles import StaticFiles

from .errors import EditRejected, WorkbenchError
from .session import (
    BusyError,
    SessionManager,
    UnknownSessionError,
    ValidationFailure,
)

SSE_KEEPALIVE_SECONDS = 15.0


def _error_payload(exc: WorkbenchError) -> dict:
    payload = {"detail": str(exc)}
    report = getattr(exc, "report", None)
    if report is not None:
        payload["report"] = report.to_dict()
    position = getattr(exc, "position", None)
    if position is not None:
        payload["position"] = position
    path = getattr(exc, "path", None)
    if path is not None:
        payload["path"] = path
    return payload


def create_app(state_dir=None, manager: SessionManager | None = None,
               static_dir=None) -> FastAPI:
    owns_manager = manager is None
    if manager is None:
        manager = SessionManager(state_dir=state_dir)

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        manager.start()
        yield
        if owns_manager:
            manager.close()

    app = FastAPI(title="neural network workbench", lifespan=lifespan)
    app.state.manager = manager

    @app.exception_handler(UnknownSessionError)
    async def _unknown(request: Request, exc: UnknownSessionError):
        return JSONResponse(_error_payload(exc), status_code=404)

    @app.exception_handler(BusyError)
    async def _busy(request: Request, exc: BusyError):
        return JSONResponse(_error_payload(exc), status_code=409)

    @app.exception_handler(WorkbenchError)
    async def _invalid(request: Request, exc: WorkbenchError):
        return JSONResponse(_error_payload(exc), status_code=422)

    # -- sessions ------------------------------------------------------------

    @app.post("/session")
    def create_session(body: dict | None = None):
        body = body or {}
        session = manager.create_session(
            mode=body.get("mode", "beginner"), seed=int(body.get("seed", 0))
        )
        return manager.model_payload(session)

    @app.get("/session/{sid}/model")
    def get_model(sid: str):
        return manager.model_payload(manager.get(sid))

    @app.put("/session/{sid}/model")
    async def put_model(sid: str, request: Request):
        body = await request.body()
        return manager.put_model(manager.get(sid), body)

    @app.post("/session/{sid}/edit")
    def edit(sid: str, op: dict):
        return manager.edit(manager.get(sid), op)

    @app.post("/session/{sid}/undo")
    def undo(sid: str):
        return manager.undo(manager.get(sid))

    @app.post("/session/{sid}/redo")
    def redo(sid: str):
        return manager.redo(manager.get(sid))

    @app.post("/session/{sid}/mode")
    def set_mode(sid: str, body: dict):
        return manager.set_mode(manager.get(sid), body.get("mode", ""))

    # -- data ------------------------------------------------------------------

    @app.post("/session/{sid}/import/csv")
    def import_csv(sid: str, body: dict):
        return manager.import_csv(
            manager.get(sid), body.get("text", ""), body.get("config", {})
        )

    @app.post("/session/{sid}/import/images")
    def import_images(sid: str, body: dict):
        return manager.import_images(manager.get(sid), body)

    @app.post("/session/{sid}/import/tensor")
    def import_tensor(sid: str, body: dict):
        return manager.import_tensor(
            manager.get(sid), body.get("x", ""), body.get("y", "")
        )

    @app.get("/session/{sid}/dataset/preview")
    def dataset_preview(sid: str, k: int = Query(default=5, ge=0)):
        return manager.dataset_preview(manager.get(sid), k)

    # -- training ----------------------------------------------------------------

    @app.post("/session/{sid}/train")
    def start_training(sid: str, config: dict | None = None):
        return manager.start_training(manager.get(sid), config or {})

    @app.post("/session/{sid}/train/stop")
    def stop_training(sid: str):
        return manager.stop_training(manager.get(sid))

    @app.get("/session/{sid}/events")
    def events(sid: str):
        session = manager.get(sid)
        sub = session.bus.subscribe()

        def stream():
            try:
                hello = {
                    "type": "ready",
                    "session": session.id,
                    "training": session.busy,
                }
                yield f"event: ready\ndata: {json.dumps(hello)}\n\n"
                while True:
                    event = sub.get(timeout=SSE_KEEPALIVE_SECONDS)
                    if event is None:
                        if sub.closed:
                            break
                        yield ": keepalive\n\n"
                        continue
                    yield f"event: {event['type']}\ndata: {json.dumps(event)}\n\n"
            finally:
                session.bus.unsubscribe(sub)

        return StreamingResponse(stream(), media_type="text/event-stream")

    # -- inference / visualization -------------------------------------------------

    @app.post("/session/{sid}/predict")
    def predict(sid: str, body: dict):
        return manager.predict(manager.get(sid), body)

    @app.get("/session/{sid}/visualize/{kind}")
    def visualize_get(sid: str, kind: str, node_cap: int = Query(default=16, ge=1)):
        return manager.visualize(manager.get(sid), kind, {"node_cap": node_cap})

    @app.post("/session/{sid}/visualize/{kind}")
    def visualize_post(sid: str, kind: str, body: dict | None = None):
        return manager.visualize(manager.get(sid), kind, body or {})

    # -- export ------------------------------------------------------------------------

    @app.get("/session/{sid}/export/model")
    def export_model(sid: str):
        data = manager.export(manager.get(sid), "model")
        return Response(
            content=data,
            media_type="application/json",
            headers={"Content-Disposition": 'attachment; filename="model.json"'},
        )

    @app.get("/session/{sid}/export/python")
    def export_python(sid: str):
        return manager.export(manager.get(sid), "python")

    @app.get("/session/{sid}/export/bundle")
    def export_bundle(sid: str):
        data = manager.export(manager.get(sid), "bundle")
        return Response(
            content=data,
            media_type="application/zip",
            headers={"Content-Disposition": 'attachment; filename="model-bundle.zip"'},
        )

    @app.get("/health")
    def health():
        return {"ok": True, "sessions": len(manager.sessions())}

    if static_dir and pathlib.Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
