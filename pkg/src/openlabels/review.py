"""Review server: a small HTTP API over one label space file.

This is the surface a review UI talks to. All mutations are optimistic-
concurrency controlled: the caller sends the space version it last saw, and
a mismatch is rejected with 409 plus the current version, so two reviewers
cannot silently overwrite each other. Every successful mutation is persisted
to the labelspace file before the response is sent.

Error bodies are flat JSON objects: {"error": <machine tag>, "message": ...,
"current_version": ...} with only the relevant fields present.
"""

from __future__ import annotations

import logging
import threading
from pathlib import Path
from typing import Any, Callable

from fastapi import FastAPI, Request
from fastapi.responses import HTMLResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from openlabels import __version__
from openlabels.errors import StateError, ValidationError
from openlabels.labelspace import BorderlinePair, Label, LabelSpace, RESOLUTIONS

log = logging.getLogger(__name__)


class SpaceStore:
    """Serialized access to one LabelSpace, persisted after every mutation."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.RLock()
        self.space = LabelSpace.load(self.path)

    def read(self, fn: Callable[[LabelSpace], Any]) -> Any:
        with self._lock:
            return fn(self.space)

    def mutate(self, fn: Callable[[LabelSpace], Any]) -> Any:
        with self._lock:
            result = fn(self.space)
            self.space.save(self.path)
            return result


def _label_payload(label: Label) -> dict:
    return label.to_dict()


def _pair_payload(pair: BorderlinePair, space: LabelSpace) -> dict:
    payload = pair.to_dict()
    payload["similarity"] = round(pair.similarity, 6)
    payload["label_a"] = _label_payload(space.get_label(pair.label_a))
    payload["label_b"] = _label_payload(space.get_label(pair.label_b))
    return payload


def _error(status: int, tag: str, message: str = "", **extra: Any) -> JSONResponse:
    body: dict[str, Any] = {"error": tag}
    if message:
        body["message"] = message
    body.update(extra)
    return JSONResponse(status_code=status, content=body)


async def _parse_body(request: Request) -> dict | JSONResponse:
    try:
        body = await request.json()
    except Exception:
        return _error(400, "bad_json", "request body must be a JSON object")
    if not isinstance(body, dict):
        return _error(400, "bad_json", "request body must be a JSON object")
    return body


def _version_gate(body: dict, space: LabelSpace) -> JSONResponse | None:
    expected = body.get("expected_version")
    if not isinstance(expected, int) or isinstance(expected, bool):
        return _error(400, "bad_request", "expected_version must be an integer")
    if expected != space.version:
        return _error(
            409, "version_conflict",
            f"space is at version {space.version}, request expected {expected}",
            current_version=space.version,
        )
    return None


def create_app(store: SpaceStore, ui_dir: str | Path | None = None,
               auth_token: str | None = None) -> FastAPI:
    app = FastAPI(title="label review", docs_url=None, redoc_url=None)

    if auth_token:
        @app.middleware("http")
        async def require_token(request: Request, call_next):
            if request.url.path.startswith("/api"):
                header = request.headers.get("authorization", "")
                if header != f"Bearer {auth_token}":
                    return _error(401, "unauthorized", "missing or invalid bearer token")
            return await call_next(request)

    @app.get("/api/health")
    def health() -> dict:
        return store.read(lambda s: {
            "status": "ok",
            "service_version": __version__,
            "version": s.version,
            "pending_pairs": len(s.pending_pairs()),
        })

    @app.get("/api/labels")
    def labels() -> dict:
        return store.read(lambda s: {
            "version": s.version,
            "labels": [_label_payload(s.labels[i]) for i in sorted(s.labels)],
        })

    @app.get("/api/pairs")
    def pairs() -> dict:
        def build(s: LabelSpace) -> dict:
            pending = sorted(
                s.pending_pairs(), key=lambda p: (-p.similarity, p.id)
            )
            return {
                "version": s.version,
                "pairs": [_pair_payload(p, s) for p in pending],
            }
        return store.read(build)

    @app.post("/api/pairs/{pair_id}/resolution")
    async def resolve(pair_id: int, request: Request):
        body = await _parse_body(request)
        if isinstance(body, JSONResponse):
            return body
        resolution = body.get("resolution")
        if resolution not in RESOLUTIONS:
            return _error(
                400, "bad_resolution",
                f"resolution must be one of {list(RESOLUTIONS)}", valid=list(RESOLUTIONS),
            )
        new_name = body.get("new_name")
        if new_name is not None and not isinstance(new_name, str):
            return _error(400, "bad_request", "new_name must be a string")
        if resolution == "rename" and not new_name:
            return _error(400, "bad_request", "rename resolution requires new_name")

        def attempt(space: LabelSpace):
            if pair_id not in space.pairs:
                return _error(404, "unknown_pair", f"no pair with id {pair_id}")
            conflict = _version_gate(body, space)
            if conflict is not None:
                return conflict
            pair = space.pairs[pair_id]
            if pair.status != "pending":
                return _error(
                    409, "not_pending",
                    f"pair {pair_id} was already resolved as {pair.resolution!r}",
                    current_version=space.version,
                )
            try:
                space.resolve_pair(pair_id, resolution, new_name=new_name)
            except ValidationError as exc:
                return _error(400, "invalid_resolution", str(exc))
            except StateError as exc:
                return _error(409, "state_conflict", str(exc),
                              current_version=space.version)
            return {
                "ok": True,
                "version": space.version,
                "pair": _pair_payload(space.pairs[pair_id], space),
            }

        return store.mutate(attempt)

    @app.post("/api/labels/{label_id}/rename")
    async def rename(label_id: int, request: Request):
        body = await _parse_body(request)
        if isinstance(body, JSONResponse):
            return body
        new_name = body.get("new_name")
        if not isinstance(new_name, str) or not new_name.strip():
            return _error(400, "bad_request", "new_name must be a non-empty string")

        def attempt(space: LabelSpace):
            if label_id not in space.labels:
                return _error(404, "unknown_label", f"no label with id {label_id}")
            conflict = _version_gate(body, space)
            if conflict is not None:
                return conflict
            try:
                space.rename(label_id, new_name)
            except ValidationError as exc:
                return _error(400, "name_collision", str(exc))
            except StateError as exc:
                return _error(409, "state_conflict", str(exc),
                              current_version=space.version)
            return {
                "ok": True,
                "version": space.version,
                "label": _label_payload(space.get_label(label_id)),
            }

        return store.mutate(attempt)

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    else:
        @app.get("/", response_class=HTMLResponse)
        def placeholder() -> str:
            return (
                "<!doctype html><title>label review</title>"
                "<p>No UI directory configured. The API lives under /api.</p>"
            )

    return app


def serve(labelspace_path: str | Path, host: str = "127.0.0.1", port: int = 8321,
          ui_dir: str | Path | None = None, auth_token: str | None = None) -> None:
    """Blocking entry point used by the CLI."""
    import uvicorn

    store = SpaceStore(labelspace_path)
    app = create_app(store, ui_dir=ui_dir, auth_token=auth_token)
    log.info("review server on http://%s:%d (space version %d)",
             host, port, store.space.version)
    uvicorn.run(app, host=host, port=port, log_level="warning")
