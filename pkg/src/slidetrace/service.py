"""HTTP face of the review workflow.

Thin FastAPI layer over ReviewStore: serve the next task, record decisions,
export the decision log, and serve pre-extracted crop files. Requests within
one session are serialized behind a lock; different sessions run concurrently.
Auth is a single shared bearer token read from an environment variable.
"""

from __future__ import annotations

import os
import threading
from pathlib import Path
from typing import Callable, Optional

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.responses import PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .review import InvalidIndices, NoPendingTasks, ReviewStore, StaleTask, _now_ms


class DecisionBody(BaseModel):
    task_id: str
    verdict: str
    edited_sentences: Optional[list[str]] = None
    deleted_indices: Optional[list[int]] = None


class _Sessions:
    def __init__(self, data_dir: Path, clock: Callable[[], int]):
        self.data_dir = data_dir
        self.clock = clock
        self._stores: dict[str, ReviewStore] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def get(self, session_id: str) -> tuple[ReviewStore, threading.Lock]:
        with self._guard:
            if session_id not in self._stores:
                try:
                    self._stores[session_id] = ReviewStore(self.data_dir, session_id, clock=self.clock)
                except FileNotFoundError:
                    raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
                self._locks[session_id] = threading.Lock()
            return self._stores[session_id], self._locks[session_id]


def create_app(
    data_dir: str | Path,
    token_env: Optional[str] = None,
    clock: Callable[[], int] = _now_ms,
) -> FastAPI:
    """Build the review app over a data directory.

    When ``token_env`` names an environment variable with a non-empty value,
    every API request must carry ``Authorization: Bearer <value>``. The value
    itself is never logged.
    """
    data_dir = Path(data_dir)
    sessions = _Sessions(data_dir, clock)
    token = os.environ.get(token_env, "") if token_env else ""

    def check_auth(request: Request) -> None:
        if not token:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or invalid token")

    app = FastAPI(title="slidetrace review service")

    @app.get("/api/session/{session_id}/next", dependencies=[Depends(check_auth)])
    def next_task(session_id: str):
        store, lock = sessions.get(session_id)
        with lock:
            try:
                return store.next_task().to_json()
            except NoPendingTasks:
                raise HTTPException(status_code=404, detail="no_pending_tasks")

    @app.post("/api/session/{session_id}/decision", dependencies=[Depends(check_auth)])
    def decision(session_id: str, body: DecisionBody):
        store, lock = sessions.get(session_id)
        with lock:
            try:
                return store.submit_decision(
                    body.task_id,
                    body.verdict,
                    edited_sentences=body.edited_sentences,
                    deleted_indices=body.deleted_indices,
                )
            except StaleTask as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            except (InvalidIndices, ValueError) as exc:
                raise HTTPException(status_code=400, detail=str(exc))

    @app.get("/api/session/{session_id}/export", dependencies=[Depends(check_auth)])
    def export(session_id: str):
        store, lock = sessions.get(session_id)
        with lock:
            return PlainTextResponse(store.export_log(), media_type="application/x-ndjson")

    crops_dir = data_dir / "crops"
    if crops_dir.is_dir():
        app.mount("/crops", StaticFiles(directory=crops_dir), name="crops")

    return app
