"""HTTP API serving verification tasks and recording decisions.

Static token authentication against a config-listed roster; annotators
receive open tasks they have not decided, the adjudicator receives only
conflicted ones. Decision submissions are idempotent per request id so
client retries never double-count.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from fastapi import Depends, FastAPI, Header, HTTPException, Query
from fastapi.responses import HTMLResponse

from .errors import (
    DuplicateDecisionError,
    TaskStateError,
    UnknownTaskError,
    VerificationError,
)
from .verification import VerificationStore, VerificationTask

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnnotatorIdentity:
    annotator_id: str
    role: str  # "annotator" | "adjudicator"


def load_roster(path: str | Path) -> dict[str, AnnotatorIdentity]:
    """Roster file: [{"token", "annotator_id", "role"}]."""
    entries = json.loads(Path(path).read_text(encoding="utf-8"))
    roster = {}
    for entry in entries:
        role = entry.get("role", "annotator")
        if role not in ("annotator", "adjudicator"):
            raise VerificationError(f"unknown role {role!r} in roster")
        roster[entry["token"]] = AnnotatorIdentity(entry["annotator_id"], role)
    return roster


def _task_payload(task: VerificationTask, remaining: int) -> dict:
    return {
        "task_id": task.task_id,
        "title": task.doc_title,
        "paragraphs": [
            {
                "text": p.text,
                "highlights": [
                    {"start": h.start, "end": h.end, "role": h.role}
                    for h in p.highlights
                ],
            }
            for p in task.paragraphs
        ],
        "subject": task.subject,
        "object": task.object,
        "relation_name": task.relation_name,
        "statement": task.statement,
        "status": task.status,
        "remaining": remaining,
    }


def create_app(
    store: VerificationStore, roster: Mapping[str, AnnotatorIdentity]
) -> FastAPI:
    app = FastAPI(title="verification service")

    def identity(
        x_annotator_token: str | None = Header(default=None),
        token: str | None = Query(default=None),
    ) -> AnnotatorIdentity:
        supplied = x_annotator_token or token
        ident = roster.get(supplied) if supplied else None
        if ident is None:
            raise HTTPException(status_code=401, detail="unknown or missing token")
        return ident

    @app.get("/api/task/next")
    def next_task(
        skip: str | None = Query(default=None),
        ident: AnnotatorIdentity = Depends(identity),
    ) -> dict:
        task = store.next_task(ident.annotator_id, ident.role, skip_task_id=skip)
        progress = store.progress()
        if task is None:
            return {"task": None, "progress": progress, "role": ident.role}
        decided = store.decided_by(ident.annotator_id)
        wanted = "conflicted" if ident.role == "adjudicator" else "open"
        remaining = sum(
            1
            for t in store.tasks()
            if t.status == wanted and t.task_id not in decided
        )
        return {
            "task": _task_payload(task, remaining),
            "progress": progress,
            "role": ident.role,
        }

    @app.post("/api/task/{task_id}/decision")
    def submit_decision(
        task_id: str, body: dict, ident: AnnotatorIdentity = Depends(identity)
    ) -> dict:
        verdict = body.get("verdict")
        request_id = body.get("request_id")
        try:
            task, replayed = store.record_decision(
                ident.annotator_id, ident.role, task_id, verdict, request_id
            )
        except UnknownTaskError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except DuplicateDecisionError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except TaskStateError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except VerificationError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {
            "task_id": task.task_id,
            "status": task.status,
            "final_verdict": task.final_verdict,
            "replayed": replayed,
        }

    @app.get("/api/progress")
    def progress() -> dict:
        return store.progress()

    @app.get("/api/export")
    def export() -> dict:
        return store.export()

    static_index = Path(__file__).parent / "data" / "review_ui.html"

    @app.get("/", response_class=HTMLResponse)
    def index() -> str:
        if static_index.exists():
            return static_index.read_text(encoding="utf-8")
        return "<html><body>verification service is running</body></html>"

    return app


def serve(
    store_path: str | Path,
    roster_path: str | Path,
    host: str = "127.0.0.1",
    port: int = 8321,
) -> None:
    import uvicorn

    store = VerificationStore.open(store_path)
    roster = load_roster(roster_path)
    app = create_app(store, roster)
    logger.info(
        "serving %d tasks to %d tokens on %s:%d",
        len(store.tasks()),
        len(roster),
        host,
        port,
    )
    uvicorn.run(app, host=host, port=port, log_level="warning")
