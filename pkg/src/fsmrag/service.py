"""HTTP API over the trajectory store for the annotation console.

Endpoints:
  GET  /api/trajectories?status=pending&page=1&page_size=20
  GET  /api/trajectories/{id}
  POST /api/trajectories/{id}/steps/{k}/feedback   {"verdict", "refinement"?}
  POST /api/trajectories/{id}/finalize
  POST /api/trajectories/{id}/skip
  GET  /api/export?iteration=i                      (labeled JSONL)

Optionally serves the console's static bundle at /. A single shared token
(X-Auth-Token header) gates writes when configured.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .store import InvalidFeedback, NotFound, PendingSteps, TrajectoryStore


class FeedbackBody(BaseModel):
    verdict: str
    refinement: str | None = None


def create_app(
    store: TrajectoryStore,
    token: str | None = None,
    static_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="fsmrag annotation service")

    def check_token(request: Request) -> None:
        if token and request.headers.get("X-Auth-Token") != token:
            raise HTTPException(status_code=401, detail="missing or invalid token")

    @app.get("/api/trajectories")
    def list_trajectories(status: str = "pending", page: int = 1, page_size: int = 20):
        rows = store.list(status=status)
        total = len(rows)
        start = max(page - 1, 0) * page_size
        return {
            "items": rows[start : start + page_size],
            "total": total,
            "page": page,
            "page_size": page_size,
        }

    @app.get("/api/trajectories/{trajectory_id}")
    def get_trajectory(trajectory_id: str):
        try:
            record = store.get(trajectory_id)
        except NotFound as e:
            raise HTTPException(status_code=404, detail=str(e)) from None
        return {
            **record,
            "annotation": store.annotation_state(trajectory_id),
            "feedback": {
                str(i): fb for i, fb in store.feedback_by_step(trajectory_id).items()
            },
        }

    @app.post("/api/trajectories/{trajectory_id}/steps/{step_index}/feedback")
    def post_feedback(trajectory_id: str, step_index: int, body: FeedbackBody, request: Request):
        check_token(request)
        try:
            event = store.submit_feedback(trajectory_id, step_index, body.verdict, body.refinement)
        except NotFound as e:
            raise HTTPException(status_code=404, detail=str(e)) from None
        except InvalidFeedback as e:
            raise HTTPException(status_code=400, detail=str(e)) from None
        return {"ok": True, "seq": event["seq"]}

    @app.post("/api/trajectories/{trajectory_id}/finalize")
    def finalize(trajectory_id: str, request: Request):
        check_token(request)
        try:
            store.finalize(trajectory_id)
        except NotFound as e:
            raise HTTPException(status_code=404, detail=str(e)) from None
        except PendingSteps as e:
            return JSONResponse(
                status_code=409,
                content={"detail": "steps pending annotation", "pending": e.pending},
            )
        return {"ok": True}

    @app.post("/api/trajectories/{trajectory_id}/skip")
    def skip(trajectory_id: str, request: Request):
        check_token(request)
        try:
            store.skip(trajectory_id)
        except NotFound as e:
            raise HTTPException(status_code=404, detail=str(e)) from None
        return {"ok": True}

    @app.get("/api/export")
    def export(iteration: int | None = None) -> Response:
        lines = store.export_lines(iteration=iteration)
        body = "\n".join(lines) + ("\n" if lines else "")
        return PlainTextResponse(content=body, media_type="application/jsonl")

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="console")

    return app
