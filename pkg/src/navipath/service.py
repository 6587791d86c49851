"""HTTP API over the slide store: tiles, live-ranked recommendations, sessions,
traces, reports, and on-demand trial metrics.

Recommendation ranking is a pure function of the query weights, so GET
responses are byte-stable and carry an ETag; nothing mutates server side.
Sessions persist as small JSON records next to an append-only JSONL trace,
which the metrics endpoint replays through the same library code the CLI uses.
"""

from __future__ import annotations

import hashlib
import json
import threading
import uuid
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, Request, Response

from .errors import NaviPathError, NotFoundError, TimeRegressionError, ValidationError
from .evaluate import Report, trial_metrics
from .navigate import CONDITION_MANUAL, CONDITION_NAVIPATH, NavEvent, Trace, append_event
from .recommend import Weights, generate_recommendations
from .scoring import ScoreGrid
from .slide import SlideStore

FORMAT_VERSION = 1


def _json_response(payload: dict, status_code: int = 200) -> Response:
    body = json.dumps(payload, separators=(",", ":")).encode()
    return Response(content=body, status_code=status_code, media_type="application/json")


def _error(status: int, message: str) -> Response:
    return _json_response({"format_version": FORMAT_VERSION, "error": message}, status)


class SessionStore:
    """File-backed sessions: <data_dir>/sessions/<id>.json + .jsonl + .report.json."""

    def __init__(self, root: Path):
        self.root = root / "sessions"
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def lock(self, session_id: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def record_path(self, session_id: str) -> Path:
        return self.root / f"{session_id}.json"

    def trace_path(self, session_id: str) -> Path:
        return self.root / f"{session_id}.jsonl"

    def report_path(self, session_id: str) -> Path:
        return self.root / f"{session_id}.report.json"

    def create(self, slide_id: str, condition: str) -> dict:
        record = {
            "format_version": FORMAT_VERSION,
            "id": uuid.uuid4().hex,
            "slide_id": slide_id,
            "condition": condition,
            "created_at": datetime.now(timezone.utc).isoformat(),
            "weights": Weights().to_dict(),
            "status": "active",
        }
        self.record_path(record["id"]).write_text(json.dumps(record))
        return record

    def load(self, session_id: str) -> dict:
        path = self.record_path(session_id)
        if not path.is_file():
            raise NotFoundError(f"unknown session {session_id!r}")
        return json.loads(path.read_text())

    def update(self, record: dict) -> None:
        self.record_path(record["id"]).write_text(json.dumps(record))

    def last_event_time(self, session_id: str) -> int | None:
        path = self.trace_path(session_id)
        if not path.is_file():
            return None
        last = None
        with path.open() as fh:
            for line in fh:
                if line.strip():
                    last = line
        return None if last is None else int(json.loads(last)["t"])

    def append_event(self, session_id: str, ev: NavEvent) -> None:
        with self.lock(session_id):
            last = self.last_event_time(session_id)
            if last is not None and ev.t < last:
                raise TimeRegressionError(f"event time {ev.t} precedes last event time {last}")
            with self.trace_path(session_id).open("a") as fh:
                fh.write(json.dumps(ev.to_dict(), separators=(",", ":")) + "\n")


def create_app(data_dir: str | Path) -> FastAPI:
    data_dir = Path(data_dir)
    store = SlideStore(data_dir)
    sessions = SessionStore(data_dir)
    grids: dict[str, ScoreGrid] = {}
    app = FastAPI(title="navipath", docs_url=None, redoc_url=None)

    def grid_for(slide_id: str) -> ScoreGrid:
        if slide_id not in grids:
            grids[slide_id] = ScoreGrid.load(store, slide_id)
        return grids[slide_id]

    @app.get("/healthz")
    def healthz():
        return _json_response({"format_version": FORMAT_VERSION, "status": "ok"})

    @app.get("/api/slides")
    def slides():
        metas = [store.load_meta(sid).to_dict() for sid in store.list_slides()]
        return _json_response({"format_version": FORMAT_VERSION, "slides": metas})

    @app.get("/api/slides/{slide_id}/meta")
    def slide_meta(slide_id: str):
        try:
            return _json_response(store.load_meta(slide_id).to_dict())
        except NotFoundError as exc:
            return _error(404, str(exc))

    @app.get("/api/slides/{slide_id}/tiles/{level}/{name}")
    def tile(slide_id: str, level: int, name: str):
        try:
            meta = store.load_meta(slide_id)
            stem = name.removesuffix(".png")
            col_s, _, row_s = stem.partition("_")
            col, row = int(col_s), int(row_s)
            cols, rows = meta.tile_grid(level)
            if not (0 <= col < cols and 0 <= row < rows):
                raise NotFoundError(f"tile ({col},{row}) out of grid at level {level}")
            path = store.tile_path(slide_id, level, col, row)
            if not path.is_file():
                raise NotFoundError(f"tile file {path.name} missing")
            return Response(content=path.read_bytes(), media_type="image/png")
        except (NotFoundError, ValueError) as exc:
            return _error(404, str(exc))

    @app.get("/api/slides/{slide_id}/recommendations")
    def recommendations(
        slide_id: str,
        w_cell: float = 1.0,
        w_prolif: float = 1.0,
        w_mitosis: float = 1.0,
        sensitivity: float = 2.0 / 9.0,
    ):
        try:
            weights = Weights(
                w_cell=w_cell, w_prolif=w_prolif, w_mitosis=w_mitosis, sensitivity=sensitivity
            )
        except ValidationError as exc:
            return _error(400, str(exc))
        try:
            meta = store.load_meta(slide_id)
            grid = grid_for(slide_id)
        except NotFoundError as exc:
            return _error(404, str(exc))
        body = generate_recommendations(grid, meta, weights).to_json_bytes()
        etag = hashlib.md5(body).hexdigest()
        return Response(
            content=body,
            media_type="application/json",
            headers={"ETag": etag, "Cache-Control": "max-age=3600"},
        )

    @app.post("/api/sessions")
    async def create_session(request: Request):
        try:
            payload = await request.json()
        except Exception:
            return _error(400, "body must be JSON")
        slide_id = payload.get("slide_id")
        condition = payload.get("condition", CONDITION_NAVIPATH)
        if condition not in (CONDITION_MANUAL, CONDITION_NAVIPATH):
            return _error(400, f"condition must be manual or navipath, got {condition!r}")
        try:
            store.load_meta(slide_id or "")
        except NotFoundError as exc:
            return _error(404, str(exc))
        record = sessions.create(slide_id, condition)
        return _json_response(record, 201)

    @app.patch("/api/sessions/{session_id}")
    async def patch_session(session_id: str, request: Request):
        try:
            record = sessions.load(session_id)
        except NotFoundError as exc:
            return _error(404, str(exc))
        payload = await request.json()
        if "weights" in payload:
            try:
                record["weights"] = Weights(**payload["weights"]).to_dict()
            except (TypeError, ValidationError) as exc:
                return _error(400, f"invalid weights: {exc}")
        if payload.get("status") in ("active", "closed"):
            record["status"] = payload["status"]
        sessions.update(record)
        return _json_response(record)

    @app.post("/api/sessions/{session_id}/events")
    async def post_event(session_id: str, request: Request):
        try:
            sessions.load(session_id)
        except NotFoundError as exc:
            return _error(404, str(exc))
        try:
            ev = NavEvent.from_dict(await request.json())
        except (NaviPathError, KeyError, TypeError, ValueError) as exc:
            return _error(400, f"malformed event: {exc}")
        try:
            sessions.append_event(session_id, ev)
        except TimeRegressionError as exc:
            return _error(409, str(exc))
        return _json_response({"format_version": FORMAT_VERSION, "accepted": ev.t}, 201)

    @app.post("/api/sessions/{session_id}/report")
    async def post_report(session_id: str, request: Request):
        try:
            sessions.load(session_id)
        except NotFoundError as exc:
            return _error(404, str(exc))
        try:
            report = Report.from_dict(await request.json())
        except (KeyError, TypeError, ValueError) as exc:
            return _error(400, f"malformed report: {exc}")
        report.save(sessions.report_path(session_id))
        return _json_response(
            {"format_version": FORMAT_VERSION, "points": len(report.points)}, 201
        )

    @app.get("/api/sessions/{session_id}/metrics")
    def metrics(session_id: str):
        try:
            record = sessions.load(session_id)
        except NotFoundError as exc:
            return _error(404, str(exc))
        trace_path = sessions.trace_path(session_id)
        report_path = sessions.report_path(session_id)
        if not trace_path.is_file():
            return _error(409, "session has no recorded events")
        if not report_path.is_file():
            return _error(409, "session has no submitted report")
        trace = Trace.load(
            trace_path,
            session_id=session_id,
            slide_id=record["slide_id"],
            condition=record["condition"],
        )
        report = Report.load(report_path)
        meta = store.load_meta(record["slide_id"])
        gt = store.load_ground_truth(record["slide_id"])
        try:
            m = trial_metrics(trace, report, gt, meta)
        except ValidationError as exc:
            return _error(409, str(exc))
        return Response(content=m.to_json_bytes(), media_type="application/json")

    return app


def run_server(data_dir: str | Path, port: int = 8008, host: str = "127.0.0.1") -> None:
    import uvicorn

    uvicorn.run(create_app(data_dir), host=host, port=port, log_level="warning")
