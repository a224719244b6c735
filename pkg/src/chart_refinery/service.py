"""HTTP facade over the pipeline, plus per-session write leases.

Every non-2xx body is an ApiError object: {"code", "message", "detail"}.
Codes map to fixed statuses: INVALID_INPUT=400, NOT_FOUND=404, CONFLICT=409,
BACKEND_FAILURE=502, INTERNAL=500. Mutating endpoints on one session are
serialized by a non-blocking lease; a second writer gets 409 immediately.
Analytics runs execute on a single background worker and are polled.
"""

from __future__ import annotations

import json
import logging
import queue
import secrets
import threading
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from . import __version__
from .backends import backend_reachable
from .config import AppConfig, backend_snapshot
from .derender import derender
from .errors import (
    BackendTimeout,
    BackendUnreachable,
    ChartRefineryError,
    CorruptRecord,
    EmptyCompletion,
    IllegalStatusTransition,
    InvalidImage,
    NotFound,
    RenderValidationFailed,
    TooFewRows,
    UnclusterableCorpus,
    UnknownRecommendation,
)
from .models import (
    ChartImage,
    RecommendationStatus,
    RenderStatus,
    Session,
    SessionState,
)
from .refine import apply_recommendations, run_critique_round, reanalyze
from .sandbox import render
from .store import SessionStore, session_to_doc
from .analytics.pipeline import (
    collect_corpus_recommendations,
    load_recs_file,
    run_eval,
)

logger = logging.getLogger(__name__)

_STATUS_BY_CODE = {
    "INVALID_INPUT": 400,
    "NOT_FOUND": 404,
    "CONFLICT": 409,
    "BACKEND_FAILURE": 502,
    "INTERNAL": 500,
}


class ApiException(Exception):
    def __init__(self, code: str, message: str, detail: dict | None = None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.detail = detail

    def response(self) -> JSONResponse:
        return JSONResponse(
            status_code=_STATUS_BY_CODE[self.code],
            content={"code": self.code, "message": self.message, "detail": self.detail},
        )


def _map_error(exc: Exception) -> ApiException:
    if isinstance(exc, ApiException):
        return exc
    if isinstance(exc, InvalidImage):
        return ApiException("INVALID_INPUT", str(exc))
    if isinstance(exc, (NotFound, UnknownRecommendation)):
        return ApiException("NOT_FOUND", str(exc))
    if isinstance(exc, IllegalStatusTransition):
        return ApiException("CONFLICT", str(exc))
    if isinstance(exc, RenderValidationFailed):
        detail = None
        if exc.outcome is not None:
            detail = {
                "attempts": exc.outcome.attempts,
                "failure_reason": exc.outcome.failure_reason,
                "stderr_excerpt": exc.outcome.render.stderr_excerpt if exc.outcome.render else "",
            }
        return ApiException("BACKEND_FAILURE", str(exc), detail)
    if isinstance(exc, (BackendUnreachable, BackendTimeout, EmptyCompletion)):
        return ApiException("BACKEND_FAILURE", str(exc))
    if isinstance(exc, (TooFewRows, UnclusterableCorpus, ValueError)):
        return ApiException("INVALID_INPUT", str(exc))
    if isinstance(exc, CorruptRecord):
        return ApiException("INTERNAL", str(exc))
    return ApiException("INTERNAL", f"{type(exc).__name__}: {exc}")


class LeaseManager:
    """Per-session exclusive leases; acquisition never blocks."""

    def __init__(self) -> None:
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def acquire(self, session_id: str) -> "_Lease":
        with self._guard:
            lock = self._locks.setdefault(session_id, threading.Lock())
        if not lock.acquire(blocking=False):
            raise ApiException("CONFLICT", f"another operation is in progress on session {session_id}")
        return _Lease(lock)


class _Lease:
    def __init__(self, lock: threading.Lock):
        self._lock = lock

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self._lock.release()
        return False


@dataclass
class AnalyticsRun:
    run_id: str
    state: str = "QUEUED"  # QUEUED | RUNNING | DONE | FAILED
    progress: float = 0.0
    out_dir: str = ""
    error: str | None = None
    report: dict | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def snapshot(self) -> dict:
        with self.lock:
            doc = {
                "run_id": self.run_id,
                "state": self.state,
                "progress": round(self.progress, 4),
            }
            if self.error is not None:
                doc["error"] = self.error
            if self.report is not None:
                doc["report"] = self.report
        return doc


class AnalyticsWorker:
    """Single background worker executing queued analytics runs in order."""

    def __init__(self) -> None:
        self._queue: queue.Queue = queue.Queue()
        self._runs: dict[str, AnalyticsRun] = {}
        self._guard = threading.Lock()
        self._thread: threading.Thread | None = None

    def _ensure_thread(self) -> None:
        if self._thread is None or not self._thread.is_alive():
            self._thread = threading.Thread(target=self._loop, daemon=True, name="analytics-worker")
            self._thread.start()

    def submit(self, run: AnalyticsRun, job) -> None:
        with self._guard:
            self._runs[run.run_id] = run
        self._queue.put((run, job))
        self._ensure_thread()

    def get(self, run_id: str) -> AnalyticsRun:
        with self._guard:
            run = self._runs.get(run_id)
        if run is None:
            raise ApiException("NOT_FOUND", f"no analytics run {run_id!r}")
        return run

    def _loop(self) -> None:
        while True:
            run, job = self._queue.get()
            with run.lock:
                run.state = "RUNNING"
            try:
                report = job(run)
            except Exception as exc:  # worker must survive any job failure
                logger.error("analytics run %s failed: %s", run.run_id, traceback.format_exc())
                with run.lock:
                    run.state = "FAILED"
                    run.error = f"{type(exc).__name__}: {exc}"
            else:
                with run.lock:
                    run.state = "DONE"
                    run.progress = 1.0
                    run.report = report


def _parse_k_bounds(raw) -> tuple[int, int]:
    if isinstance(raw, str):
        lo, _, hi = raw.partition(":")
        raw = [int(lo), int(hi or lo)]
    if not (isinstance(raw, (list, tuple)) and len(raw) == 2):
        raise ApiException("INVALID_INPUT", "k_range must be [min, max] or 'min:max'")
    lo, hi = int(raw[0]), int(raw[1])
    if lo < 2 or hi < lo:
        raise ApiException("INVALID_INPUT", f"bad k_range [{lo}, {hi}]")
    return lo, hi


def _check_corpus_size(corpus_size: int, k_max: int) -> None:
    if corpus_size == 0:
        raise ApiException("INVALID_INPUT", "corpus resolved to zero recommendations")
    if corpus_size < k_max:
        raise ApiException(
            "INVALID_INPUT",
            f"corpus of {corpus_size} recommendations cannot support k up to {k_max}",
            detail={"corpus_size": corpus_size, "k_max": k_max},
        )


def _parse_seeds(raw) -> tuple[int, ...]:
    if raw is None:
        return (0, 1, 2, 3, 4)
    if isinstance(raw, int):
        if raw < 1:
            raise ApiException("INVALID_INPUT", "seeds must be a positive count or a list")
        return tuple(range(raw))
    return tuple(int(s) for s in raw)


def _recommendation_doc(rec) -> dict:
    return {
        "id": rec.id,
        "round": rec.round,
        "text": rec.text,
        "status": rec.status.value,
        "category": rec.category,
    }


def create_app(cfg: AppConfig) -> FastAPI:
    store = SessionStore(cfg.store_root)
    leases = LeaseManager()
    worker = AnalyticsWorker()

    app = FastAPI(title="chart-refinery", version=__version__)
    app.state.config = cfg
    app.state.store = store

    app.add_middleware(
        CORSMiddleware,
        allow_origins=[cfg.service.ui_origin],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ApiException)
    async def _api_exc(_req: Request, exc: ApiException):
        return exc.response()

    @app.exception_handler(RequestValidationError)
    async def _validation_exc(_req: Request, exc: RequestValidationError):
        return ApiException("INVALID_INPUT", "invalid request", {"errors": exc.errors()}).response()

    @app.exception_handler(ChartRefineryError)
    async def _domain_exc(_req: Request, exc: ChartRefineryError):
        return _map_error(exc).response()

    @app.exception_handler(Exception)
    async def _unhandled_exc(_req: Request, exc: Exception):
        logger.exception("unhandled error")
        return _map_error(exc).response()

    # -- sessions -----------------------------------------------------------

    @app.post("/api/v1/sessions", status_code=201)
    def create_session(image: UploadFile):
        payload = image.file.read()
        cap = cfg.service.image_size_cap
        if len(payload) > cap:
            raise ApiException(
                "INVALID_INPUT",
                f"image of {len(payload)} bytes exceeds the size cap",
                detail={"size_cap": cap},
            )
        chart = ChartImage.from_bytes(payload, size_cap=cap)
        session = Session.create(chart, backend_snapshot(cfg))
        store.save(session)
        store.append_audit(session.id, "session_created", {"filename": image.filename})
        return {"id": session.id, "state": session.state.value}

    def _load(session_id: str) -> Session:
        return store.load(session_id)

    @app.post("/api/v1/sessions/{session_id}/analyze")
    def analyze(session_id: str):
        with leases.acquire(session_id):
            session = _load(session_id)
            if session.state not in (SessionState.CREATED, SessionState.DERENDERED):
                raise ApiException(
                    "CONFLICT",
                    f"analyze requires state CREATED or DERENDERED, session is {session.state.value}",
                )
            audit = lambda kind, payload: store.append_audit(session.id, kind, payload)  # noqa: E731
            if session.state is SessionState.CREATED:
                result = derender(session.image, cfg.derender)
                render_result = render(result.spec, cfg.sandbox)
                result.spec.validated = render_result.status is RenderStatus.SUCCESS
                session.append_revision(result.spec, [], render=render_result)
                session.state = SessionState.DERENDERED
                audit("derendered", {
                    "model": result.model_name,
                    "attempts": result.attempts,
                    "latency_ms": result.latency_ms,
                    "render_status": render_result.status.value,
                })
                store.save(session)
            report = run_critique_round(session, cfg.llm, audit=audit)
            session.state = SessionState.ANALYZED
            store.save(session)
            return {
                "id": session.id,
                "state": session.state.value,
                "spec_source": session.latest_revision().spec.source,
                "recommendations": [
                    _recommendation_doc(r) for r in session.recommendations if r.round == 0
                ],
                "parse": {
                    "total_lines": report.total_lines,
                    "skipped_lines": report.skipped_lines,
                },
            }

    @app.post("/api/v1/sessions/{session_id}/reanalyze")
    def reanalyze_session(session_id: str):
        with leases.acquire(session_id):
            session = _load(session_id)
            if session.state not in (SessionState.ANALYZED, SessionState.REFINING):
                raise ApiException(
                    "CONFLICT",
                    f"re-analyze requires state ANALYZED or REFINING, session is {session.state.value}",
                )
            audit = lambda kind, payload: store.append_audit(session.id, kind, payload)  # noqa: E731
            report = reanalyze(session, cfg.llm, audit=audit)
            store.save(session)
            round_no = session.max_round()
            return {
                "id": session.id,
                "state": session.state.value,
                "round": round_no,
                "recommendations": [
                    _recommendation_doc(r) for r in session.recommendations if r.round == round_no
                ],
                "parse": {
                    "total_lines": report.total_lines,
                    "skipped_lines": report.skipped_lines,
                },
            }

    @app.post("/api/v1/sessions/{session_id}/apply")
    def apply(session_id: str, body: dict):
        ids = body.get("recommendation_ids")
        if not isinstance(ids, list) or not ids or not all(isinstance(i, str) for i in ids):
            raise ApiException("INVALID_INPUT", "recommendation_ids must be a non-empty list of ids")
        with leases.acquire(session_id):
            session = _load(session_id)
            recs = [session.find_recommendation(rid) for rid in ids]
            for rec in recs:
                if rec.status is RecommendationStatus.PROPOSED:
                    rec.transition(RecommendationStatus.SELECTED)
                elif rec.status is not RecommendationStatus.SELECTED:
                    raise ApiException(
                        "CONFLICT",
                        f"recommendation {rec.id} is {rec.status.value}; only PROPOSED or SELECTED can be applied",
                    )
            audit = lambda kind, payload: store.append_audit(session.id, kind, payload)  # noqa: E731
            try:
                outcome = apply_recommendations(
                    session, ids, cfg.llm, cfg.sandbox,
                    max_edit_attempts=cfg.max_edit_attempts, audit=audit,
                )
            except (RenderValidationFailed, BackendUnreachable, BackendTimeout):
                store.save(session)  # selections persist; no revision was appended
                raise
            store.save(session)
            revision = session.latest_revision()
            return {
                "id": session.id,
                "state": session.state.value,
                "revision": revision.index,
                "render_status": revision.render.status.value if revision.render else None,
                "attempts": outcome.attempts,
                "applied_ids": list(revision.applied_recommendation_ids),
            }

    @app.get("/api/v1/sessions/{session_id}")
    def get_session(session_id: str):
        session = _load(session_id)
        doc = session_to_doc(session)
        for rev in doc["revisions"]:
            render_doc = rev.get("render")
            if render_doc and render_doc.get("image"):
                rev["image_url"] = f"/api/v1/sessions/{session_id}/revisions/{rev['index']}/image"
        return doc

    @app.get("/api/v1/sessions/{session_id}/revisions/{index}/image")
    def revision_image(session_id: str, index: int, request: Request):
        session = _load(session_id)
        if index < 0 or index >= len(session.revisions):
            raise ApiException("NOT_FOUND", f"no revision {index} in session {session_id}")
        revision = session.revisions[index]
        result = revision.render
        if result is None or result.status is not RenderStatus.SUCCESS or result.image is None:
            raise ApiException("NOT_FOUND", f"revision {index} has no rendered image")
        etag = f'"{result.image.sha256}"'
        if request.headers.get("if-none-match") == etag:
            return Response(status_code=304, headers={"ETag": etag})
        return Response(
            content=result.image.data,
            media_type=result.image.format.media_type,
            headers={"ETag": etag},
        )

    # -- analytics ------------------------------------------------------------

    @app.post("/api/v1/analytics/runs", status_code=202)
    def start_analytics_run(body: dict):
        recs, deferred_collect = _resolve_corpus(body)
        k_lo, k_hi = _parse_k_bounds(body.get("k_range", [2, 20]))
        if recs is not None:
            _check_corpus_size(len(recs), k_hi)
        seeds = _parse_seeds(body.get("seeds"))
        normalize = bool(body.get("normalize", False))
        session_ids = list(body.get("session_ids") or [])

        run_id = secrets.token_hex(8)
        out_dir = Path(cfg.store_root) / "analytics" / run_id
        run = AnalyticsRun(run_id=run_id, out_dir=str(out_dir))

        def job(active: AnalyticsRun) -> dict:
            def stage_progress(lo: float, hi: float):
                def on_progress(fraction: float) -> None:
                    with active.lock:
                        active.progress = lo + (hi - lo) * fraction
                return on_progress

            corpus = recs
            if corpus is None:
                # image corpora need model calls to yield recommendations;
                # that happens here, on the worker, not in the request
                corpus = deferred_collect(stage_progress(0.0, 0.3))
                _check_corpus_size(len(corpus), k_hi)
            result = run_eval(
                corpus, cfg.embed, out_dir,
                k_range=range(k_lo, k_hi + 1), seeds=seeds, normalize=normalize,
                progress=stage_progress(0.3 if recs is None else 0.0, 1.0),
            )
            if session_ids:
                _write_back_categories(result, session_ids)
            return _run_report_payload(result)

        worker.submit(run, job)
        return {"run_id": run_id, "state": run.state, "out_dir": run.out_dir}

    def _write_back_categories(result, session_ids: list[str]) -> None:
        """Label session recommendations with their cluster's term signature."""
        labels = {
            c.index: "/".join(c.top_terms[:2]) or f"cluster-{c.index}"
            for c in result.report.clusters
        }
        assigned = {
            rid: labels[int(cluster)]
            for rid, cluster in zip(result.matrix.row_ids, result.clustering.assignments)
        }
        for sid in session_ids:
            for _ in range(50):  # the analyze/apply lease may be held briefly
                try:
                    lease = leases.acquire(sid)
                except ApiException:
                    time.sleep(0.1)
                    continue
                with lease:
                    session = store.load(sid)
                    for rec in session.recommendations:
                        if rec.id in assigned:
                            rec.category = assigned[rec.id]
                    store.save(session)
                break
            else:
                logger.warning("could not lease session %s to write categories", sid)

    def _resolve_corpus(body: dict):
        """Returns (recs, deferred) — exactly one is set. Image directories
        defer the model-bound collection to the worker."""
        sources = [k for k in ("corpus_dir", "session_ids", "recs_file") if body.get(k)]
        if len(sources) != 1:
            raise ApiException(
                "INVALID_INPUT",
                "exactly one of corpus_dir, session_ids, or recs_file is required",
            )
        if body.get("recs_file"):
            path = Path(body["recs_file"])
            if not path.is_file():
                raise ApiException("INVALID_INPUT", f"recs_file {path} not found")
            return load_recs_file(path), None
        if body.get("corpus_dir"):
            corpus = Path(body["corpus_dir"])
            if not corpus.is_dir():
                raise ApiException("INVALID_INPUT", f"corpus_dir {corpus} is not a directory")
            recs_files = sorted(corpus.glob("*.jsonl")) + sorted(corpus.glob("recommendations.txt"))
            if recs_files:
                return load_recs_file(recs_files[0]), None
            images = [p for p in corpus.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg")]
            if not images:
                raise ApiException("INVALID_INPUT", f"corpus_dir {corpus} holds no images or recs file")

            def collect(progress):
                return collect_corpus_recommendations(corpus, cfg.derender, cfg.llm, progress=progress)

            return None, collect
        session_ids = body["session_ids"]
        if not isinstance(session_ids, list) or not session_ids:
            raise ApiException("INVALID_INPUT", "session_ids must be a non-empty list")
        recs = []
        for sid in session_ids:
            session = store.load(sid)
            recs.extend(session.recommendations)
        return recs, None

    @app.get("/api/v1/analytics/runs/{run_id}")
    def get_analytics_run(run_id: str):
        return worker.get(run_id).snapshot()

    # -- health ---------------------------------------------------------------

    @app.get("/api/v1/healthz")
    def healthz():
        return {
            "status": "ok",
            "version": __version__,
            "backends": {
                "derender": backend_reachable(cfg.derender.endpoint_url),
                "llm": backend_reachable(cfg.llm.endpoint_url),
                "embed": backend_reachable(cfg.embed.endpoint_url),
            },
        }

    if cfg.service.ui_dist and Path(cfg.service.ui_dist).is_dir():
        app.mount("/ui", StaticFiles(directory=cfg.service.ui_dist, html=True), name="ui")

    return app


def _run_report_payload(result) -> dict:
    """Inline the artifacts the UI needs: cluster report plus labeled points."""
    clusters_doc = json.loads((result.out_dir / "clusters.json").read_text(encoding="utf-8"))
    texts = {}
    with open(result.out_dir / "recommendations.jsonl", encoding="utf-8") as fh:
        for line in fh:
            doc = json.loads(line)
            texts[doc["id"]] = doc["text"]
    points = [
        {
            "id": rid,
            "x": float(x),
            "y": float(y),
            "cluster": int(result.clustering.assignments[i]),
            "text": texts.get(rid, ""),
        }
        for i, (rid, (x, y)) in enumerate(zip(result.projection.row_ids, result.projection.coords))
    ]
    return {"clusters": clusters_doc, "projection": points}


def serve(cfg: AppConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(cfg), host=cfg.service.host, port=cfg.service.port)
