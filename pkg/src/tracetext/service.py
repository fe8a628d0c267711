"""HTTP service: ingest sources, generate traceable documents, read them
back, apply review verdicts, and report metrics.

Every non-2xx body is the same shape: {"http_status", "code", "message"}
with codes drawn from ERROR_CODES. Traceable documents ride in an envelope
{"revision": n, "document": {...}} and a PATCH must present the revision it
read; a stale revision gets 409 and the caller re-reads. Generation for a
given source is mutually exclusive.
"""

from __future__ import annotations

import json
import logging
import threading
import time
import uuid

from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel
from starlette.exceptions import HTTPException as StarletteHTTPException

from . import review
from .chain import ChainError, run_chain
from .config import AppConfig
from .llm import GeneratorUnconfigured, RemoteGenerator
from .model import ReviewAnnotation, SourceDocument, Span, Verdict, document_to_dict
from .offline import OfflineGenerator, weights_for_sources
from .store import DocumentStore, InMemoryStore, RevisionConflictError, UnknownIdError

logger = logging.getLogger("tracetext.service")

ERROR_CODES = frozenset(
    {
        "empty_source",
        "source_too_large",
        "source_not_found",
        "document_not_found",
        "claim_not_found",
        "generation_in_progress",
        "generator_failure",
        "generator_unconfigured",
        "revision_conflict",
        "invalid_proposed_span",
        "validation_error",
        "not_found",
        "method_not_allowed",
        "internal_error",
    }
)


class ApiException(Exception):
    def __init__(self, http_status: int, code: str, message: str):
        assert code in ERROR_CODES, f"undocumented error code {code!r}"
        self.http_status = http_status
        self.code = code
        self.message = message
        super().__init__(message)


class SourceCreateRequest(BaseModel):
    text: str
    title: str | None = None
    metadata: dict[str, str] = {}


class SpanModel(BaseModel):
    start: int
    end: int


class LinkPatchRequest(BaseModel):
    revision: int
    verdict: str
    note: str | None = None
    proposed_spans: list[SpanModel] | None = None


def _error_response(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"http_status": status, "code": code, "message": message},
    )


def create_app(config: AppConfig | None = None, store: DocumentStore | None = None) -> FastAPI:
    config = config or AppConfig()
    store = store if store is not None else InMemoryStore()
    app = FastAPI(title="tracetext", version="0.1.0")
    app.state.store = store
    app.state.config = config

    generating: set[str] = set()
    generating_lock = threading.Lock()

    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(config.cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ApiException)
    async def handle_api_exception(request: Request, exc: ApiException):
        return _error_response(exc.http_status, exc.code, exc.message)

    @app.exception_handler(RequestValidationError)
    async def handle_validation(request: Request, exc: RequestValidationError):
        return _error_response(422, "validation_error", str(exc.errors()[:3]))

    @app.exception_handler(StarletteHTTPException)
    async def handle_http_exception(request: Request, exc: StarletteHTTPException):
        code = "method_not_allowed" if exc.status_code == 405 else "not_found"
        return _error_response(exc.status_code, code, str(exc.detail))

    @app.exception_handler(Exception)
    async def handle_unexpected(request: Request, exc: Exception):
        logger.exception("unhandled error on %s %s", request.method, request.url.path)
        return _error_response(500, "internal_error", f"{type(exc).__name__}: {exc}")

    @app.middleware("http")
    async def log_requests(request: Request, call_next):
        started = time.perf_counter()
        response = await call_next(request)
        logger.info(
            json.dumps(
                {
                    "method": request.method,
                    "path": request.url.path,
                    "status": response.status_code,
                    "ms": round((time.perf_counter() - started) * 1000, 2),
                }
            )
        )
        return response

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/v1/sources", status_code=201)
    def create_source(body: SourceCreateRequest):
        if not body.text:
            raise ApiException(400, "empty_source", "source text must be nonempty")
        if len(body.text) > config.max_source_chars:
            raise ApiException(
                413,
                "source_too_large",
                f"source exceeds {config.max_source_chars} characters",
            )
        source = SourceDocument(
            id=uuid.uuid4().hex, text=body.text, title=body.title, metadata=body.metadata
        )
        store.put_source(source)
        return {"id": source.id}

    @app.get("/v1/sources")
    def list_sources():
        return {
            "sources": [
                {"id": s.id, "title": s.title, "has_traceable": store.has_traceable(s.id)}
                for s in store.list_sources()
            ]
        }

    @app.get("/v1/sources/{source_id}")
    def get_source(source_id: str):
        try:
            source = store.get_source(source_id)
        except UnknownIdError:
            raise ApiException(404, "source_not_found", f"no source {source_id!r}")
        return {
            "id": source.id,
            "title": source.title,
            "text": source.text,
            "metadata": dict(source.metadata),
        }

    def _build_generator(backend: str):
        if backend == "offline":
            weights = weights_for_sources(store.list_sources(), config.align.idf_floor)
            return OfflineGenerator(
                weights,
                align_cfg=config.align,
                sentence_count=config.summary_sentences,
                abbreviations=config.abbreviations(),
            )
        try:
            return RemoteGenerator.from_config(config.llm)
        except GeneratorUnconfigured as exc:
            raise ApiException(502, "generator_unconfigured", str(exc))

    @app.post("/v1/sources/{source_id}/traceable")
    def generate_traceable(
        source_id: str, backend: str = Query("offline", pattern="^(offline|llm)$")
    ):
        try:
            source = store.get_source(source_id)
        except UnknownIdError:
            raise ApiException(404, "source_not_found", f"no source {source_id!r}")
        with generating_lock:
            if source_id in generating:
                raise ApiException(
                    409,
                    "generation_in_progress",
                    f"generation already running for source {source_id!r}",
                )
            generating.add(source_id)
        try:
            generator = _build_generator(backend)
            try:
                doc, report = run_chain(source, generator, config.chain_config())
            except ChainError as exc:
                raise ApiException(
                    502, "generator_failure", f"stage {exc.stage} failed: {exc}"
                )
            revision = store.put_traceable(source_id, doc, expected_revision=None)
        finally:
            with generating_lock:
                generating.discard(source_id)
        return {
            "revision": revision,
            "document": document_to_dict(doc),
            "report": report.to_dict(),
        }

    @app.get("/v1/sources/{source_id}/traceable")
    def get_traceable(source_id: str):
        try:
            doc, revision = store.get_traceable(source_id)
        except UnknownIdError:
            raise ApiException(
                404, "document_not_found", f"no traceable document for source {source_id!r}"
            )
        return {"revision": revision, "document": document_to_dict(doc)}

    @app.patch("/v1/traceable/{source_id}/links/{claim_id}")
    def patch_link(source_id: str, claim_id: str, body: LinkPatchRequest):
        try:
            doc, revision = store.get_traceable(source_id)
        except UnknownIdError:
            raise ApiException(
                404, "document_not_found", f"no traceable document for source {source_id!r}"
            )
        if body.revision != revision:
            raise ApiException(
                409,
                "revision_conflict",
                f"document is at revision {revision}, you sent {body.revision}",
            )
        source = store.get_source(source_id)
        try:
            verdict = Verdict(body.verdict)
        except ValueError:
            raise ApiException(422, "validation_error", f"unknown verdict {body.verdict!r}")
        try:
            spans = (
                tuple(Span(s.start, s.end) for s in body.proposed_spans)
                if body.proposed_spans is not None
                else None
            )
        except (TypeError, ValueError) as exc:
            raise ApiException(422, "invalid_proposed_span", str(exc))
        annotation = ReviewAnnotation(
            verdict=verdict, link_id=claim_id, note=body.note, proposed_spans=spans
        )
        try:
            updated = review.apply_annotation(doc, annotation, source)
        except review.UnknownTargetError as exc:
            raise ApiException(404, "claim_not_found", str(exc))
        except review.InvalidProposedSpanError as exc:
            raise ApiException(422, "invalid_proposed_span", str(exc))
        try:
            new_revision = store.put_traceable(source_id, updated, expected_revision=body.revision)
        except RevisionConflictError as exc:
            raise ApiException(409, "revision_conflict", str(exc))
        return {"revision": new_revision, "document": document_to_dict(updated)}

    @app.get("/v1/traceable/{source_id}/report")
    def get_report(source_id: str):
        try:
            doc, _ = store.get_traceable(source_id)
        except UnknownIdError:
            raise ApiException(
                404, "document_not_found", f"no traceable document for source {source_id!r}"
            )
        return {
            "coverage": review.compute_coverage(doc),
            "accuracy": review.accuracy_report(doc).to_dict(),
        }

    return app
