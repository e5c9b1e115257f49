"""HTTP API over the store and graph, plus static serving for the UI bundle.

The service is read-only by construction: it only ever opens the database in
read-only mode, and the SQL endpoint goes through query_readonly. Graph
snapshots are cached per build options; filters and neighborhoods are applied
per request on the cached snapshot.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import graph as graph_mod
from . import store as store_mod
from .errors import SciConceptError
from .graph import GraphOptions, UnknownNode
from .schema import UnknownTag, tag_from_label
from .store import (
    BadParams,
    QueryTimeout,
    RejectedStatement,
    SqlError,
    StoreUnavailable,
    UnknownQuery,
)

log = logging.getLogger(__name__)


@dataclass
class ApiConfig:
    """Service settings; static_dir, when set, is served at the site root."""

    db_path: str
    host: str = "127.0.0.1"
    port: int = 8000
    max_rows: int = 1000
    query_timeout: float = 5.0
    static_dir: str | None = None
    cors_origins: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not (0 < self.port < 65536):
            raise ValueError(f"invalid port {self.port}")


@dataclass(frozen=True)
class ApiError(Exception):
    """One failure surface: HTTP status, machine code, human message."""

    status: int
    code: str
    message: str


_ERROR_STATUS: list[tuple[type[Exception], int, str]] = [
    (RejectedStatement, 400, "rejected_statement"),
    (SqlError, 400, "sql_error"),
    (BadParams, 400, "bad_params"),
    (UnknownTag, 400, "unknown_tag"),
    (QueryTimeout, 504, "timeout"),
    (UnknownQuery, 404, "unknown_query"),
    (UnknownNode, 404, "unknown_node"),
    (StoreUnavailable, 503, "store_unavailable"),
]


def _to_api_error(exc: Exception) -> ApiError:
    for exc_type, status, code in _ERROR_STATUS:
        if isinstance(exc, exc_type):
            return ApiError(status=status, code=code, message=str(exc))
    return ApiError(status=500, code="internal_error", message=str(exc))


class QueryBody(BaseModel):
    sql: str
    max_rows: int | None = None


@dataclass
class _GraphCache:
    snapshots: dict[tuple, graph_mod.ConceptGraph] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def get(self, handle: store_mod.StoreHandle, options: GraphOptions) -> graph_mod.ConceptGraph:
        key = (options.run_id, options.category, options.min_edge_weight,
               options.min_paper_count, options.max_nodes)
        with self.lock:
            snapshot = self.snapshots.get(key)
        if snapshot is None:
            snapshot = graph_mod.build_graph(handle, options)
            with self.lock:
                self.snapshots[key] = snapshot
        return snapshot


def create_app(config: ApiConfig) -> FastAPI:
    """Build the FastAPI application for a database file."""
    handle = store_mod.open_store(config.db_path)
    cache = _GraphCache()
    app = FastAPI(title="sciconcept", docs_url=None, redoc_url=None)

    if config.cors_origins:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(config.cors_origins),
            allow_methods=["GET", "POST"],
            allow_headers=["*"],
        )

    @app.exception_handler(SciConceptError)
    async def handle_package_error(request: Request, exc: SciConceptError):
        error = _to_api_error(exc)
        return JSONResponse(
            status_code=error.status, content={"error": error.code, "message": error.message}
        )

    @app.get("/api/health")
    def health() -> dict:
        return {"status": "ok", "database": str(handle.path)}

    @app.get("/api/papers/{paper_id:path}")
    def paper(paper_id: str):
        found = store_mod.get_paper(handle, paper_id)
        if found is None:
            return JSONResponse(
                status_code=404,
                content={"error": "unknown_paper", "message": f"no paper {paper_id!r}"},
            )
        return found

    @app.post("/api/query")
    def query(body: QueryBody) -> dict:
        max_rows = body.max_rows if body.max_rows is not None else config.max_rows
        max_rows = max(1, min(max_rows, config.max_rows))
        result = store_mod.query_readonly(
            handle, body.sql, max_rows=max_rows, timeout=config.query_timeout
        )
        return result.to_dict()

    @app.get("/api/predefined/{name}")
    def predefined(name: str, request: Request) -> dict:
        params = dict(request.query_params)
        return store_mod.predefined_query(handle, name, params).to_dict()

    @app.get("/api/graph")
    def graph_endpoint(
        tags: str | None = None,
        min_weight: int = 1,
        max_nodes: int = 500,
        center: str | None = None,
        depth: int = 1,
        run_id: str | None = None,
        category: str | None = None,
    ) -> Response:
        options = GraphOptions(
            run_id=run_id,
            category=category,
            min_edge_weight=min_weight,
            max_nodes=max_nodes,
        )
        snapshot = cache.get(handle, options)
        if tags:
            wanted = [tag_from_label(part) for part in tags.split(",") if part.strip()]
            snapshot = graph_mod.filter_by_tags(snapshot, wanted)
        if center is not None:
            snapshot = graph_mod.neighborhood(snapshot, center, depth)
        document = graph_mod.export_json(snapshot)
        return Response(
            content=graph_mod.dumps_export(document), media_type="application/json"
        )

    @app.get("/api/stats")
    def stats() -> dict:
        return store_mod.stats(handle)

    if config.static_dir:
        static_path = Path(config.static_dir)
        if static_path.is_dir():
            from fastapi.staticfiles import StaticFiles

            app.mount("/", StaticFiles(directory=static_path, html=True), name="ui")
        else:
            log.warning("static directory %s does not exist; UI not mounted", static_path)

    return app


def serve(config: ApiConfig) -> None:
    """Run the API with uvicorn until interrupted."""
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")
