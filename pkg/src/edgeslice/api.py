"""HTTP surface of the orchestrator.

Routes:
    POST   /mapss_mm/v1/mapss            instantiate (body: MAPSS descriptor)
    DELETE /mapss_mm/v1/mapss/{mapssId}  terminate
    GET    /mapss_mm/v1/mapss            list instances
    GET    /mapss_mm/v1/mapss/{mapssId}  inspect one instance
    GET    /registry/v1/images/{imageRef} read-only image metadata
    GET    /cluster/v1/state             canonical cluster state dump

Status mapping: descriptor/template problems are 400, unknown ids 404,
duplicate live instances 409, capacity exhaustion 507.  Error payloads name
the failing instantiation step.
"""

from __future__ import annotations

import json
import logging
import sys
import time

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from starlette.concurrency import run_in_threadpool

from .errors import (
    Conflict,
    DescriptorSyntaxError,
    EdgesliceError,
    Forbidden,
    NotFound,
    ParamError,
    QuotaExceeded,
    RenderError,
    SchemaError,
    TemplateError,
    Unschedulable,
    ValidationError,
)
from .meco import Orchestrator, StepFailure

_log = logging.getLogger("edgeslice.api")

_STATUS_BY_TYPE = (
    (DescriptorSyntaxError, 400),
    (SchemaError, 400),
    (ValidationError, 400),
    (ParamError, 400),
    (RenderError, 400),
    (TemplateError, 400),
    (NotFound, 404),
    (Conflict, 409),
    (Forbidden, 403),
    (QuotaExceeded, 507),
    (Unschedulable, 507),
)


def _status_for(exc: Exception) -> int:
    for etype, code in _STATUS_BY_TYPE:
        if isinstance(exc, etype):
            return code
    return 500


def error_response(exc: Exception) -> JSONResponse:
    step = None
    cause = exc
    if isinstance(exc, StepFailure):
        step = exc.step
        cause = exc.cause
    return JSONResponse(
        status_code=_status_for(cause),
        content={"error": {
            "kind": getattr(cause, "kind", "error"),
            "step": step,
            "detail": str(cause),
        }},
    )


def create_app(orchestrator: Orchestrator) -> FastAPI:
    app = FastAPI(title="edgeslice", docs_url=None, redoc_url=None)
    cluster = orchestrator.cluster
    registry = orchestrator.acf_registry

    @app.middleware("http")
    async def request_log(request: Request, call_next):
        started = time.monotonic()
        response = await call_next(request)
        _log.info(json.dumps({
            "method": request.method,
            "path": request.url.path,
            "status": response.status_code,
            "durationMs": round((time.monotonic() - started) * 1000, 3),
        }))
        return response

    @app.exception_handler(EdgesliceError)
    async def edgeslice_error(_request: Request, exc: EdgesliceError):
        return error_response(exc)

    @app.post("/mapss_mm/v1/mapss")
    async def instantiate(request: Request):
        body = await request.body()
        try:
            record = await run_in_threadpool(orchestrator.handle_instantiate, body)
        except StepFailure as exc:
            return error_response(exc)
        return JSONResponse(status_code=201, content=record.to_wire())

    @app.delete("/mapss_mm/v1/mapss/{mapss_id}")
    async def terminate(mapss_id: str):
        try:
            report = await run_in_threadpool(orchestrator.handle_terminate, mapss_id)
        except EdgesliceError as exc:
            return error_response(exc)
        return Response(status_code=204,
                        headers={"X-Deleted-Objects": str(report["deletedObjects"])})

    @app.get("/mapss_mm/v1/mapss")
    async def list_instances():
        return {"items": [r.to_wire() for r in orchestrator.list_instances()]}

    @app.get("/mapss_mm/v1/mapss/{mapss_id}")
    async def get_instance(mapss_id: str):
        try:
            record = orchestrator.get_instance(mapss_id)
        except EdgesliceError as exc:
            return error_response(exc)
        return record.to_wire()

    @app.get("/registry/v1/images/{image_ref:path}")
    async def get_image(image_ref: str):
        try:
            record = registry.lookup(image_ref)
        except EdgesliceError as exc:
            return error_response(exc)
        return record.to_wire()

    @app.get("/cluster/v1/state")
    async def cluster_state():
        return Response(content=cluster.dump_json(), media_type="application/json")

    return app


def configure_logging(level: int = logging.INFO):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(message)s"))
    root = logging.getLogger("edgeslice")
    root.setLevel(level)
    if not root.handlers:
        root.addHandler(handler)
