"""
wpcn API Server
===============
Optional HTTP surface over the solvers.

Endpoints:
- GET  /                 service info
- GET  /health           health checks (solver backends)
- GET  /config/default   fully defaulted scenario
- POST /solve            scenario + seed + scheme -> SolveReport and allocation file record
- POST /verify           allocation file record -> rank and security-sampling report
- GET  /metrics          Prometheus metrics (or the in-memory fallback)

Run:
    uvicorn app:app --host 0.0.0.0 --port 8000
"""

import logging
import time
from typing import Any, Dict, Optional

from fastapi import APIRouter, FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field
from starlette.middleware.base import BaseHTTPMiddleware

from .. import __version__
from ..config import SCHEMES, ScenarioFile, parse_scenario
from ..errors import WpcnError
from ..metrics import export_metrics, health_checker, record_request
from ..pipelines.harness import allocation_file_record, jsonable, solve_instance, verify_allocation

logger = logging.getLogger(__name__)


# ============================================================
# Pydantic Models
# ============================================================

class SolveRequest(BaseModel):
    scenario: Dict[str, Any] = Field(default_factory=dict)
    seed: int = 0
    scheme: str = "optimal"


class VerifyRequest(BaseModel):
    record: Dict[str, Any]
    n_samples: int = Field(1000, ge=1, le=100_000)
    seed: int = 0
    rank_tol: float = Field(1e-6, gt=0)


# ============================================================
# Middleware / Routers
# ============================================================

class MetricsMiddleware(BaseHTTPMiddleware):
    """Records request count and latency."""

    async def dispatch(self, request: Request, call_next):
        if request.url.path == "/metrics":
            return await call_next(request)
        start = time.perf_counter()
        status = 500
        try:
            response = await call_next(request)
            status = response.status_code
        finally:
            latency = time.perf_counter() - start
            record_request(request.method, request.url.path, status, latency)
        response.headers["X-Response-Time"] = f"{latency:.3f}s"
        return response


def create_metrics_router() -> APIRouter:
    router = APIRouter(tags=["Monitoring"])

    @router.get("/metrics")
    async def metrics():
        payload, content_type = export_metrics()
        return Response(content=payload, media_type=content_type)

    @router.get("/health")
    async def health():
        results = health_checker.run_checks()
        return JSONResponse(results, status_code=200 if results["status"] == "healthy" else 503)

    return router


def create_solver_router() -> APIRouter:
    router = APIRouter(tags=["Solver"])

    @router.get("/config/default")
    async def default_config():
        return ScenarioFile().model_dump(mode="json")

    # sync handlers run in the threadpool; each solve builds its own conic session
    @router.post("/solve")
    def solve(req: SolveRequest):
        if req.scheme not in SCHEMES:
            return JSONResponse({"detail": f"unknown scheme {req.scheme!r}"}, status_code=422)
        scenario = parse_scenario(req.scenario)
        cfg, channels, alloc, report = solve_instance(scenario, req.scheme, req.seed)
        record: Optional[dict] = None
        if alloc is not None:
            record = allocation_file_record(scenario, req.seed, req.scheme, alloc, channels)
        return jsonable({"report": report.to_dict(), "record": record})

    @router.post("/verify")
    def verify(req: VerifyRequest):
        return jsonable(verify_allocation(req.record, req.n_samples, req.seed, req.rank_tol))

    return router


# ============================================================
# App
# ============================================================

def create_app() -> FastAPI:
    app = FastAPI(
        title="wpcn",
        description="Robust secure resource allocation for wireless-powered networks",
        version=__version__,
    )
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"])
    app.add_middleware(MetricsMiddleware)
    app.include_router(create_metrics_router())
    app.include_router(create_solver_router())

    @app.get("/", tags=["Health"])
    async def root():
        return {"status": "ok", "service": "wpcn", "version": __version__, "schemes": list(SCHEMES)}

    @app.exception_handler(WpcnError)
    async def wpcn_error_handler(request: Request, exc: WpcnError):
        return JSONResponse(status_code=422, content={"detail": str(exc), "error": type(exc).__name__})

    return app
