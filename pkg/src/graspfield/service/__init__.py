"""FastAPI application wrapping the grasp-selection pipeline."""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..errors import GraspFieldError, error_name, exit_code_for
from . import handlers
from .schemas import (
    BenchRequest,
    BenchResponse,
    GraspRequest,
    GraspResponse,
    PlanRequest,
    PlanResponse,
    QueryRequest,
    QueryResponse,
    SynthRequest,
    SynthResponse,
    TrajectoryRequest,
    TrajectoryResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(title="graspfield",
                  description="Language-directed task-oriented grasp selection")

    @app.exception_handler(GraspFieldError)
    async def domain_error_handler(_: Request, exc: GraspFieldError) -> JSONResponse:
        return JSONResponse(status_code=422, content={
            "error": error_name(exc),
            "message": str(exc),
            "exit_code": exit_code_for(exc),
        })

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok"}

    @app.post("/grasp", response_model=GraspResponse)
    def grasp(req: GraspRequest) -> GraspResponse:
        return handlers.handle_grasp(req)

    @app.post("/query", response_model=QueryResponse)
    def query(req: QueryRequest) -> QueryResponse:
        return handlers.handle_query(req)

    @app.post("/synth", response_model=SynthResponse)
    def synth(req: SynthRequest) -> SynthResponse:
        return handlers.handle_synth(req)

    @app.post("/plan", response_model=PlanResponse)
    def plan(req: PlanRequest) -> PlanResponse:
        return handlers.handle_plan(req)

    @app.post("/trajectory", response_model=TrajectoryResponse)
    def trajectory(req: TrajectoryRequest) -> TrajectoryResponse:
        return handlers.handle_trajectory(req)

    @app.post("/bench", response_model=BenchResponse)
    def bench(req: BenchRequest) -> BenchResponse:
        return handlers.handle_bench(req)

    return app


app = create_app()
