"""FastAPI application exposing data preparation, training, evaluation,
representation export and sweeps as submit-and-poll jobs.

POST endpoints accept ``?wait=true`` (default) to run the job in the request
and return its final state, or ``?wait=false`` to queue it for the worker
pool; poll GET /jobs/{id} until it reaches a terminal status.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import CheckpointExistsError, ClusterCLError, ConfigError, DataError
from . import runners
from .jobs import JobStore
from .schemas import (
    EmbedRequest,
    EvalRequest,
    HealthResponse,
    JobInfo,
    PrepareDataRequest,
    PretrainRequest,
    SweepRequest,
)

_STATUS_CODES = {
    ConfigError: 400,
    DataError: 400,
    CheckpointExistsError: 409,
}


def create_app(max_workers: int = 2) -> FastAPI:
    app = FastAPI(title="clustercl", version=__version__)
    store = JobStore(max_workers=max_workers)
    app.state.jobs = store

    @app.exception_handler(ClusterCLError)
    async def _domain_error(_: Request, exc: ClusterCLError) -> JSONResponse:
        code = next((c for t, c in _STATUS_CODES.items() if isinstance(exc, t)), 400)
        return JSONResponse(status_code=code, content={"detail": str(exc)})

    @app.exception_handler(FileNotFoundError)
    async def _missing_file(_: Request, exc: FileNotFoundError) -> JSONResponse:
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/data/prepare", response_model=JobInfo)
    def prepare_data(req: PrepareDataRequest, wait: bool = True) -> JobInfo:
        return store.submit("prepare_data", lambda: runners.run_prepare(req), wait)

    @app.post("/runs/pretrain", response_model=JobInfo)
    def pretrain(req: PretrainRequest, wait: bool = True) -> JobInfo:
        return store.submit("pretrain", lambda: runners.run_pretrain(req), wait)

    @app.post("/runs/eval", response_model=JobInfo)
    def eval_run(req: EvalRequest, wait: bool = True) -> JobInfo:
        return store.submit("eval", lambda: runners.run_eval(req), wait)

    @app.post("/runs/embed", response_model=JobInfo)
    def embed(req: EmbedRequest, wait: bool = True) -> JobInfo:
        return store.submit("embed", lambda: runners.run_embed(req), wait)

    @app.post("/runs/sweep", response_model=JobInfo)
    def sweep(req: SweepRequest, wait: bool = True) -> JobInfo:
        return store.submit("sweep", lambda: runners.run_sweep(req), wait)

    @app.get("/jobs", response_model=list[JobInfo])
    def list_jobs() -> list[JobInfo]:
        return store.list()

    @app.get("/jobs/{job_id}", response_model=JobInfo)
    def get_job(job_id: str) -> JobInfo:
        try:
            return store.get(job_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no such job: {job_id}")

    return app
