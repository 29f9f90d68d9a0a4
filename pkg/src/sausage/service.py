"""HTTP front end: ``POST /run/{subcommand}`` runs one experiment.

Serve with ``uvicorn sausage.service:app``.
"""
from __future__ import annotations

from typing import Any, Union

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .config import SUBCOMMANDS, ExperimentConfig, default_workers
from .runner import EXIT_ERROR, execute

ParamValue = Union[bool, int, float, str, list[Union[int, float, str]]]


class RunRequest(BaseModel):
    d: int | None = None
    N: int | None = None
    law: str | None = None
    set: str | None = Field(None, description="point-set file readable by the server")
    points: list[list[int]] | str | None = Field(
        None, description="inline points, rows of integers or 'x y z; ...' text")
    master_seed: int = 0
    workers: int | None = None
    output: str = "results"
    write: bool = False
    params: dict[str, ParamValue] = Field(default_factory=dict)

    def to_config(self, subcommand: str) -> ExperimentConfig:
        pts = self.points
        if isinstance(pts, list):
            pts = "; ".join(" ".join(str(c) for c in row) for row in pts)
        return ExperimentConfig(subcommand, d=self.d, N=self.N, law=self.law, set=self.set,
                                points=pts, master_seed=self.master_seed,
                                workers=self.workers or default_workers(),
                                output=self.output, params=dict(self.params))


class RunResponse(BaseModel):
    subcommand: str
    status: str
    exit_code: int
    config: str
    estimates: list[dict[str, Any]]
    trends: list[dict[str, Any]]
    details: dict[str, Any]
    warnings: list[str]
    wall_clock: float
    version: str
    path: str | None = None


class ErrorBody(BaseModel):
    error: str
    kind: str
    field: str | None = None


app = FastAPI(title="sausage", version=__version__)


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__, "subcommands": list(SUBCOMMANDS)}


@app.post("/run/{subcommand}", response_model=RunResponse,
          responses={422: {"model": ErrorBody}})
def run_endpoint(subcommand: str, req: RunRequest) -> RunResponse:
    if subcommand not in SUBCOMMANDS:
        raise HTTPException(404, detail={"error": f"unknown subcommand {subcommand!r}",
                                         "kind": "config", "field": "subcommand"})
    code, body = execute(req.to_config(subcommand), write=req.write)
    if code == EXIT_ERROR:
        raise HTTPException(422, detail=body)
    return RunResponse(exit_code=code, **body)
