"""FastAPI application exposing the simulator."""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..errors import NonRepresentableDuration, ParseError, SimError, ValidationError
from ..runner import (
    render_throughput_txt,
    run_scenario,
    sync_check,
    sync_entry,
    throughput_check,
    throughput_entry,
)
from ..scenario import Scenario, parse_scenario
from ..timebase import parse_duration
from .models import (
    HealthResponse,
    RunRequest,
    RunResponse,
    ScenarioRequest,
    SyncCheckResponse,
    ThroughputResponse,
)

app = FastAPI(
    title="qcluster",
    version=__version__,
    description="Deterministic multi-FPGA control cluster simulator",
)


def _load(request: ScenarioRequest) -> Scenario:
    try:
        return parse_scenario(request.scenario_yaml,
                              program_text=request.program_text)
    except (ParseError, ValidationError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


@app.get("/healthz", response_model=HealthResponse)
def healthz() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/run", response_model=RunResponse)
def run(request: RunRequest) -> RunResponse:
    scenario = _load(request)
    until: Optional[int] = None
    if request.until is not None:
        try:
            until = parse_duration(request.until)
        except NonRepresentableDuration as exc:
            raise HTTPException(status_code=422, detail=f"until: {exc}") from exc
    try:
        result = run_scenario(scenario, until=until, seed=request.seed)
    except ValidationError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    except SimError as exc:
        raise HTTPException(status_code=400,
                            detail=f"{type(exc).__name__}: {exc}") from exc
    return RunResponse(
        summary=result.summary,
        trace_jsonl=result.trace_jsonl,
        pulses_csv=result.pulses_csv,
        report_txt=result.report_txt,
    )


@app.post("/sync-check", response_model=SyncCheckResponse)
def sync_check_endpoint(request: ScenarioRequest) -> SyncCheckResponse:
    scenario = _load(request)
    try:
        result = sync_check(scenario, seed=request.seed)
    except SimError as exc:
        raise HTTPException(status_code=400,
                            detail=f"{type(exc).__name__}: {exc}") from exc
    return SyncCheckResponse(
        sync=[sync_entry(r) for r in result.reports],
        closure_residual_cycles=result.closure_residual_cycles,
        report_txt=result.report_txt,
    )


@app.post("/throughput", response_model=ThroughputResponse)
def throughput_endpoint(request: Optional[ScenarioRequest] = None) -> ThroughputResponse:
    scenario = None
    if request is not None and request.scenario_yaml.strip():
        scenario = _load(request)
    report = throughput_check(scenario)
    return ThroughputResponse(
        throughput=throughput_entry(report),
        report_txt=render_throughput_txt(report),
    )
