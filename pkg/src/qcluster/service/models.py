"""Request/response envelopes for the HTTP service.

Exact rational quantities travel as strings ("p/q"), tick times as integers;
nanosecond floats are derived conveniences.
"""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class ScenarioRequest(BaseModel):
    scenario_yaml: str
    program_text: Optional[str] = None
    seed: Optional[int] = None


class RunRequest(ScenarioRequest):
    until: Optional[str] = Field(
        default=None, description="run horizon as a duration literal, e.g. '2ms'")


class SyncPair(BaseModel):
    primary: int
    secondary: int
    t1: int
    t2: int
    t3: int
    t4: int
    offset_cycles: int
    offset_residual: str
    transit_cycles: int
    transit_residual: str
    correction: int
    verification: bool


class LatencyEntry(BaseModel):
    board: int
    start_pulse_ns: Optional[float]
    first_conditional_ns: Optional[float]
    interval_ticks: Optional[int]
    interval_ns: Optional[float]


class ArrivalEntry(BaseModel):
    board: int
    register_update_ns: Optional[float]
    first_branch_ns: Optional[float]
    margin_ns: Optional[float]
    ok: bool


class ThroughputEntry(BaseModel):
    line_rate_bps: str
    encoding_factor: str
    encoding_overhead: str
    overhead_percent: float
    payload_ceiling_bps: str
    comp_fraction: str
    effective_bps: str
    effective_gbps: float


class RunSummary(BaseModel):
    description: str
    seed: int
    boards: list[int]
    sync: list[SyncPair]
    start_counter: int
    start_tick: int
    latency: list[LatencyEntry]
    arrivals: list[ArrivalEntry]
    counters: dict[str, int]
    warnings: int
    pulse_count: int
    trace_records: int
    throughput: Optional[ThroughputEntry]


class RunResponse(BaseModel):
    summary: RunSummary
    trace_jsonl: str
    pulses_csv: str
    report_txt: str


class SyncCheckResponse(BaseModel):
    sync: list[SyncPair]
    closure_residual_cycles: int
    report_txt: str


class ThroughputResponse(BaseModel):
    throughput: ThroughputEntry
    report_txt: str


class HealthResponse(BaseModel):
    status: str
    version: str
