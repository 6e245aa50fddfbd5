"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class SamplerParams(BaseModel):
    mode: Literal["greedy", "top_p"] = "greedy"
    p: float = Field(default=0.9, gt=0.0, le=1.0)
    temperature: float = Field(default=1.0, ge=0.0)
    seed: int = 0


class GenerateRequest(BaseModel):
    model_path: str
    tokenizer_path: str
    prompt: str = ""
    steps: int = Field(default=64, ge=1)
    sampler: SamplerParams = SamplerParams()
    benchmark: bool = False  # suppress EOS and decode exactly `steps` tokens
    async_prefetch: bool = True
    inject_transfer_us: float = Field(default=0.0, ge=0.0)
    workers: int = Field(default=1, ge=1)
    kernel: Literal["reference", "staged"] = "reference"


class BenchReportModel(BaseModel):
    tokens: int
    wall_seconds: float
    tok_per_s: float
    gops: float
    fractions: dict[str, float]
    workers: int


class GenerateResponse(BaseModel):
    text: str
    prompt_ids: list[int]
    token_ids: list[int]
    report: BenchReportModel


class GopsBenchRequest(BaseModel):
    model_path: str
    repeats: int = Field(default=20, ge=1)
    kernel: Literal["reference", "staged"] = "reference"


class GopsBenchResponse(BaseModel):
    ops: int
    repeats: int
    mean_gops: float
    std_gops: float


class SimulateRequest(BaseModel):
    m: int = Field(ge=1)
    n: int = Field(ge=1)
    simd_lanes: int = Field(default=16, ge=1)
    gs: int = Field(default=256, ge=1)
    clock_hz: float = Field(default=205e6, gt=0)
    ddr_bytes_per_cycle: Optional[float] = Field(default=None, gt=0)  # None = unlimited
    stream_depth: int = Field(default=16, ge=1)
    stage_latency: int = Field(default=4, ge=0)


class SimulateResponse(BaseModel):
    m: int
    n: int
    total_cycles: int
    busy_cycles: int
    stall_cycles: int
    fill_cycles: int
    drain_cycles: int
    steady_row_cycles: int
    stage_busy: dict[str, int]
    ops: int
    sustained_gops: float
    peak_gops: float
    seconds: float


class CalibrateRequest(BaseModel):
    target_gops: float = Field(gt=0)
    m: int = Field(ge=1)
    n: int = Field(ge=1)
    simd_lanes: int = Field(default=16, ge=1)
    gs: int = Field(default=256, ge=1)
    clock_hz: float = Field(default=205e6, gt=0)


class CalibrateResponse(BaseModel):
    ddr_bytes_per_cycle: float
    achieved_gops: float


class ScheduleRequest(BaseModel):
    compute: list[float]
    transfer: list[float]
    mode: Literal["sync", "async"]


class ScheduleResponse(BaseModel):
    mode: str
    transfer_start: list[float]
    transfer_end: list[float]
    compute_start: list[float]
    compute_end: list[float]
    total_time: float


class QuantizeStatsRequest(BaseModel):
    group_size: int = Field(default=256, ge=1)
    values: Optional[list[float]] = None  # explicit data, or:
    random_normal: Optional[int] = Field(default=None, ge=1)  # sample size
    seed: int = 0


class QuantizeStatsResponse(BaseModel):
    count: int
    groups: int
    max: float
    min: float
    mean: float
    std: float
    mean_rel_pct: float
    std_rel_pct: float


class SelftestResponse(BaseModel):
    passed: int
    failed: int
    failures: list[str]
    ok: bool


class HealthResponse(BaseModel):
    status: str
    version: str
