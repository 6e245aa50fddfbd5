"""FastAPI service wrapping the inference engine and simulators.

Engines are cached per (model, tokenizer, streaming options) so a
long-running server loads each model once; a per-engine lock serializes
decode requests because one engine owns one decode stream.
"""

from __future__ import annotations

import math
import threading

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..engine import InferenceEngine
from ..errors import LamfError
from ..pipesim import HwConfig, calibrate_ddr, simulate_gqmv
from ..quant import QuantSpec, error_stats, quantize
from ..selftest import run_selftest
from ..stream import ScheduleCosts, plan_schedule
from ..textio import SamplerConfig
from .schemas import (
    BenchReportModel,
    CalibrateRequest,
    CalibrateResponse,
    GenerateRequest,
    GenerateResponse,
    GopsBenchRequest,
    GopsBenchResponse,
    HealthResponse,
    QuantizeStatsRequest,
    QuantizeStatsResponse,
    ScheduleRequest,
    ScheduleResponse,
    SelftestResponse,
    SimulateRequest,
    SimulateResponse,
)


class EngineCache:
    def __init__(self):
        self._engines: dict[tuple, tuple[InferenceEngine, threading.Lock]] = {}
        self._lock = threading.Lock()

    def get(self, model_path, tokenizer_path, *, prefetch=True, workers=1,
            transfer_delay_s=0.0, kernel="reference"):
        key = (model_path, tokenizer_path, prefetch, workers, transfer_delay_s, kernel)
        with self._lock:
            if key not in self._engines:
                engine = InferenceEngine(
                    model_path, tokenizer_path, prefetch=prefetch, workers=workers,
                    transfer_delay_s=transfer_delay_s, kernel=kernel)
                self._engines[key] = (engine, threading.Lock())
            return self._engines[key]

    def close_all(self):
        with self._lock:
            for engine, _ in self._engines.values():
                engine.close()
            self._engines.clear()


def create_app() -> FastAPI:
    app = FastAPI(title="lamf", version=__version__,
                  description="Group-wise quantized Llama2-architecture "
                              "inference engine and accelerator simulator")
    cache = EngineCache()
    app.state.engine_cache = cache

    @app.exception_handler(LamfError)
    async def lamf_error_handler(request, exc: LamfError):
        from fastapi.responses import JSONResponse
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/generate", response_model=GenerateResponse)
    def generate(req: GenerateRequest):
        engine, lock = cache.get(
            req.model_path, req.tokenizer_path, prefetch=req.async_prefetch,
            workers=req.workers, transfer_delay_s=req.inject_transfer_us / 1e6,
            kernel=req.kernel)
        sampler_cfg = SamplerConfig(mode=req.sampler.mode, p=req.sampler.p,
                                    temperature=req.sampler.temperature,
                                    seed=req.sampler.seed)
        with lock:
            result = engine.generate(req.prompt, req.steps, sampler_cfg,
                                     benchmark=req.benchmark)
        return GenerateResponse(
            text=result.text,
            prompt_ids=result.prompt_ids,
            token_ids=result.token_ids,
            report=BenchReportModel(**result.report.__dict__),
        )

    @app.post("/gops", response_model=GopsBenchResponse)
    def gops(req: GopsBenchRequest):
        engine, lock = cache.get(req.model_path, None, kernel=req.kernel)
        with lock:
            out = engine.gops_bench(req.repeats)
        return GopsBenchResponse(**out)

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(req: SimulateRequest):
        hw = HwConfig(
            simd_lanes=req.simd_lanes, gs=req.gs, clock_hz=req.clock_hz,
            ddr_bytes_per_cycle=(math.inf if req.ddr_bytes_per_cycle is None
                                 else req.ddr_bytes_per_cycle),
            stream_depth=req.stream_depth, stage_latency=req.stage_latency)
        rep = simulate_gqmv(req.m, req.n, hw)
        return SimulateResponse(
            m=rep.m, n=rep.n, total_cycles=rep.total_cycles,
            busy_cycles=rep.busy_cycles, stall_cycles=rep.stall_cycles,
            fill_cycles=rep.fill_cycles, drain_cycles=rep.drain_cycles,
            steady_row_cycles=rep.steady_row_cycles, stage_busy=rep.stage_busy,
            ops=rep.ops, sustained_gops=rep.sustained_gops,
            peak_gops=rep.peak_gops, seconds=rep.seconds(hw.clock_hz))

    @app.post("/calibrate", response_model=CalibrateResponse)
    def calibrate(req: CalibrateRequest):
        hw = HwConfig(simd_lanes=req.simd_lanes, gs=req.gs, clock_hz=req.clock_hz)
        rate = calibrate_ddr(req.target_gops, req.m, req.n, hw)
        achieved = simulate_gqmv(
            req.m, req.n,
            HwConfig(simd_lanes=req.simd_lanes, gs=req.gs, clock_hz=req.clock_hz,
                     ddr_bytes_per_cycle=rate)).sustained_gops
        return CalibrateResponse(ddr_bytes_per_cycle=rate, achieved_gops=achieved)

    @app.post("/schedule", response_model=ScheduleResponse)
    def schedule(req: ScheduleRequest):
        timeline = plan_schedule(ScheduleCosts(req.compute, req.transfer), req.mode)
        return ScheduleResponse(
            mode=timeline.mode,
            transfer_start=timeline.transfer_start.tolist(),
            transfer_end=timeline.transfer_end.tolist(),
            compute_start=timeline.compute_start.tolist(),
            compute_end=timeline.compute_end.tolist(),
            total_time=timeline.total_time)

    @app.post("/quantize-stats", response_model=QuantizeStatsResponse)
    def quantize_stats(req: QuantizeStatsRequest):
        if req.values is not None:
            data = np.asarray(req.values, dtype=np.float32)
        elif req.random_normal is not None:
            rng = np.random.default_rng(req.seed)
            count = req.random_normal - req.random_normal % req.group_size
            if count < req.group_size:
                raise HTTPException(
                    status_code=400,
                    detail=f"random_normal must be >= group_size {req.group_size}")
            data = rng.standard_normal(count).astype(np.float32)
        else:
            raise HTTPException(status_code=400,
                                detail="provide either values or random_normal")
        q = quantize(data, QuantSpec(req.group_size))
        stats = error_stats(data, q)
        return QuantizeStatsResponse(
            count=int(data.size), groups=q.group_count,
            max=stats.max, min=stats.min, mean=stats.mean, std=stats.std,
            mean_rel_pct=stats.mean_rel_pct, std_rel_pct=stats.std_rel_pct)

    @app.post("/selftest", response_model=SelftestResponse)
    def selftest():
        return SelftestResponse(**run_selftest())

    return app
