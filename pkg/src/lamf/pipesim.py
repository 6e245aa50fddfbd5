"""Stage-level timing model of the pipelined GQMV accelerator.

Three stages (pre-processing, dot-product, accumulate) run as a dataflow
pipeline, so the steady-state cost of one matrix row is the maximum of the
per-stage row costs rather than their sum:

* dot-product consumes `simd_lanes` INT8 weights per cycle at initiation
  interval 1, so a row of n columns takes n/lanes cycles;
* accumulate folds one group sum per cycle: n/gs cycles per row;
* the weight stream must deliver n value bytes through the lane port
  (n/lanes cycles at best) while DDR must supply the row's full traffic,
  n value bytes plus 4*n/gs scale bytes, at `ddr_bytes_per_cycle`; when DDR
  lags, the difference shows up as stall cycles.

The input vector and its scales are prefetched once before the row loop.
Fill adds one adder-tree traversal (log2 gs) plus fixed per-stage
latencies; numerics live in the gqmv module, this model only counts cycles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InfeasibleError, InvalidValueError, ShapeError

STAGES = ("preprocess", "dot_product", "accumulate")


@dataclass(frozen=True)
class HwConfig:
    simd_lanes: int = 16
    gs: int = 256
    clock_hz: float = 205e6
    ddr_bytes_per_cycle: float = math.inf  # effective sustained supply rate
    stream_depth: int = 16                 # FIFO capacity between stages
    stage_latency: int = 4                 # fixed pipeline latency per stage

    def __post_init__(self):
        if self.simd_lanes < 1 or self.gs < 1 or self.stream_depth < 1:
            raise InvalidValueError("simd_lanes, gs, and stream_depth must be positive")
        if self.gs & (self.gs - 1) != 0:
            raise InvalidValueError(f"gs must be a power of two, got {self.gs}")
        if self.gs % self.simd_lanes != 0:
            raise InvalidValueError(
                f"simd_lanes {self.simd_lanes} must divide gs {self.gs}")
        if self.clock_hz <= 0 or self.ddr_bytes_per_cycle <= 0 or self.stage_latency < 0:
            raise InvalidValueError("clock, DDR rate must be positive; latency non-negative")


@dataclass
class SimReport:
    m: int
    n: int
    total_cycles: int
    busy_cycles: int
    stall_cycles: int
    fill_cycles: int
    drain_cycles: int
    steady_row_cycles: int
    stage_busy: dict = field(default_factory=dict)
    ops: int = 0
    sustained_gops: float = 0.0
    peak_gops: float = 0.0

    def seconds(self, clock_hz: float) -> float:
        return self.total_cycles / clock_hz


def peak_gops(hw: HwConfig) -> float:
    """Roofline ceiling: one multiply and one add per lane per cycle."""
    return 2.0 * hw.simd_lanes * hw.clock_hz / 1e9


def simulate_gqmv(m: int, n: int, hw: HwConfig) -> SimReport:
    """Cycle/throughput estimate for an (m, n) GQMV at group size hw.gs."""
    if m < 1 or n < 1:
        raise ShapeError(f"m and n must be positive, got m={m} n={n}")
    if n % hw.gs != 0:
        raise ShapeError(f"n={n} not divisible by group size {hw.gs}")
    groups = n // hw.gs
    tree_depth = int(math.log2(hw.gs))
    row_bytes = n + 4 * groups            # weight values + weight scales
    x_bytes = n + 4 * groups              # prefetched once

    supply_rate = min(float(hw.simd_lanes), hw.ddr_bytes_per_cycle)
    prefetch_cycles = math.ceil(x_bytes / supply_rate)

    dot_row = n // hw.simd_lanes          # II=1 per lane vector
    acc_row = groups                      # one group sum folded per cycle
    ideal_row = max(dot_row, acc_row)
    ddr_row = 0 if math.isinf(hw.ddr_bytes_per_cycle) else math.ceil(
        row_bytes / hw.ddr_bytes_per_cycle)
    steady_row = max(ideal_row, ddr_row)

    busy = m * ideal_row
    stalls = m * (steady_row - ideal_row)
    fill = prefetch_cycles + tree_depth + 3 * hw.stage_latency
    drain = tree_depth + acc_row + hw.stage_latency
    total = fill + m * steady_row + drain

    ops = 2 * m * n
    sustained = ops / (total / hw.clock_hz) / 1e9
    return SimReport(
        m=m, n=n,
        total_cycles=total,
        busy_cycles=busy,
        stall_cycles=stalls,
        fill_cycles=fill,
        drain_cycles=drain,
        steady_row_cycles=steady_row,
        stage_busy={
            "preprocess": m * dot_row,     # weight values through the lane port
            "dot_product": m * dot_row,
            "accumulate": m * acc_row,
        },
        ops=ops,
        sustained_gops=sustained,
        peak_gops=peak_gops(hw),
    )


def _with_rate(hw: HwConfig, rate: float) -> HwConfig:
    return HwConfig(hw.simd_lanes, hw.gs, hw.clock_hz, rate,
                    hw.stream_depth, hw.stage_latency)


def calibrate_ddr(target_gops: float, m: int, n: int, hw: HwConfig,
                  tolerance: float = 0.01) -> float:
    """Invert the stall model: the slowest effective DDR rate (bytes/cycle)
    at which the simulated sustained GOPS lands within `tolerance` of the
    target. Raises InfeasibleError when no rate can get that close."""
    if target_gops <= 0:
        raise InvalidValueError(f"target must be positive, got {target_gops}")
    peak = peak_gops(hw)
    if target_gops > peak:
        raise InfeasibleError(f"target {target_gops} GOPS exceeds peak {peak}")
    groups = n // hw.gs
    row_bytes = float(n + 4 * groups)
    ceiling = simulate_gqmv(m, n, _with_rate(hw, math.inf)).sustained_gops
    floor_edge = (1.0 - tolerance) * target_gops
    if floor_edge > ceiling:
        raise InfeasibleError(
            f"target {target_gops} GOPS unreachable: stall-free model tops out "
            f"at {ceiling:.4f}")

    def sustained(rate: float) -> float:
        return simulate_gqmv(m, n, _with_rate(hw, rate)).sustained_gops

    lo, hi = 1e-9, row_bytes  # at hi, one cycle supplies a whole row: no stalls
    if sustained(lo) >= floor_edge:
        hi = lo
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if sustained(mid) >= floor_edge:
            hi = mid
        else:
            lo = mid
    achieved = sustained(hi)
    if abs(achieved - target_gops) > tolerance * target_gops:
        raise InfeasibleError(
            f"closest reachable rate {hi:.4f} B/cycle gives {achieved:.4f} GOPS, "
            f"outside {tolerance:.0%} of target {target_gops}")
    return hi
