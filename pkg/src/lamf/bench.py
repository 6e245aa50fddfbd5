"""Benchmark report assembly."""

from __future__ import annotations

from dataclasses import dataclass, field

from .profiling import FRACTION_CATEGORIES, Profiler


@dataclass
class BenchReport:
    """Throughput and runtime attribution of one decode run.

    `fractions` covers the tracked compute components (matrix computation,
    multi-head attention, swiglu, rope, rmsnorm) and sums to 1; `gops`
    averages the classifier matrix-vector runtime, counting two ops per
    multiply-accumulate.
    """

    tokens: int
    wall_seconds: float
    tok_per_s: float
    gops: float
    fractions: dict[str, float] = field(default_factory=dict)
    workers: int = 1

    @classmethod
    def from_profiler(cls, profiler: Profiler, tokens: int, wall_seconds: float,
                      workers: int = 1) -> "BenchReport":
        tok_per_s = tokens / wall_seconds if wall_seconds > 0 else 0.0
        return cls(
            tokens=tokens,
            wall_seconds=wall_seconds,
            tok_per_s=tok_per_s,
            gops=profiler.gops("classifier"),
            fractions=profiler.fractions(),
            workers=workers,
        )


FRACTION_KEYS = FRACTION_CATEGORIES
