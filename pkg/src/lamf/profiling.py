"""Inclusive wall-clock timers for per-component runtime attribution."""

from __future__ import annotations

import time
from contextlib import contextmanager

# categories reported as runtime fractions, in display order
FRACTION_CATEGORIES = ("matrix", "attention", "swiglu", "rope", "rmsnorm")


class Profiler:
    """Accumulates monotonic-clock seconds (and op counts) per category."""

    def __init__(self):
        self.seconds: dict[str, float] = {}
        self.ops: dict[str, int] = {}
        # per-layer compute time (excluding the wait for weights), for
        # validating the transfer/compute schedule model
        self.layer_seconds: dict[int, float] = {}
        self.layer_visits: dict[int, int] = {}

    @contextmanager
    def track(self, category: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[category] = self.seconds.get(category, 0.0) + time.perf_counter() - start

    def add_ops(self, category: str, count: int):
        self.ops[category] = self.ops.get(category, 0) + count

    def add_layer_seconds(self, layer: int, seconds: float):
        self.layer_seconds[layer] = self.layer_seconds.get(layer, 0.0) + seconds
        self.layer_visits[layer] = self.layer_visits.get(layer, 0) + 1

    def mean_layer_seconds(self, n_layers: int) -> list[float]:
        return [self.layer_seconds.get(l, 0.0) / max(self.layer_visits.get(l, 0), 1)
                for l in range(n_layers)]

    def fractions(self) -> dict[str, float]:
        """Share of each tracked component in their combined runtime."""
        total = sum(self.seconds.get(c, 0.0) for c in FRACTION_CATEGORIES)
        if total <= 0.0:
            return {c: 0.0 for c in FRACTION_CATEGORIES}
        return {c: self.seconds.get(c, 0.0) / total for c in FRACTION_CATEGORIES}

    def gops(self, category: str = "classifier") -> float:
        """Sustained giga-ops of one category (2 ops per multiply-accumulate)."""
        secs = self.seconds.get(category, 0.0)
        ops = self.ops.get(category, 0)
        if secs <= 0.0 or ops == 0:
            return 0.0
        return ops / secs / 1e9


class _NullProfiler(Profiler):
    """Profiler that skips the clock reads; used when no profiling is wanted."""

    @contextmanager
    def track(self, category: str):
        yield

    def add_ops(self, category: str, count: int):
        pass

    def add_layer_seconds(self, layer: int, seconds: float):
        pass


NULL_PROFILER = _NullProfiler()
