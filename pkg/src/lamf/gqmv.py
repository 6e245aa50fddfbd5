"""Group-wise quantized matrix-vector multiplication (GQMV).

Two kernels compute out = W @ x from INT8 values and per-group FP32 scales:

* ``gqmv_reference`` follows the flat row/group/lane loop order: integer
  group sums, then a sequential FP32 accumulation over groups per row.
* ``gqmv_staged`` mirrors the numerics of the pipelined accelerator:
  INT8 widened to INT16, lane-wise INT16 products, a balanced binary adder
  tree whose first level widens to INT32, then an FP32 dot product of the
  group sums with the combined weight/activation scales.

The integer group sums of both kernels are bit-identical; the final FP32
outputs differ only by summation order (held to 1e-6 relative in tests).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ShapeError, UnsupportedConfigError
from .quant import QuantizedTensor


@dataclass
class GqmvProblem:
    """One matrix-vector instance: flat row-major weights, quantized input."""

    wq: np.ndarray  # int8, length m*n
    ws: np.ndarray  # float32, length m*n/gs, row-major group scales
    xq: np.ndarray  # int8, length n
    xs: np.ndarray  # float32, length n/gs
    m: int
    n: int
    gs: int

    def __post_init__(self):
        self.wq = np.ascontiguousarray(self.wq, dtype=np.int8)
        self.ws = np.ascontiguousarray(self.ws, dtype=np.float32)
        self.xq = np.ascontiguousarray(self.xq, dtype=np.int8)
        self.xs = np.ascontiguousarray(self.xs, dtype=np.float32)
        if self.m < 1 or self.n < 1:
            raise ShapeError(f"m and n must be positive, got m={self.m} n={self.n}")
        if self.n % self.gs != 0:
            raise ShapeError(f"n={self.n} not divisible by group size {self.gs}")
        if self.wq.size != self.m * self.n:
            raise ShapeError(f"wq has {self.wq.size} elements, expected {self.m * self.n}")
        if self.ws.size != self.m * self.n // self.gs:
            raise ShapeError(f"ws has {self.ws.size} scales, expected {self.m * self.n // self.gs}")
        if self.xq.size != self.n:
            raise ShapeError(f"xq has {self.xq.size} elements, expected {self.n}")
        if self.xs.size != self.n // self.gs:
            raise ShapeError(f"xs has {self.xs.size} scales, expected {self.n // self.gs}")

    @property
    def groups_per_row(self) -> int:
        return self.n // self.gs


def make_problem(w: QuantizedTensor, x: QuantizedTensor, m: int) -> GqmvProblem:
    """Build a GqmvProblem from a quantized weight matrix and input vector."""
    n = x.numel
    if w.spec.group_size != x.spec.group_size:
        raise ShapeError(
            f"weight group size {w.spec.group_size} != input group size {x.spec.group_size}"
        )
    if w.numel != m * n:
        raise ShapeError(f"weight has {w.numel} elements, expected {m}x{n}")
    return GqmvProblem(w.values, w.scales, x.values, x.scales, m, n, w.spec.group_size)


def reference_group_sums(p: GqmvProblem) -> np.ndarray:
    """INT32 per-group dot products, shape (m, n/gs).

    INT8*INT8 products never exceed INT16; summing up to gs of them is
    accumulated in INT32 (|sum| <= gs * 128 * 128 < 2**31 for gs <= 2**15).
    """
    w = p.wq.reshape(p.m, p.groups_per_row, p.gs).astype(np.int32)
    x = p.xq.reshape(p.groups_per_row, p.gs).astype(np.int32)
    return np.einsum("mgk,gk->mg", w, x)


def gqmv_reference(p: GqmvProblem) -> np.ndarray:
    """Row-by-row GQMV: FP32 accumulation is sequential in group order."""
    gsums = reference_group_sums(p)
    ws = p.ws.reshape(p.m, p.groups_per_row)
    out = np.zeros(p.m, dtype=np.float32)
    for g in range(p.groups_per_row):
        out += gsums[:, g].astype(np.float32) * ws[:, g] * p.xs[g]
    return out


def staged_group_sums(p: GqmvProblem) -> np.ndarray:
    """INT32 group sums via the accelerator's widening adder tree.

    Lane products are taken in INT16 (max |product| = 128*128 = 16384, in
    range); the first adder level widens to INT32 because two such products
    can overflow INT16. Integer addition is associative, so the tree result
    is bit-identical to the sequential reference.
    """
    if p.gs & (p.gs - 1) != 0:
        raise UnsupportedConfigError(f"adder tree needs a power-of-two group size, got {p.gs}")
    w16 = p.wq.reshape(p.m, p.groups_per_row, p.gs).astype(np.int16)
    x16 = p.xq.reshape(p.groups_per_row, p.gs).astype(np.int16)
    prod = w16 * x16
    if p.gs == 1:
        return prod[..., 0].astype(np.int32)
    level = prod[..., 0::2].astype(np.int32) + prod[..., 1::2]
    while level.shape[-1] > 1:
        level = level[..., 0::2] + level[..., 1::2]
    return level[..., 0]


def gqmv_staged(p: GqmvProblem) -> np.ndarray:
    """Pipeline-shaped GQMV: adder-tree group sums, then a per-row FP32 dot
    product with float_scale = ws * xs."""
    gsums = staged_group_sums(p).astype(np.float32)
    float_scale = p.ws.reshape(p.m, p.groups_per_row) * p.xs[None, :]
    return np.einsum("mg,mg->m", gsums, float_scale)


def concat_rows(problems: Sequence[GqmvProblem]) -> GqmvProblem:
    """Stack problems sharing the same input vector into one taller problem.

    The output of the combined problem, split at the part boundaries, equals
    the per-part outputs bit-exactly (rows are independent).
    """
    if not problems:
        raise ShapeError("need at least one problem to concatenate")
    first = problems[0]
    for p in problems[1:]:
        if p.n != first.n or p.gs != first.gs:
            raise ShapeError("concatenated problems must share n and group size")
        if p.xq is not first.xq and not np.array_equal(p.xq, first.xq):
            raise ShapeError("concatenated problems must share the input vector")
        if p.xs is not first.xs and not np.array_equal(p.xs, first.xs):
            raise ShapeError("concatenated problems must share the input scales")
    if len(problems) == 1:
        return first
    return GqmvProblem(
        np.concatenate([p.wq for p in problems]),
        np.concatenate([p.ws for p in problems]),
        first.xq,
        first.xs,
        sum(p.m for p in problems),
        first.n,
        first.gs,
    )


def gqmv_rows_parallel(p: GqmvProblem, kernel, pool) -> np.ndarray:
    """Run a GQMV kernel with rows partitioned across an executor.

    Each row of the output depends only on that row of (wq, ws), so any
    partition yields bit-identical results to a single-threaded run.
    """
    workers = pool._max_workers
    if workers <= 1 or p.m < 2 * workers:
        return kernel(p)
    bounds = np.linspace(0, p.m, workers + 1, dtype=int)
    gpr = p.groups_per_row

    def run(lo: int, hi: int) -> np.ndarray:
        part = GqmvProblem(
            p.wq[lo * p.n:hi * p.n], p.ws[lo * gpr:hi * gpr],
            p.xq, p.xs, hi - lo, p.n, p.gs,
        )
        return kernel(part)

    futures = [pool.submit(run, bounds[i], bounds[i + 1]) for i in range(workers)]
    return np.concatenate([f.result() for f in futures])
