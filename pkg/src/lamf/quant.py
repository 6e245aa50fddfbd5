"""Group-wise symmetric INT8 quantization.

Values are quantized in consecutive groups of `group_size` elements. Each
group gets one FP32 scale S = 2*max(|r|)/255 so the full [-128, 127] range
is used; quantized values are round(r/S) with round-half-away-from-zero,
clamped to the INT8 range. Dequantization is values * scale per group.

Scale arithmetic is done in FP32 throughout; test oracles recompute in FP64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidValueError, ShapeError

INT8_MIN = -128
INT8_MAX = 127


@dataclass(frozen=True)
class QuantSpec:
    """Quantization parameters: currently just the group size."""

    group_size: int

    def __post_init__(self):
        if int(self.group_size) < 1:
            raise InvalidValueError(f"group_size must be >= 1, got {self.group_size}")


@dataclass
class QuantizedTensor:
    """Flat row-major INT8 values plus one FP32 scale per group."""

    values: np.ndarray
    scales: np.ndarray
    numel: int
    spec: QuantSpec

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.int8)
        self.scales = np.ascontiguousarray(self.scales, dtype=np.float32)
        if self.values.ndim != 1 or self.scales.ndim != 1:
            raise ShapeError("values and scales must be one-dimensional")
        if self.values.size != self.numel:
            raise ShapeError(f"values has {self.values.size} elements, numel says {self.numel}")
        if self.numel % self.spec.group_size != 0:
            raise ShapeError(
                f"numel {self.numel} not divisible by group_size {self.spec.group_size}"
            )
        if self.scales.size != self.group_count:
            raise ShapeError(
                f"expected {self.group_count} scales, got {self.scales.size}"
            )
        if not np.isfinite(self.scales).all() or (self.scales < 0).any():
            raise InvalidValueError("scales must be finite and non-negative")

    @property
    def group_count(self) -> int:
        return self.numel // self.spec.group_size

    def byte_size(self) -> int:
        """Serialized size: one byte per value plus four per scale."""
        return self.numel + 4 * self.group_count


@dataclass(frozen=True)
class ErrorStats:
    """Absolute and relative quantization-error statistics."""

    max: float
    min: float
    mean: float
    std: float
    mean_rel_pct: float
    std_rel_pct: float


def _as_flat_f32(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float32).reshape(-1)
    if not np.isfinite(arr).all():
        raise InvalidValueError(f"{what} contains non-finite values")
    return arr


def quantize(real_values, spec: QuantSpec) -> QuantizedTensor:
    """Quantize an FP32 array group-wise to INT8 with per-group scales.

    All-zero groups get scale 1.0 (and all-zero values), so dequantization
    stays exact and no division by zero occurs.
    """
    x = _as_flat_f32(real_values, "input")
    gs = spec.group_size
    if x.size == 0 or x.size % gs != 0:
        raise ShapeError(f"length {x.size} not a positive multiple of group_size {gs}")
    groups = x.reshape(-1, gs)
    max_abs = np.max(np.abs(groups), axis=1)
    # dividing before doubling keeps 2*max/255 in FP32 range at float32 max
    scales = (max_abs / 255.0) * 2.0
    scales[scales == 0.0] = 1.0  # all-zero groups, or denormal underflow
    ratio = groups / scales[:, None]
    # round-half-away-from-zero, then clamp: 127.5 rounds to 128 and clamps to 127
    rounded = np.trunc(ratio + np.copysign(np.float32(0.5), ratio))
    q = np.clip(rounded, INT8_MIN, INT8_MAX).astype(np.int8)
    return QuantizedTensor(q.reshape(-1), scales, x.size, spec)


def dequantize(q: QuantizedTensor) -> np.ndarray:
    """Recover FP32 values: element i of group g maps to values[i] * scales[g]."""
    gs = q.spec.group_size
    groups = q.values.reshape(-1, gs).astype(np.float32)
    return (groups * q.scales[:, None]).reshape(-1)


def dequantize_rows(q: QuantizedTensor, start_row: int, n_rows: int, row_len: int) -> np.ndarray:
    """Dequantize a contiguous row slice of a row-major quantized matrix.

    Rows must be whole multiples of the group size (true for every matrix in
    this package), so scales never straddle the slice boundary.
    """
    gs = q.spec.group_size
    if row_len % gs != 0:
        raise ShapeError(f"row length {row_len} not divisible by group_size {gs}")
    v0 = start_row * row_len
    g0 = v0 // gs
    n_groups = n_rows * row_len // gs
    vals = q.values[v0:v0 + n_rows * row_len].reshape(-1, gs).astype(np.float32)
    return (vals * q.scales[g0:g0 + n_groups, None]).reshape(n_rows, row_len)


def error_stats(original, q: QuantizedTensor) -> ErrorStats:
    """Statistics of |dequantize(q) - original|.

    Relative percentages exclude elements where the original value is 0
    (0/0 is undefined); if every element is zero the relative stats are 0.
    """
    r = np.asarray(original, dtype=np.float32).reshape(-1)
    if r.size != q.numel:
        raise ShapeError(f"original has {r.size} elements, tensor has {q.numel}")
    err = np.abs(dequantize(q).astype(np.float64) - r.astype(np.float64))
    nonzero = r != 0.0
    if nonzero.any():
        rel = err[nonzero] / np.abs(r[nonzero].astype(np.float64)) * 100.0
        mean_rel, std_rel = float(rel.mean()), float(rel.std())
    else:
        mean_rel = std_rel = 0.0
    return ErrorStats(
        max=float(err.max()),
        min=float(err.min()),
        mean=float(err.mean()),
        std=float(err.std()),
        mean_rel_pct=mean_rel,
        std_rel_pct=std_rel,
    )
