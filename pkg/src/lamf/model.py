"""Llama2-architecture forward pass over group-quantized weights.

One decode step per call: embedding lookup, then for each layer
RMSNorm -> fused QKV GQMV -> RoPE -> grouped-query attention over the KV
cache -> output projection -> residual -> RMSNorm -> fused W1/W3 GQMV ->
SwiGLU -> W2 GQMV -> residual, then a final RMSNorm and the classifier GQMV.

Attention, norms, and the residual stream stay in FP32; only matrix-vector
products run on INT8 values with per-group scales. Activations are
re-quantized immediately before every kernel call.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .config import ModelConfig
from .errors import PositionError, ShapeError, StateError, TokenError
from .gqmv import concat_rows, gqmv_reference, gqmv_rows_parallel, gqmv_staged, make_problem
from .profiling import NULL_PROFILER, Profiler
from .quant import QuantSpec, QuantizedTensor, dequantize_rows, quantize

RMSNORM_EPS = 1e-5
ROPE_THETA = 10000.0

KERNELS = {"reference": gqmv_reference, "staged": gqmv_staged}


@dataclass
class LayerWeights:
    """Quantized matrices of one transformer layer plus its FP32 norm gains."""

    wq: QuantizedTensor  # (dim, dim)
    wk: QuantizedTensor  # (kv_dim, dim)
    wv: QuantizedTensor  # (kv_dim, dim)
    wo: QuantizedTensor  # (dim, dim)
    w1: QuantizedTensor  # (hidden_dim, dim)
    w2: QuantizedTensor  # (dim, hidden_dim)
    w3: QuantizedTensor  # (hidden_dim, dim)
    att_norm: np.ndarray
    ffn_norm: np.ndarray

    def quantized_byte_size(self) -> int:
        return sum(t.byte_size() for t in (self.wq, self.wk, self.wv, self.wo,
                                           self.w1, self.w2, self.w3))


@dataclass
class PersistentWeights:
    """Tensors that stay resident for the whole run (never streamed)."""

    embeddings: QuantizedTensor  # (vocab_size, dim) row-major
    classifier: QuantizedTensor  # same object as embeddings when shared
    att_norms: np.ndarray        # (n_layers, dim)
    ffn_norms: np.ndarray        # (n_layers, dim)
    final_norm: np.ndarray       # (dim,)

    def byte_size(self) -> int:
        """Quantized embedding/classifier bytes plus FP32 norm vectors."""
        total = self.embeddings.byte_size()
        if self.classifier is not self.embeddings:
            total += self.classifier.byte_size()
        total += 4 * (self.att_norms.size + self.ffn_norms.size + self.final_norm.size)
        return total


class KVCache:
    """Per-layer cached post-RoPE keys and FP32 values, indexed by position.

    Writes must advance one position at a time per layer; reads may only
    touch positions already written.
    """

    def __init__(self, config: ModelConfig):
        shape = (config.n_layers, config.seq_len, config.kv_dim)
        self.keys = np.zeros(shape, dtype=np.float32)
        self.values = np.zeros(shape, dtype=np.float32)
        self.filled = np.full(config.n_layers, -1, dtype=np.int64)

    def reset(self):
        self.filled[:] = -1

    def store(self, layer: int, pos: int, k: np.ndarray, v: np.ndarray):
        if pos != self.filled[layer] + 1:
            raise StateError(
                f"layer {layer}: cache write at pos {pos}, expected {self.filled[layer] + 1}")
        self.keys[layer, pos] = k
        self.values[layer, pos] = v
        self.filled[layer] = pos

    def view(self, layer: int, pos: int):
        """Keys/values for positions 0..pos of one layer (read-only slices)."""
        if self.filled[layer] < pos:
            raise StateError(
                f"layer {layer}: cache filled to {self.filled[layer]}, need pos {pos}")
        return self.keys[layer, :pos + 1], self.values[layer, :pos + 1]


class RunState:
    """Activation buffers of one in-flight decode stream."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.x = np.zeros(config.dim, dtype=np.float32)
        self.xq: Optional[QuantizedTensor] = None  # regenerated before every kernel call
        self.q = np.zeros(config.dim, dtype=np.float32)
        self.att_buffer = np.zeros(config.dim, dtype=np.float32)
        self.ffn_buffer = np.zeros(2 * config.hidden_dim, dtype=np.float32)
        self.logits = np.zeros(config.vocab_size, dtype=np.float32)

    def reset(self):
        self.xq = None
        for buf in (self.x, self.q, self.att_buffer, self.ffn_buffer, self.logits):
            buf[:] = 0.0


def rmsnorm(x: np.ndarray, weight: np.ndarray, eps: float = RMSNORM_EPS) -> np.ndarray:
    """y[i] = weight[i] * x[i] / sqrt(mean(x^2) + eps), in FP32."""
    x = np.asarray(x, dtype=np.float32)
    ss = np.mean(x * x) + np.float32(eps)
    return np.asarray(weight, dtype=np.float32) * (x / np.sqrt(ss))


def _rotate(vec: np.ndarray, pos: int, head_dim: int):
    """Rotate consecutive pairs within each head by pos * theta^(-2i/head_dim)."""
    freqs = ROPE_THETA ** (-np.arange(0, head_dim, 2, dtype=np.float64) / head_dim)
    angles = pos * freqs
    cos = np.cos(angles).astype(np.float32)
    sin = np.sin(angles).astype(np.float32)
    pairs = vec.reshape(-1, head_dim // 2, 2)
    a = pairs[:, :, 0].copy()
    b = pairs[:, :, 1].copy()
    pairs[:, :, 0] = a * cos - b * sin
    pairs[:, :, 1] = a * sin + b * cos


def rope_apply(q: np.ndarray, k: np.ndarray, pos: int, config: ModelConfig):
    """Apply rotary position encoding in place to q (all query heads) and k
    (all key/value heads) at the given position."""
    if not 0 <= pos < config.seq_len:
        raise PositionError(f"pos {pos} outside [0, {config.seq_len})")
    if q.size != config.dim or k.size != config.kv_dim:
        raise ShapeError("rope expects q of length dim and k of length kv_dim")
    _rotate(q, pos, config.head_dim)
    _rotate(k, pos, config.head_dim)


def _softmax32(scores: np.ndarray) -> np.ndarray:
    e = np.exp(scores - scores.max())
    return e / e.sum()


def _attend_head(q_head: np.ndarray, keys: np.ndarray, values: np.ndarray,
                 inv_sqrt_hd: np.float32) -> np.ndarray:
    scores = np.einsum("td,d->t", keys, q_head) * inv_sqrt_hd
    probs = _softmax32(scores)
    return np.einsum("t,td->d", probs, values)


def attention(q: np.ndarray, cache: KVCache, layer: int, pos: int,
              config: ModelConfig, pool=None) -> np.ndarray:
    """Grouped-query attention over cache positions 0..pos.

    Each query head attends to its kv head (h // heads_per_kv). Heads write
    disjoint output slices, so distributing them over `pool` is bit-identical
    to the sequential loop.
    """
    keys, values = cache.view(layer, pos)
    hd = config.head_dim
    inv_sqrt_hd = np.float32(1.0) / np.sqrt(np.float32(hd))
    out = np.empty(config.dim, dtype=np.float32)

    def run(h: int):
        kv = h // config.heads_per_kv
        out[h * hd:(h + 1) * hd] = _attend_head(
            q[h * hd:(h + 1) * hd],
            keys[:, kv * hd:(kv + 1) * hd],
            values[:, kv * hd:(kv + 1) * hd],
            inv_sqrt_hd,
        )

    if pool is not None and pool._max_workers > 1:
        list(pool.map(run, range(config.n_heads)))
    else:
        for h in range(config.n_heads):
            run(h)
    return out


def swiglu(h1: np.ndarray, h3: np.ndarray) -> np.ndarray:
    """silu(h1) * h3: the W1 branch gates the W3 branch."""
    h1 = np.asarray(h1, dtype=np.float32)
    h3 = np.asarray(h3, dtype=np.float32)
    if h1.shape != h3.shape:
        raise ShapeError(f"swiglu branches differ: {h1.shape} vs {h3.shape}")
    with np.errstate(over="ignore"):  # exp(-h1) overflow saturates silu to 0, as intended
        return h1 / (1.0 + np.exp(-h1)) * h3


class Transformer:
    """Binds a config, persistent weights, and a per-layer weight source."""

    def __init__(self, config: ModelConfig, persistent: PersistentWeights,
                 layer_source: Callable[[int], LayerWeights], kernel: str = "reference"):
        if kernel not in KERNELS:
            raise ShapeError(f"unknown kernel {kernel!r}")
        self.config = config
        self.persistent = persistent
        self.layer_source = layer_source
        self._kernel = KERNELS[kernel]
        self._spec = QuantSpec(config.gs)

    def _matvec(self, problem, pool) -> np.ndarray:
        if pool is not None and pool._max_workers > 1:
            return gqmv_rows_parallel(problem, self._kernel, pool)
        return self._kernel(problem)

    def forward(self, token: int, pos: int, state: RunState, cache: KVCache,
                pool=None, profiler: Optional[Profiler] = None) -> np.ndarray:
        """Run one decode step; returns (and stores in state) the logits."""
        cfg = self.config
        prof = profiler if profiler is not None else NULL_PROFILER
        if not 0 <= token < cfg.vocab_size:
            raise TokenError(f"token {token} outside [0, {cfg.vocab_size})")
        if not 0 <= pos < cfg.seq_len:
            raise PositionError(f"pos {pos} outside [0, {cfg.seq_len})")

        dim, kv_dim, hidden = cfg.dim, cfg.kv_dim, cfg.hidden_dim
        state.x[:] = dequantize_rows(self.persistent.embeddings, token, 1, dim)[0]

        for layer in range(cfg.n_layers):
            lw = self.layer_source(layer)  # may block on the weight stream
            layer_t0 = time.perf_counter()

            with prof.track("rmsnorm"):
                xb = rmsnorm(state.x, lw.att_norm)
                xq = state.xq = quantize(xb, self._spec)
            with prof.track("matrix"):
                qkv = concat_rows([
                    make_problem(lw.wq, xq, dim),
                    make_problem(lw.wk, xq, kv_dim),
                    make_problem(lw.wv, xq, kv_dim),
                ])
                fused = self._matvec(qkv, pool)
            state.q[:] = fused[:dim]
            k = fused[dim:dim + kv_dim]
            v = fused[dim + kv_dim:]

            with prof.track("rope"):
                rope_apply(state.q, k, pos, cfg)
            cache.store(layer, pos, k, v)

            with prof.track("attention"):
                state.att_buffer[:] = attention(state.q, cache, layer, pos, cfg, pool)

            with prof.track("matrix"):
                att_q = quantize(state.att_buffer, self._spec)
                att_out = self._matvec(make_problem(lw.wo, att_q, dim), pool)
            state.x += att_out

            with prof.track("rmsnorm"):
                xb = rmsnorm(state.x, lw.ffn_norm)
                xq = state.xq = quantize(xb, self._spec)
            with prof.track("matrix"):
                w13 = concat_rows([
                    make_problem(lw.w1, xq, hidden),
                    make_problem(lw.w3, xq, hidden),
                ])
                state.ffn_buffer[:] = self._matvec(w13, pool)
            with prof.track("swiglu"):
                gated = swiglu(state.ffn_buffer[:hidden], state.ffn_buffer[hidden:])
                hq = quantize(gated, self._spec)
            with prof.track("matrix"):
                # the one kernel whose column size is hidden_dim, not dim
                ffn_out = self._matvec(make_problem(lw.w2, hq, dim), pool)
            state.x += ffn_out
            prof.add_layer_seconds(layer, time.perf_counter() - layer_t0)

        with prof.track("rmsnorm"):
            xb = rmsnorm(state.x, self.persistent.final_norm)
            xq = state.xq = quantize(xb, self._spec)
        with prof.track("matrix"), prof.track("classifier"):
            state.logits[:] = self._matvec(
                make_problem(self.persistent.classifier, xq, cfg.vocab_size), pool)
        prof.add_ops("classifier", 2 * cfg.vocab_size * dim)
        return state.logits
