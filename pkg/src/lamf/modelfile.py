"""The LAMF quantized-model container format, plus a synthetic-model generator.

Layout (all little-endian, no padding inside sections):

    offset 0    header, 256 bytes:
                  magic "LAMF" | u32 version=1 | i32 dim, hidden_dim,
                  n_layers, n_heads, n_kv_heads, vocab_size, seq_len, gs |
                  u8 shared_classifier | zero pad
    then        FP32 sections: att_norm per layer, ffn_norm per layer,
                final norm (norm vectors are never quantized)
    then        quantized tensors, each [INT8 values row-major][FP32 scales]:
                  embeddings; per layer {wq, wk, wv, wo, w1, w2, w3};
                  classifier (absent when shared with the embeddings)

Writing quantizes FP32 weights on export; reading loads the persistent
tensors and computes a per-layer byte offset table so layers can be
streamed independently.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .errors import FormatError, ModelIOError, ShapeError
from .model import LayerWeights, PersistentWeights
from .quant import QuantSpec, QuantizedTensor, quantize

MAGIC = b"LAMF"
VERSION = 1
HEADER_SIZE = 256
_HEADER = struct.Struct("<4sI8iB")

# per-layer quantized matrices, in on-disk order, with (rows, cols) getters
LAYER_MATRICES = (
    ("wq", lambda c: (c.dim, c.dim)),
    ("wk", lambda c: (c.kv_dim, c.dim)),
    ("wv", lambda c: (c.kv_dim, c.dim)),
    ("wo", lambda c: (c.dim, c.dim)),
    ("w1", lambda c: (c.hidden_dim, c.dim)),
    ("w2", lambda c: (c.dim, c.hidden_dim)),
    ("w3", lambda c: (c.hidden_dim, c.dim)),
)


@dataclass
class Fp32Weights:
    """Unquantized weight set; matrices are stacked with the layer axis first."""

    token_embedding: np.ndarray  # (vocab_size, dim)
    att_norm: np.ndarray         # (n_layers, dim)
    ffn_norm: np.ndarray         # (n_layers, dim)
    final_norm: np.ndarray       # (dim,)
    wq: np.ndarray               # (n_layers, dim, dim)
    wk: np.ndarray               # (n_layers, kv_dim, dim)
    wv: np.ndarray               # (n_layers, kv_dim, dim)
    wo: np.ndarray               # (n_layers, dim, dim)
    w1: np.ndarray               # (n_layers, hidden_dim, dim)
    w2: np.ndarray               # (n_layers, dim, hidden_dim)
    w3: np.ndarray               # (n_layers, hidden_dim, dim)
    classifier: np.ndarray | None = None  # (vocab_size, dim); None when shared

    def validate(self, config: ModelConfig):
        expect = {
            "token_embedding": (config.vocab_size, config.dim),
            "att_norm": (config.n_layers, config.dim),
            "ffn_norm": (config.n_layers, config.dim),
            "final_norm": (config.dim,),
        }
        for name, getter in LAYER_MATRICES:
            expect[name] = (config.n_layers, *getter(config))
        if config.shared_classifier:
            if self.classifier is not None:
                raise ShapeError("shared_classifier set but a classifier tensor was provided")
        else:
            expect["classifier"] = (config.vocab_size, config.dim)
        for name, shape in expect.items():
            arr = getattr(self, name)
            if arr is None or tuple(arr.shape) != shape:
                got = None if arr is None else tuple(arr.shape)
                raise ShapeError(f"{name}: expected shape {shape}, got {got}")


def tensor_bytes(numel: int, gs: int) -> int:
    """Serialized size of one quantized tensor: INT8 values + FP32 group scales."""
    return numel + 4 * (numel // gs)


def per_layer_bytes(config: ModelConfig) -> int:
    total = 0
    for _, getter in LAYER_MATRICES:
        rows, cols = getter(config)
        total += tensor_bytes(rows * cols, config.gs)
    return total


def norm_section_bytes(config: ModelConfig) -> int:
    return 4 * (2 * config.n_layers * config.dim + config.dim)


def persistent_quantized_bytes(config: ModelConfig) -> int:
    emb = tensor_bytes(config.vocab_size * config.dim, config.gs)
    return emb if config.shared_classifier else 2 * emb


def persistent_bytes(config: ModelConfig) -> int:
    """Resident-forever bytes: embeddings + classifier + all norm vectors."""
    return persistent_quantized_bytes(config) + norm_section_bytes(config)


def layer_section_start(config: ModelConfig) -> int:
    emb = tensor_bytes(config.vocab_size * config.dim, config.gs)
    return HEADER_SIZE + norm_section_bytes(config) + emb


def expected_file_size(config: ModelConfig) -> int:
    return layer_section_start(config) + config.n_layers * per_layer_bytes(config) + (
        0 if config.shared_classifier
        else tensor_bytes(config.vocab_size * config.dim, config.gs))


def pack_header(config: ModelConfig) -> bytes:
    head = _HEADER.pack(
        MAGIC, VERSION, config.dim, config.hidden_dim, config.n_layers,
        config.n_heads, config.n_kv_heads, config.vocab_size, config.seq_len,
        config.gs, 1 if config.shared_classifier else 0,
    )
    return head + b"\x00" * (HEADER_SIZE - len(head))


def parse_header(raw: bytes) -> ModelConfig:
    if len(raw) < HEADER_SIZE:
        raise FormatError(f"header truncated: {len(raw)} bytes")
    magic, version, dim, hidden, layers, heads, kv_heads, vocab, seq, gs, shared = (
        _HEADER.unpack_from(raw))
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}")
    return ModelConfig(dim, hidden, layers, heads, kv_heads, vocab, seq, gs,
                       shared_classifier=bool(shared))


def quantize_weights(config: ModelConfig, weights: Fp32Weights):
    """Quantize a full FP32 weight set into runtime containers."""
    weights.validate(config)
    spec = QuantSpec(config.gs)
    embeddings = quantize(weights.token_embedding.reshape(-1), spec)
    classifier = embeddings if config.shared_classifier else quantize(
        weights.classifier.reshape(-1), spec)
    persistent = PersistentWeights(
        embeddings=embeddings,
        classifier=classifier,
        att_norms=np.ascontiguousarray(weights.att_norm, dtype=np.float32),
        ffn_norms=np.ascontiguousarray(weights.ffn_norm, dtype=np.float32),
        final_norm=np.ascontiguousarray(weights.final_norm, dtype=np.float32),
    )
    layers = []
    for l in range(config.n_layers):
        quantized = {name: quantize(getattr(weights, name)[l].reshape(-1), spec)
                     for name, _ in LAYER_MATRICES}
        layers.append(LayerWeights(
            **quantized,
            att_norm=persistent.att_norms[l],
            ffn_norm=persistent.ffn_norms[l],
        ))
    return persistent, layers


def _tensor_chunks(t: QuantizedTensor):
    yield t.values.tobytes()
    yield t.scales.astype("<f4").tobytes()


def write_model(config: ModelConfig, weights: Fp32Weights, path):
    """Quantize-on-export writer. Deterministic: same weights, same bytes."""
    persistent, layers = quantize_weights(config, weights)
    try:
        with open(path, "wb") as fh:
            fh.write(pack_header(config))
            fh.write(persistent.att_norms.astype("<f4").tobytes())
            fh.write(persistent.ffn_norms.astype("<f4").tobytes())
            fh.write(persistent.final_norm.astype("<f4").tobytes())
            for chunk in _tensor_chunks(persistent.embeddings):
                fh.write(chunk)
            for lw in layers:
                for name, _ in LAYER_MATRICES:
                    for chunk in _tensor_chunks(getattr(lw, name)):
                        fh.write(chunk)
            if not config.shared_classifier:
                for chunk in _tensor_chunks(persistent.classifier):
                    fh.write(chunk)
            size = fh.tell()
    except OSError as exc:
        raise ModelIOError(f"writing {path}: {exc}") from exc
    if size != expected_file_size(config):
        raise ModelIOError(
            f"wrote {size} bytes, expected {expected_file_size(config)}")


class ModelFile:
    """A parsed LAMF file: persistent tensors resident, layers read on demand."""

    def __init__(self, path):
        self.path = Path(path)
        try:
            with open(self.path, "rb") as fh:
                self.config = parse_header(fh.read(HEADER_SIZE))
                cfg = self.config
                self.file_size = self.path.stat().st_size
                if self.file_size != expected_file_size(cfg):
                    raise ModelIOError(
                        f"{self.path}: size {self.file_size}, "
                        f"expected {expected_file_size(cfg)}")
                att = self._read_f32(fh, cfg.n_layers * cfg.dim, "att_norm")
                ffn = self._read_f32(fh, cfg.n_layers * cfg.dim, "ffn_norm")
                final = self._read_f32(fh, cfg.dim, "final_norm")
                spec = QuantSpec(cfg.gs)
                embeddings = self._read_quantized(fh, cfg.vocab_size * cfg.dim, spec,
                                                  "embeddings")
                if cfg.shared_classifier:
                    classifier = embeddings
                else:
                    fh.seek(layer_section_start(cfg) + cfg.n_layers * per_layer_bytes(cfg))
                    classifier = self._read_quantized(fh, cfg.vocab_size * cfg.dim, spec,
                                                      "classifier")
        except OSError as exc:
            raise ModelIOError(f"reading {path}: {exc}") from exc
        self.persistent = PersistentWeights(
            embeddings=embeddings,
            classifier=classifier,
            att_norms=att.reshape(cfg.n_layers, cfg.dim),
            ffn_norms=ffn.reshape(cfg.n_layers, cfg.dim),
            final_norm=final,
        )
        base = layer_section_start(cfg)
        step = per_layer_bytes(cfg)
        self.layer_offsets = [base + l * step for l in range(cfg.n_layers)]

    def _read_exact(self, fh, count: int, what: str) -> bytes:
        data = fh.read(count)
        if len(data) != count:
            raise ModelIOError(
                f"{self.path}: truncated reading {what} at offset {fh.tell() - len(data)}")
        return data

    def _read_f32(self, fh, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self._read_exact(fh, 4 * count, what), dtype="<f4").astype(
            np.float32)

    def _read_quantized(self, fh, numel: int, spec: QuantSpec, what: str) -> QuantizedTensor:
        values = np.frombuffer(self._read_exact(fh, numel, what), dtype=np.int8)
        scales = self._read_f32(fh, numel // spec.group_size, f"{what} scales")
        return QuantizedTensor(values.copy(), scales, numel, spec)

    def load_layer(self, layer: int) -> LayerWeights:
        """Read one layer's quantized tensors (a fresh file handle per call,
        so the loader thread never races the main thread)."""
        cfg = self.config
        if not 0 <= layer < cfg.n_layers:
            raise ModelIOError(f"layer {layer} outside [0, {cfg.n_layers})")
        spec = QuantSpec(cfg.gs)
        tensors = {}
        try:
            with open(self.path, "rb") as fh:
                fh.seek(self.layer_offsets[layer])
                for name, getter in LAYER_MATRICES:
                    rows, cols = getter(cfg)
                    tensors[name] = self._read_quantized(
                        fh, rows * cols, spec, f"layer {layer} {name}")
        except OSError as exc:
            raise ModelIOError(f"reading layer {layer} of {self.path}: {exc}") from exc
        return LayerWeights(
            **tensors,
            att_norm=self.persistent.att_norms[layer],
            ffn_norm=self.persistent.ffn_norms[layer],
        )

    def load_all_layers(self) -> list[LayerWeights]:
        return [self.load_layer(l) for l in range(self.config.n_layers)]


def read_model(path) -> ModelFile:
    return ModelFile(path)


def gen_synthetic(config: ModelConfig, seed: int) -> Fp32Weights:
    """Seeded Gaussian weight set: matrices scaled by 1/sqrt(fan-in), norm
    gains near 1 so activations stay well-conditioned through the stack."""
    rng = np.random.default_rng(seed)

    def mat(*shape):
        fan_in = shape[-1]
        return (rng.standard_normal(shape, dtype=np.float32)
                / np.float32(np.sqrt(fan_in)))

    def norm(*shape):
        return 1.0 + 0.05 * rng.standard_normal(shape, dtype=np.float32)

    cfg = config
    return Fp32Weights(
        token_embedding=mat(cfg.vocab_size, cfg.dim),
        att_norm=norm(cfg.n_layers, cfg.dim),
        ffn_norm=norm(cfg.n_layers, cfg.dim),
        final_norm=norm(cfg.dim),
        wq=mat(cfg.n_layers, cfg.dim, cfg.dim),
        wk=mat(cfg.n_layers, cfg.kv_dim, cfg.dim),
        wv=mat(cfg.n_layers, cfg.kv_dim, cfg.dim),
        wo=mat(cfg.n_layers, cfg.dim, cfg.dim),
        w1=mat(cfg.n_layers, cfg.hidden_dim, cfg.dim),
        w2=mat(cfg.n_layers, cfg.dim, cfg.hidden_dim),
        w3=mat(cfg.n_layers, cfg.hidden_dim, cfg.dim),
        classifier=None if cfg.shared_classifier else mat(cfg.vocab_size, cfg.dim),
    )
