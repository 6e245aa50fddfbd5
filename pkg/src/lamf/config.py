"""Model configuration shared by the forward pass, file format, and streamer."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidValueError


@dataclass(frozen=True)
class ModelConfig:
    dim: int
    hidden_dim: int
    n_layers: int
    n_heads: int
    n_kv_heads: int
    vocab_size: int
    seq_len: int
    gs: int
    shared_classifier: bool = False

    def __post_init__(self):
        positive = {
            "dim": self.dim, "hidden_dim": self.hidden_dim, "n_layers": self.n_layers,
            "n_heads": self.n_heads, "n_kv_heads": self.n_kv_heads,
            "vocab_size": self.vocab_size, "seq_len": self.seq_len, "gs": self.gs,
        }
        for name, value in positive.items():
            if int(value) < 1:
                raise InvalidValueError(f"{name} must be >= 1, got {value}")
        if self.dim % self.n_heads != 0:
            raise InvalidValueError(f"dim {self.dim} not divisible by n_heads {self.n_heads}")
        if self.n_heads % self.n_kv_heads != 0:
            raise InvalidValueError(
                f"n_heads {self.n_heads} not divisible by n_kv_heads {self.n_kv_heads}")
        for name, value in (("dim", self.dim), ("hidden_dim", self.hidden_dim),
                            ("kv_dim", self.dim * self.n_kv_heads // self.n_heads)):
            if value % self.gs != 0:
                raise InvalidValueError(f"{name} {value} not divisible by group size {self.gs}")

    @property
    def head_dim(self) -> int:
        return self.dim // self.n_heads

    @property
    def kv_dim(self) -> int:
        return self.dim * self.n_kv_heads // self.n_heads

    @property
    def heads_per_kv(self) -> int:
        return self.n_heads // self.n_kv_heads
