"""Tokenization and next-token sampling.

The vocabulary is a list of byte strings with per-token merge scores.
Encoding starts from single-byte tokens (every byte value must be present,
so any input is representable) and repeatedly merges the adjacent pair whose
concatenation is the highest-scoring vocabulary entry. Decoding concatenates
token byte strings.

Tokenizer file layout (little-endian):

    u32 token_count | u32 bos_id | u32 eos_id
    per token: f32 score | u32 byte_length | raw bytes
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DistributionError, FormatError, InvalidValueError, ModelIOError, TokenError

_HEAD = struct.Struct("<III")
_TOKEN_HEAD = struct.Struct("<fI")


@dataclass
class Vocabulary:
    tokens: list[bytes]
    scores: np.ndarray
    bos_id: int
    eos_id: int
    _lookup: dict[bytes, int] = field(init=False, repr=False)
    _byte_ids: list[int] = field(init=False, repr=False)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float32)
        if len(self.tokens) != self.scores.size:
            raise FormatError("token and score counts differ")
        for name, tid in (("bos", self.bos_id), ("eos", self.eos_id)):
            if not 0 <= tid < len(self.tokens):
                raise FormatError(f"{name} id {tid} outside vocabulary")
        self._lookup = {}
        for tid, tok in enumerate(self.tokens):
            self._lookup.setdefault(tok, tid)  # lowest id wins for duplicates
        try:
            self._byte_ids = [self._lookup[bytes([b])] for b in range(256)]
        except KeyError as exc:
            raise FormatError(f"vocabulary lacks byte token {exc}") from exc

    def __len__(self) -> int:
        return len(self.tokens)

    def token_id(self, token: bytes):
        return self._lookup.get(token)


def encode_bytes(data: bytes, vocab: Vocabulary, add_bos: bool = True) -> list[int]:
    """Byte-fallback start, then greedy highest-score adjacent-pair merging."""
    ids = [vocab._byte_ids[b] for b in data]
    while True:
        best_score = -np.inf
        best_at = -1
        best_id = -1
        for i in range(len(ids) - 1):
            merged = vocab.tokens[ids[i]] + vocab.tokens[ids[i + 1]]
            tid = vocab.token_id(merged)
            if tid is not None and vocab.scores[tid] > best_score:
                best_score, best_at, best_id = float(vocab.scores[tid]), i, tid
        if best_at < 0:
            break
        ids[best_at:best_at + 2] = [best_id]
    if add_bos:
        ids.insert(0, vocab.bos_id)
    return ids


def encode(text: str, vocab: Vocabulary, add_bos: bool = True) -> list[int]:
    return encode_bytes(text.encode("utf-8"), vocab, add_bos=add_bos)


def decode_bytes(ids, vocab: Vocabulary) -> bytes:
    out = []
    for tid in ids:
        tid = int(tid)
        if not 0 <= tid < len(vocab.tokens):
            raise TokenError(f"token id {tid} outside vocabulary of {len(vocab.tokens)}")
        out.append(vocab.tokens[tid])
    return b"".join(out)


def decode(ids, vocab: Vocabulary) -> str:
    return decode_bytes(ids, vocab).decode("utf-8", errors="replace")


def write_vocab(vocab: Vocabulary, path):
    try:
        with open(path, "wb") as fh:
            fh.write(_HEAD.pack(len(vocab.tokens), vocab.bos_id, vocab.eos_id))
            for tok, score in zip(vocab.tokens, vocab.scores):
                fh.write(_TOKEN_HEAD.pack(float(score), len(tok)))
                fh.write(tok)
    except OSError as exc:
        raise ModelIOError(f"writing tokenizer {path}: {exc}") from exc


def read_vocab(path) -> Vocabulary:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ModelIOError(f"reading tokenizer {path}: {exc}") from exc
    if len(data) < _HEAD.size:
        raise FormatError(f"tokenizer file too short: {len(data)} bytes")
    count, bos_id, eos_id = _HEAD.unpack_from(data)
    tokens: list[bytes] = []
    scores = np.empty(count, dtype=np.float32)
    offset = _HEAD.size
    for i in range(count):
        if offset + _TOKEN_HEAD.size > len(data):
            raise FormatError(f"tokenizer truncated in token {i} header")
        score, length = _TOKEN_HEAD.unpack_from(data, offset)
        offset += _TOKEN_HEAD.size
        if offset + length > len(data):
            raise FormatError(f"tokenizer truncated in token {i} bytes")
        tokens.append(data[offset:offset + length])
        scores[i] = score
        offset += length
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes in tokenizer file")
    return Vocabulary(tokens, scores, bos_id, eos_id)


# letters ordered by rough English frequency; pair merges are built from these
_MERGE_ALPHABET = "etaoinshrdlucmfwypvbgkqjxz"


def synthetic_vocab(vocab_size: int) -> Vocabulary:
    """Deterministic test vocabulary: BOS, EOS, all 256 byte tokens, then
    two-letter merge tokens with descending scores."""
    if vocab_size < 258:
        raise InvalidValueError(f"need vocab_size >= 258 for byte coverage, got {vocab_size}")
    tokens: list[bytes] = [b"", b""]  # BOS, EOS carry no text
    scores = [0.0, 0.0]
    tokens.extend(bytes([b]) for b in range(256))
    scores.extend(0.0 for _ in range(256))
    pairs = ((a + b).encode() for a in _MERGE_ALPHABET for b in _MERGE_ALPHABET)
    rank = 0
    while len(tokens) < vocab_size:
        try:
            tok = next(pairs)
        except StopIteration:
            raise InvalidValueError(
                f"synthetic vocabulary supports at most {258 + len(_MERGE_ALPHABET) ** 2} "
                f"tokens, got {vocab_size}") from None
        tokens.append(tok)
        scores.append(10.0 - 0.01 * rank)
        rank += 1
    return Vocabulary(tokens, np.array(scores, dtype=np.float32), bos_id=0, eos_id=1)


@dataclass(frozen=True)
class SamplerConfig:
    mode: str = "greedy"  # "greedy" | "top_p"
    p: float = 0.9
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("greedy", "top_p"):
            raise InvalidValueError(f"unknown sampling mode {self.mode!r}")
        if not 0.0 < self.p <= 1.0:
            raise InvalidValueError(f"p must be in (0, 1], got {self.p}")
        if self.temperature < 0.0:
            raise InvalidValueError(f"temperature must be >= 0, got {self.temperature}")


class Sampler:
    """Owns the RNG of one decode stream; greedy mode never touches it."""

    def __init__(self, config: SamplerConfig):
        self.config = config
        self._rng = np.random.default_rng(config.seed)

    def sample(self, logits: np.ndarray) -> int:
        logits = np.asarray(logits, dtype=np.float32)
        if np.isnan(logits).any() or (logits == np.inf).any():
            raise DistributionError("logits contain NaN or +inf")
        if (logits == -np.inf).all():
            raise DistributionError("all logits are -inf")
        cfg = self.config
        if cfg.mode == "greedy" or cfg.temperature == 0.0:
            return int(np.argmax(logits))  # argmax takes the lowest index on ties
        # subtract the max before dividing so tiny temperatures cannot overflow
        z = (logits.astype(np.float64) - logits.max()) / cfg.temperature
        probs = np.exp(z)
        probs /= probs.sum()
        order = np.argsort(-probs, kind="stable")  # descending, ties by lowest id
        cum = np.cumsum(probs[order])
        cutoff = int(np.searchsorted(cum, cfg.p, side="left"))
        cutoff = min(cutoff, probs.size - 1)  # guard against cum[-1] < p from rounding
        kept = order[:cutoff + 1]
        kept_probs = probs[kept]
        kept_cum = np.cumsum(kept_probs / kept_probs.sum())
        draw = self._rng.random()
        return int(kept[min(np.searchsorted(kept_cum, draw, side="right"),
                            kept.size - 1)])
