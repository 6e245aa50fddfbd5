"""The decode engine: model file + streamer + forward pass + sampler.

Owns exactly one decode stream. Layer weights come either from the
double-buffered streamer (default) or fully resident; the prefetch toggle
selects overlapped (async) versus serialized (sync) weight transfer.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bench import BenchReport
from .errors import InvalidValueError
from .gqmv import make_problem
from .model import KVCache, RunState, Transformer
from .modelfile import ModelFile, read_model
from .profiling import Profiler
from .quant import QuantSpec, quantize
from .stream import LayerStreamer
from .textio import Sampler, SamplerConfig, Vocabulary, decode, encode, read_vocab


@dataclass
class GenerateResult:
    text: str
    prompt_ids: list[int]
    token_ids: list[int]  # generated ids only
    report: BenchReport
    logits_per_step: list[np.ndarray] = field(default_factory=list)


class InferenceEngine:
    def __init__(self, model_path, tokenizer_path=None, *, streaming: bool = True,
                 prefetch: bool = True, workers: int = 1,
                 transfer_delay_s: float = 0.0, kernel: str = "reference"):
        if workers < 1:
            raise InvalidValueError(f"workers must be >= 1, got {workers}")
        self.model_file: ModelFile = read_model(model_path)
        self.config = self.model_file.config
        self.vocab: Vocabulary | None = (
            read_vocab(tokenizer_path) if tokenizer_path is not None else None)
        self.workers = workers
        self.streamer: LayerStreamer | None = None
        self._resident_layers = None
        if streaming:
            self.streamer = LayerStreamer(self.model_file, prefetch=prefetch,
                                          transfer_delay_s=transfer_delay_s)
            layer_source = self.streamer.acquire_layer
        else:
            self._resident_layers = self.model_file.load_all_layers()
            layer_source = self._resident_layers.__getitem__
        self.transformer = Transformer(self.config, self.model_file.persistent,
                                       layer_source, kernel=kernel)
        self.state = RunState(self.config)
        self.cache = KVCache(self.config)
        self._pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    # -- decoding ---------------------------------------------------------

    def decode_tokens(self, prompt_ids, steps: int, sampler: Sampler, *,
                      benchmark: bool = False, eos_id: int | None = None,
                      profiler: Profiler | None = None,
                      keep_logits: bool = False) -> GenerateResult:
        """Feed the prompt, then sample exactly `steps` tokens (fewer only if
        EOS fires outside benchmark mode)."""
        prompt_ids = [int(t) for t in prompt_ids]
        if not prompt_ids:
            raise InvalidValueError("prompt must contain at least one token")
        if steps < 1:
            raise InvalidValueError(f"steps must be >= 1, got {steps}")
        if len(prompt_ids) + steps - 1 > self.config.seq_len:
            raise InvalidValueError(
                f"prompt of {len(prompt_ids)} tokens plus {steps} steps exceeds "
                f"seq_len {self.config.seq_len}")
        self.state.reset()
        self.cache.reset()
        profiler = profiler if profiler is not None else Profiler()
        generated: list[int] = []
        logits_per_step: list[np.ndarray] = []
        total_positions = len(prompt_ids) + steps - 1
        token = prompt_ids[0]
        start = time.perf_counter()
        for pos in range(total_positions):
            logits = self.transformer.forward(token, pos, self.state, self.cache,
                                              pool=self._pool, profiler=profiler)
            if keep_logits:
                logits_per_step.append(logits.copy())
            if pos + 1 < len(prompt_ids):
                token = prompt_ids[pos + 1]
                continue
            token = sampler.sample(logits)
            generated.append(token)
            if not benchmark and eos_id is not None and token == eos_id:
                break
        wall = time.perf_counter() - start
        report = BenchReport.from_profiler(profiler, len(generated), wall,
                                           workers=self.workers)
        return GenerateResult("", prompt_ids, generated, report, logits_per_step)

    def generate(self, prompt: str, steps: int, sampler_cfg: SamplerConfig, *,
                 benchmark: bool = False, keep_logits: bool = False) -> GenerateResult:
        if self.vocab is None:
            raise InvalidValueError("engine was opened without a tokenizer")
        prompt_ids = encode(prompt, self.vocab, add_bos=True)
        result = self.decode_tokens(
            prompt_ids, steps, Sampler(sampler_cfg), benchmark=benchmark,
            eos_id=self.vocab.eos_id, keep_logits=keep_logits)
        shown = [t for t in result.token_ids if t != self.vocab.eos_id]
        result.text = decode(shown, self.vocab)
        return result

    # -- measurement -------------------------------------------------------

    def gops_bench(self, repeats: int, seed: int = 0):
        """Time the classifier matrix-vector product (ops = 2*vocab*dim)."""
        if repeats < 1:
            raise InvalidValueError(f"repeats must be >= 1, got {repeats}")
        cfg = self.config
        rng = np.random.default_rng(seed)
        xq = quantize(rng.standard_normal(cfg.dim).astype(np.float32), QuantSpec(cfg.gs))
        problem = make_problem(self.model_file.persistent.classifier, xq, cfg.vocab_size)
        ops = 2 * cfg.vocab_size * cfg.dim
        samples = []
        kernel = self.transformer._kernel
        for _ in range(repeats):
            t0 = time.perf_counter()
            kernel(problem)
            samples.append(ops / (time.perf_counter() - t0) / 1e9)
        arr = np.asarray(samples)
        return {"ops": ops, "repeats": repeats,
                "mean_gops": float(arr.mean()), "std_gops": float(arr.std())}

    def resident_weight_bytes(self) -> int:
        if self.streamer is not None:
            return self.streamer.resident_weight_bytes()
        return (self.model_file.persistent.byte_size()
                + sum(lw.quantized_byte_size() for lw in self._resident_layers))

    def close(self):
        if self.streamer is not None:
            self.streamer.close()
        if self._pool is not None:
            self._pool.shutdown(wait=True)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
