"""Built-in oracle checks runnable in production environments.

Each check re-derives an expected result from first principles (closed
forms, float64 re-runs, exhaustive small cases) and compares the shipped
implementation against it. The HTTP service and the CLI expose these as
`selftest`; the pytest suite covers far more, but needs the source tree.
"""

from __future__ import annotations

import numpy as np

from .config import ModelConfig
from .gqmv import GqmvProblem, gqmv_reference, gqmv_staged, reference_group_sums, staged_group_sums
from .model import KVCache, RunState, Transformer, rmsnorm, rope_apply
from .modelfile import expected_file_size, gen_synthetic, quantize_weights
from .pipesim import HwConfig, peak_gops, simulate_gqmv
from .quant import QuantSpec, quantize
from .stream import ScheduleCosts, plan_schedule
from .textio import Sampler, SamplerConfig, decode_bytes, encode_bytes, synthetic_vocab


def _check_quant_known_vector():
    q = quantize([2.0, -1.0, 0.5, 1.5], QuantSpec(4))
    assert q.values.tolist() == [127, -64, 32, 96], q.values
    assert abs(q.scales[0] - 4.0 / 255.0) < 1e-9


def _check_quant_roundtrip_bound():
    rng = np.random.default_rng(1)
    gs = 256
    x = rng.standard_normal(100 * gs).astype(np.float32)
    q = quantize(x, QuantSpec(gs))
    rhat = q.values.reshape(-1, gs).astype(np.float64) * q.scales.astype(np.float64)[:, None]
    err = np.abs(rhat.reshape(-1) - x.astype(np.float64))
    bound = np.repeat(q.scales.astype(np.float64), gs) * (0.5 + 1 / 255) + 2.0 ** -20
    assert (err <= bound).all()


def _check_gqmv_against_f64():
    rng = np.random.default_rng(2)
    for _ in range(25):
        m, n, gs = int(rng.integers(1, 40)), 256, int(rng.choice([32, 64, 256]))
        p = GqmvProblem(
            rng.integers(-128, 128, m * n).astype(np.int8),
            rng.uniform(1e-4, 1, m * n // gs).astype(np.float32),
            rng.integers(-128, 128, n).astype(np.int8),
            rng.uniform(1e-4, 1, n // gs).astype(np.float32), m, n, gs)
        assert np.array_equal(staged_group_sums(p), reference_group_sums(p))
        ref = gqmv_reference(p)
        stg = gqmv_staged(p)
        scale = np.abs(ref).max() + 1e-30
        assert (np.abs(stg - ref) <= 1e-6 * np.maximum(np.abs(ref), scale)).all()
        G = n // gs
        gs64 = np.einsum("mgk,gk->mg", p.wq.reshape(m, G, gs).astype(np.int64),
                         p.xq.reshape(G, gs).astype(np.int64))
        f64 = (gs64 * p.ws.astype(np.float64).reshape(m, G)
               * p.xs.astype(np.float64)[None, :]).sum(axis=1)
        assert (np.abs(ref - f64) <= 1e-5 * np.maximum(np.abs(f64), np.abs(f64).max())).all()


def _check_rope_isometry():
    cfg = ModelConfig(dim=64, hidden_dim=128, n_layers=1, n_heads=4, n_kv_heads=2,
                      vocab_size=512, seq_len=64, gs=32)
    rng = np.random.default_rng(3)
    q = rng.standard_normal(cfg.dim).astype(np.float32)
    k = rng.standard_normal(cfg.kv_dim).astype(np.float32)
    before = (q.reshape(-1, 2) ** 2).sum(axis=1)
    rope_apply(q, k, 13, cfg)
    after = (q.reshape(-1, 2) ** 2).sum(axis=1)
    assert np.allclose(after, before, rtol=1e-5)


def _check_rmsnorm_zero_guard():
    y = rmsnorm(np.zeros(16, np.float32), np.ones(16, np.float32))
    assert np.isfinite(y).all()


def _check_schedule_identities():
    rng = np.random.default_rng(4)
    for _ in range(200):
        L = int(rng.integers(1, 16))
        tc, tt = rng.uniform(0, 9, L), rng.uniform(0, 9, L)
        sync = plan_schedule(ScheduleCosts(tc, tt), "sync").total_time
        asyn = plan_schedule(ScheduleCosts(tc, tt), "async").total_time
        expect_sync = 0.0
        for t, c in zip(tt, tc):
            expect_sync += t
            expect_sync += c
        expect_async = tt[0]
        for l in range(L):
            expect_async += max(tc[l], tt[l + 1] if l + 1 < L else 0.0)
        assert sync == expect_sync and asyn == expect_async
        assert asyn <= sync + 1e-12


def _check_pipesim_roofline():
    hw = HwConfig()
    assert abs(peak_gops(hw) - 6.56) < 1e-9
    rep = simulate_gqmv(32000, 2048, hw)
    assert abs(rep.sustained_gops - 6.56) / 6.56 < 0.02
    assert rep.total_cycles == (rep.fill_cycles + rep.busy_cycles
                                + rep.stall_cycles + rep.drain_cycles)
    last = -1.0
    for rate in np.linspace(1, 20, 5):
        g = simulate_gqmv(4096, 2048, HwConfig(ddr_bytes_per_cycle=float(rate))).sustained_gops
        assert g >= last
        last = g


def _check_tokenizer_roundtrip():
    vocab = synthetic_vocab(512)
    rng = np.random.default_rng(6)
    for _ in range(50):
        data = bytes(rng.integers(0, 256, int(rng.integers(0, 48))).tolist())
        assert decode_bytes(encode_bytes(data, vocab, add_bos=False), vocab) == data


def _check_sampler_rules():
    greedy = Sampler(SamplerConfig(mode="greedy"))
    assert greedy.sample(np.array([1.0, 3.0, 3.0], np.float32)) == 1
    top = Sampler(SamplerConfig(mode="top_p", p=0.5, temperature=1.0, seed=0))
    picks = {top.sample(np.zeros(4, np.float32)) for _ in range(500)}
    assert picks == {0, 1}


def _check_tiny_decode():
    cfg = ModelConfig(dim=64, hidden_dim=128, n_layers=2, n_heads=4, n_kv_heads=2,
                      vocab_size=512, seq_len=16, gs=32)
    persistent, layers = quantize_weights(cfg, gen_synthetic(cfg, seed=0))
    tf = Transformer(cfg, persistent, layers.__getitem__)
    state, cache = RunState(cfg), KVCache(cfg)
    token = 1
    for pos in range(cfg.seq_len):
        logits = tf.forward(token, pos, state, cache)
        assert np.isfinite(logits).all()
        token = int(np.argmax(logits))
    assert expected_file_size(cfg) > 0


CHECKS = [
    ("quant/known-vector", _check_quant_known_vector),
    ("quant/roundtrip-bound", _check_quant_roundtrip_bound),
    ("gqmv/oracle-agreement", _check_gqmv_against_f64),
    ("model/rope-isometry", _check_rope_isometry),
    ("model/rmsnorm-zero-guard", _check_rmsnorm_zero_guard),
    ("stream/schedule-identities", _check_schedule_identities),
    ("pipesim/roofline", _check_pipesim_roofline),
    ("textio/tokenizer-roundtrip", _check_tokenizer_roundtrip),
    ("textio/sampler-rules", _check_sampler_rules),
    ("model/tiny-decode", _check_tiny_decode),
]


def run_selftest() -> dict:
    """Run every check; returns pass/fail counts and failure messages."""
    passed, failures = 0, []
    for name, check in CHECKS:
        try:
            check()
            passed += 1
        except Exception as exc:  # report, never crash the caller
            failures.append(f"{name}: {type(exc).__name__}: {exc}")
    return {
        "passed": passed,
        "failed": len(failures),
        "failures": failures,
        "ok": not failures,
    }
