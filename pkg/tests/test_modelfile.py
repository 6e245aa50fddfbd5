import numpy as np
import pytest

from lamf.config import ModelConfig
from lamf.errors import FormatError, ModelIOError, ShapeError
from lamf.modelfile import (
    expected_file_size,
    gen_synthetic,
    layer_section_start,
    per_layer_bytes,
    persistent_bytes,
    quantize_weights,
    read_model,
    tensor_bytes,
    write_model,
)
from lamf.quant import dequantize

TINY = ModelConfig(dim=64, hidden_dim=128, n_layers=2, n_heads=4, n_kv_heads=2,
                   vocab_size=512, seq_len=32, gs=32)
TINY_SHARED = ModelConfig(dim=64, hidden_dim=128, n_layers=2, n_heads=4, n_kv_heads=2,
                          vocab_size=512, seq_len=32, gs=32, shared_classifier=True)


def closed_form_size(cfg):
    """Independent byte accounting, kept separate from the implementation."""
    q = lambda numel: numel + 4 * numel // cfg.gs
    kv = cfg.kv_dim
    per_layer = (2 * q(cfg.dim * cfg.dim) + 2 * q(kv * cfg.dim)
                 + 2 * q(cfg.hidden_dim * cfg.dim) + q(cfg.dim * cfg.hidden_dim))
    norms = 4 * (2 * cfg.n_layers * cfg.dim + cfg.dim)
    emb = q(cfg.vocab_size * cfg.dim)
    cls = 0 if cfg.shared_classifier else emb
    return 256 + norms + emb + cfg.n_layers * per_layer + cls


@pytest.fixture(scope="module")
def tiny_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("models") / "tiny.lamf"
    write_model(TINY, gen_synthetic(TINY, seed=3), path)
    return path


class TestByteAccounting:
    @pytest.mark.parametrize("cfg", [TINY, TINY_SHARED])
    def test_expected_size_matches_closed_form(self, cfg):
        assert expected_file_size(cfg) == closed_form_size(cfg)

    def test_billion_parameter_config_shrinks_4x(self):
        # pure arithmetic, nothing allocated: a 1.1B-parameter Llama2 shape
        # (dim 2048, hidden 5632, 22 layers, 32 kv-sharing heads, 32000
        # vocabulary) occupies ~4.4 GB in FP32 and ~1.1 GB quantized at GS=256
        cfg = ModelConfig(dim=2048, hidden_dim=5632, n_layers=22, n_heads=32,
                          n_kv_heads=4, vocab_size=32000, seq_len=2048, gs=256)
        params = 2 * cfg.vocab_size * cfg.dim  # embeddings + classifier
        params += cfg.n_layers * (2 * cfg.dim * cfg.dim
                                  + 2 * cfg.kv_dim * cfg.dim
                                  + 3 * cfg.hidden_dim * cfg.dim)
        assert params == pytest.approx(1.1e9, rel=0.02)
        assert 4 * params == pytest.approx(4.4e9, rel=0.02)
        quantized = expected_file_size(cfg)
        assert quantized == pytest.approx(1.1e9 * (1 + 4 / 256), rel=0.02)
        assert 4 * params / quantized == pytest.approx(4 / (1 + 4 / 256), rel=0.01)

    def test_written_file_size_exact(self, tiny_file):
        assert tiny_file.stat().st_size == closed_form_size(TINY)

    def test_quantized_to_fp32_byte_ratio(self):
        # numel*(1 + 4/gs) bytes vs 4*numel bytes: the 4.4GB -> 1.1GB mechanism
        numel = TINY.vocab_size * TINY.dim
        assert tensor_bytes(numel, 256) / (4 * numel) == (1 + 4 / 256) / 4

    def test_layer_offsets_are_uniform(self, tiny_file):
        mf = read_model(tiny_file)
        diffs = np.diff(mf.layer_offsets)
        assert (diffs == per_layer_bytes(TINY)).all()
        assert mf.layer_offsets[0] == layer_section_start(TINY)


class TestRoundTrip:
    def test_values_and_scales_bit_exact(self, tiny_file):
        weights = gen_synthetic(TINY, seed=3)
        persistent, layers = quantize_weights(TINY, weights)
        mf = read_model(tiny_file)
        assert mf.config == TINY
        np.testing.assert_array_equal(mf.persistent.embeddings.values,
                                      persistent.embeddings.values)
        np.testing.assert_array_equal(mf.persistent.embeddings.scales,
                                      persistent.embeddings.scales)
        np.testing.assert_array_equal(mf.persistent.classifier.values,
                                      persistent.classifier.values)
        np.testing.assert_array_equal(mf.persistent.final_norm, persistent.final_norm)
        for l in range(TINY.n_layers):
            got = mf.load_layer(l)
            for name in ("wq", "wk", "wv", "wo", "w1", "w2", "w3"):
                np.testing.assert_array_equal(getattr(got, name).values,
                                              getattr(layers[l], name).values)
                np.testing.assert_array_equal(getattr(got, name).scales,
                                              getattr(layers[l], name).scales)
            np.testing.assert_array_equal(got.att_norm, layers[l].att_norm)

    def test_shared_classifier_aliases_embeddings(self, tmp_path):
        path = tmp_path / "shared.lamf"
        write_model(TINY_SHARED, gen_synthetic(TINY_SHARED, seed=5), path)
        mf = read_model(path)
        assert mf.persistent.classifier is mf.persistent.embeddings

    def test_export_deterministic(self, tmp_path):
        weights = gen_synthetic(TINY, seed=11)
        a, b = tmp_path / "a.lamf", tmp_path / "b.lamf"
        write_model(TINY, weights, a)
        write_model(TINY, weights, b)
        assert a.read_bytes() == b.read_bytes()


class TestErrorPaths:
    def test_bad_magic(self, tiny_file, tmp_path):
        data = bytearray(tiny_file.read_bytes())
        data[0] ^= 0xFF
        bad = tmp_path / "bad.lamf"
        bad.write_bytes(data)
        with pytest.raises(FormatError):
            read_model(bad)

    def test_bad_version(self, tiny_file, tmp_path):
        data = bytearray(tiny_file.read_bytes())
        data[4] = 99
        bad = tmp_path / "badver.lamf"
        bad.write_bytes(data)
        with pytest.raises(FormatError):
            read_model(bad)

    def test_truncated_file(self, tiny_file, tmp_path):
        bad = tmp_path / "trunc.lamf"
        bad.write_bytes(tiny_file.read_bytes()[:-100])
        with pytest.raises(ModelIOError):
            read_model(bad)

    def test_shape_mismatch_on_export(self, tmp_path):
        weights = gen_synthetic(TINY, seed=1)
        weights.wq = weights.wq[:, :32, :]
        with pytest.raises(ShapeError):
            write_model(TINY, weights, tmp_path / "x.lamf")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ModelIOError):
            read_model(tmp_path / "nope.lamf")


class TestSynthetic:
    def test_same_seed_bit_identical(self):
        a = gen_synthetic(TINY, seed=42)
        b = gen_synthetic(TINY, seed=42)
        for name in ("token_embedding", "wq", "w2", "final_norm", "classifier"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_different_seeds_differ(self):
        a = gen_synthetic(TINY, seed=42)
        b = gen_synthetic(TINY, seed=43)
        assert not np.array_equal(a.wq, b.wq)

    def test_fan_in_scaling(self):
        w = gen_synthetic(TINY, seed=0)
        assert w.wq.std() == pytest.approx(1 / np.sqrt(TINY.dim), rel=0.1)
        assert w.w2.std() == pytest.approx(1 / np.sqrt(TINY.hidden_dim), rel=0.1)

    def test_embedding_rows_dequantize_close(self):
        weights = gen_synthetic(TINY, seed=0)
        persistent, _ = quantize_weights(TINY, weights)
        back = dequantize(persistent.embeddings).reshape(TINY.vocab_size, TINY.dim)
        assert np.abs(back - weights.token_embedding).max() < 0.02


class TestPersistentBytes:
    def test_matches_weight_container(self):
        persistent, _ = quantize_weights(TINY, gen_synthetic(TINY, seed=3))
        assert persistent.byte_size() == persistent_bytes(TINY)

    def test_shared_counts_classifier_once(self):
        persistent, _ = quantize_weights(TINY_SHARED, gen_synthetic(TINY_SHARED, seed=3))
        assert persistent.byte_size() == persistent_bytes(TINY_SHARED)
        assert persistent_bytes(TINY) - persistent_bytes(TINY_SHARED) == tensor_bytes(
            TINY.vocab_size * TINY.dim, TINY.gs)
