import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lamf.errors import InvalidValueError, ShapeError
from lamf.quant import QuantSpec, QuantizedTensor, dequantize, error_stats, quantize

from oracles import dequantize_f64, quantize_f64

F32_SLACK = 2.0 ** -20


def roundtrip_bound(scales_per_element):
    """Worst-case |dequantize(quantize(r)) - r|: half a step plus the clamp
    penalty at group maxima, plus FP32 slack."""
    return scales_per_element * (0.5 + 1.0 / 255.0) + F32_SLACK


class TestQuantize:
    def test_all_zero_group_gets_unit_scale(self):
        q = quantize([0.0, 0.0, 0.0, 0.0], QuantSpec(4))
        assert q.values.tolist() == [0, 0, 0, 0]
        assert q.scales.tolist() == [1.0]
        assert dequantize(q).tolist() == [0.0, 0.0, 0.0, 0.0]

    def test_known_group(self):
        # max|r| = 2 -> S = 4/255; 2.0/S = 127.5 rounds away to 128, clamps to 127
        q = quantize([2.0, -1.0, 0.5, 1.5], QuantSpec(4))
        assert q.values.tolist() == [127, -64, 32, 96]
        assert q.scales[0] == pytest.approx(4.0 / 255.0, rel=1e-7)

    def test_length_not_divisible(self):
        with pytest.raises(ShapeError):
            quantize([1.0, 2.0, 3.0], QuantSpec(2))

    def test_empty_input(self):
        with pytest.raises(ShapeError):
            quantize([], QuantSpec(2))

    def test_non_finite_input(self):
        with pytest.raises(InvalidValueError):
            quantize([1.0, np.nan, 0.0, 1.0], QuantSpec(4))
        with pytest.raises(InvalidValueError):
            quantize([1.0, np.inf, 0.0, 1.0], QuantSpec(4))

    def test_bad_group_size(self):
        with pytest.raises(InvalidValueError):
            QuantSpec(0)

    def test_roundtrip_bound_standard_normal(self, rng):
        gs = 256
        x = rng.standard_normal(9984).astype(np.float32)  # 39 groups of 256
        q = quantize(x, QuantSpec(gs))
        rhat = dequantize_f64(q.values, q.scales, gs)
        err = np.abs(rhat - x.astype(np.float64))
        per_elem_scale = np.repeat(q.scales.astype(np.float64), gs)
        assert (err <= roundtrip_bound(per_elem_scale)).all()

    def test_roundtrip_single_value_group(self):
        q = quantize([1.0], QuantSpec(1))
        err = abs(dequantize(q)[0] - 1.0)
        assert err <= roundtrip_bound(float(q.scales[0]))

    def test_scale_matches_f64_within_one_ulp(self, rng):
        x = (rng.standard_normal(4096) * 10 ** rng.uniform(-3, 3, 4096)).astype(np.float32)
        q = quantize(x, QuantSpec(64))
        _, scales64 = quantize_f64(x, 64)
        ulp = np.spacing(q.scales.astype(np.float32))
        assert (np.abs(q.scales.astype(np.float64) - scales64) <= ulp).all()

    def test_adversarial_extremes_stay_in_range(self):
        big = np.finfo(np.float32).max
        tiny = np.float32(1e-44)  # denormal
        x = np.array([big, -big, big / 2, 0.0, tiny, -tiny, 0.0, 0.0], dtype=np.float32)
        q = quantize(x, QuantSpec(4))
        assert q.values.min() >= -128 and q.values.max() <= 127
        assert np.isfinite(q.scales).all() and (q.scales > 0).all()

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6, width=32), min_size=8, max_size=8), st.sampled_from([1, 2, 4, 8]))
    def test_roundtrip_bound_property(self, values, gs):
        x = np.array(values, dtype=np.float32)
        q = quantize(x, QuantSpec(gs))
        rhat = dequantize_f64(q.values, q.scales, gs)
        err = np.abs(rhat - x.astype(np.float64))
        per_elem_scale = np.repeat(q.scales.astype(np.float64), gs)
        assert (err <= roundtrip_bound(per_elem_scale)).all()

    def test_requantize_stability(self, rng):
        # Requantizing dequantized values reconstructs the scale shrunk by
        # 254/255 (the group max always quantizes to |q| = 127), so only the
        # +-127 cells can move: +127 is pinned by the clamp, -127 may round
        # to -128. Everything else must be bit-identical.
        gs = 32
        x = (rng.uniform(0.5, 1.0, 2048) * rng.choice([-1.0, 1.0], 2048)).astype(np.float32)
        q1 = quantize(x, QuantSpec(gs))
        q2 = quantize(dequantize(q1), QuantSpec(gs))
        v1, v2 = q1.values.astype(np.int32), q2.values.astype(np.int32)
        interior = np.abs(v1) <= 126
        assert np.array_equal(v1[interior], v2[interior])
        assert (v2[v1 == 127] == 127).all()
        assert np.isin(v2[v1 == -127], [-127, -128]).all()


class TestDequantize:
    def test_zeros(self):
        q = QuantizedTensor(np.zeros(4, np.int8), np.ones(1, np.float32), 4, QuantSpec(4))
        assert dequantize(q).tolist() == [0.0, 0.0, 0.0, 0.0]

    def test_known_values(self):
        q = QuantizedTensor(
            np.array([127, -64, 32, 96], np.int8),
            np.array([0.0156863], np.float32), 4, QuantSpec(4),
        )
        np.testing.assert_allclose(
            dequantize(q), [1.99216, -1.00392, 0.50196, 1.50588], atol=5e-6)

    def test_output_length(self, rng):
        x = rng.standard_normal(512).astype(np.float32)
        assert dequantize(quantize(x, QuantSpec(64))).shape == (512,)


class TestQuantizedTensorInvariants:
    def test_scale_count_checked(self):
        with pytest.raises(ShapeError):
            QuantizedTensor(np.zeros(8, np.int8), np.ones(3, np.float32), 8, QuantSpec(4))

    def test_negative_scale_rejected(self):
        with pytest.raises(InvalidValueError):
            QuantizedTensor(np.zeros(4, np.int8), np.array([-1.0], np.float32), 4, QuantSpec(4))

    def test_byte_size(self):
        q = QuantizedTensor(np.zeros(512, np.int8), np.ones(2, np.float32), 512, QuantSpec(256))
        assert q.byte_size() == 512 + 8


class TestErrorStats:
    def test_identical_gives_zero(self):
        q = quantize([0.0, 0.0, 0.5, -0.5], QuantSpec(4))
        stats = error_stats(dequantize(q), q)
        assert stats.max == stats.min == stats.mean == stats.std == 0.0

    def test_single_element(self):
        q = QuantizedTensor(np.array([99], np.int8), np.array([0.01], np.float32), 1, QuantSpec(1))
        stats = error_stats([1.0], q)
        assert stats.max == pytest.approx(0.01, rel=1e-5)
        assert stats.mean == pytest.approx(0.01, rel=1e-5)
        assert stats.std == 0.0
        assert stats.mean_rel_pct == pytest.approx(1.0, rel=1e-5)

    def test_large_normal_sample_against_oracle(self, rng):
        gs = 256
        x = rng.standard_normal(1_000_448).astype(np.float32)  # 3908 groups
        q = quantize(x, QuantSpec(gs))
        stats = error_stats(x, q)
        oracle_err = np.abs(dequantize_f64(q.values, q.scales, gs) - x.astype(np.float64))
        assert stats.mean == pytest.approx(float(oracle_err.mean()), rel=1e-5)
        assert stats.max == pytest.approx(float(oracle_err.max()), rel=1e-5)
        assert stats.mean < 1e-2  # std-normal data at GS=256 lands well below this
        assert stats.min <= stats.mean <= stats.max

    def test_length_mismatch(self):
        q = quantize([1.0, 2.0], QuantSpec(2))
        with pytest.raises(ShapeError):
            error_stats([1.0, 2.0, 3.0], q)

    def test_all_zero_original_has_zero_relative_stats(self):
        q = quantize([0.0, 0.0], QuantSpec(2))
        stats = error_stats([0.0, 0.0], q)
        assert stats.mean_rel_pct == 0.0 and stats.std_rel_pct == 0.0
