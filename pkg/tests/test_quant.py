"""Codec round trips, rounding conventions, and the shared requantizer."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_array_equal

from kanele.quant import (
    InputQuantSpec,
    QuantSpec,
    fake_quant_ste,
    requant_code,
    round_half_away,
    shift_round_half_away,
)


class TestRounding:
    def test_half_away_from_zero(self):
        assert round_half_away(0.5) == 1
        assert round_half_away(-0.5) == -1
        assert round_half_away(2.5) == 3
        assert round_half_away(-2.5) == -3
        assert round_half_away(0.49) == 0
        assert_array_equal(round_half_away(np.array([1.5, -1.5, 0.2])), [2, -2, 0])

    def test_shift_matches_float_round(self):
        rng = np.random.default_rng(0)
        v = rng.integers(-10**9, 10**9, size=2000)
        for f in (1, 3, 8):
            want = round_half_away(v / 2.0**f)
            assert_array_equal(shift_round_half_away(v, f), want)

    def test_shift_zero_is_identity(self):
        assert shift_round_half_away(37, 0) == 37

    def test_shift_scalar_negative(self):
        # -384 / 256 = -1.5 -> -2 under half-away
        assert shift_round_half_away(-384, 8) == -2
        assert shift_round_half_away(384, 8) == 2


class TestQuantSpec:
    def test_encode_anchor(self):
        # 3 bits on [-8, 8]: step 16/7, x=0 sits exactly on a tie
        assert QuantSpec(3, -8.0, 8.0).encode(0.0) == 4

    def test_decode_anchor(self):
        q = QuantSpec(6, -8.0, 8.0)
        assert abs(q.decode(31) - (-8.0 + 31 * 16 / 63)) < 1e-15

    def test_entry_anchor(self):
        # 1.7 * 256 * 63 / 16 = 1713.6 -> 1714
        assert QuantSpec(6, -8.0, 8.0, guard_bits=8).entry_fixed_point(1.7) == 1714

    def test_round_trip_exhaustive(self):
        for bits in (1, 2, 5, 8, 10):
            q = QuantSpec(bits, -3.0, 5.0)
            codes = np.arange(q.n_codes)
            assert_array_equal(q.encode(q.decode(codes)), codes)

    def test_error_bound(self):
        q = QuantSpec(5, -2.0, 2.0)
        xs = np.linspace(-4, 4, 10001)
        err = np.abs(q.decode(q.encode(xs)) - np.clip(xs, -2, 2))
        assert err.max() <= q.step / 2 + 1e-12

    def test_monotonic(self):
        q = QuantSpec(4, -1.0, 1.0)
        xs = np.sort(np.random.default_rng(1).uniform(-2, 2, 500))
        c = q.encode(xs)
        assert (np.diff(c) >= 0).all()

    def test_decode_rejects_bad_codes(self):
        q = QuantSpec(4, 0.0, 1.0)
        with pytest.raises(ValueError):
            q.decode(16)
        with pytest.raises(ValueError):
            q.decode(np.array([0, -1]))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            QuantSpec(0, 0.0, 1.0)
        with pytest.raises(ValueError):
            QuantSpec(17, 0.0, 1.0)
        with pytest.raises(ValueError):
            QuantSpec(4, 1.0, 1.0)
        with pytest.raises(ValueError):
            QuantSpec(4, 0.0, 1.0, guard_bits=-1)

    def test_entry_oddness(self):
        q = QuantSpec(6, -8.0, 8.0)
        ys = np.random.default_rng(2).uniform(0, 50, 200)
        assert_array_equal(q.entry_fixed_point(ys), -q.entry_fixed_point(-ys))

    def test_entry_overflow_rejected(self):
        q = QuantSpec(16, -8.0, 8.0, guard_bits=16)
        with pytest.raises(OverflowError):
            q.entry_fixed_point(1e15)

    def test_fake_quant_ste_gradient_is_one(self):
        q = QuantSpec(4, -1.0, 1.0)
        val, grad = fake_quant_ste(q, 0.3)
        assert val == q.decode(q.encode(0.3))
        assert grad == 1.0
        _, g = fake_quant_ste(q, np.array([5.0, -5.0]))  # clipped region too
        assert_array_equal(g, [1.0, 1.0])


class TestRequant:
    def test_hand_trace(self):
        # acc 10, offset 0, 2 guard bits, 2-bit output: (10+2)>>2 = 3
        assert requant_code(10, 0, 2, 2) == 3

    def test_clamps_both_ends(self):
        assert requant_code(-5000, 0, 2, 4) == 0
        assert requant_code(5000000, 0, 2, 4) == 15

    def test_matches_float_reference(self):
        rng = np.random.default_rng(3)
        acc = rng.integers(-(10**6), 10**6, size=3000)
        off = 12345
        f, bits = 8, 6
        want = np.clip(round_half_away((acc + off) / 2.0**f), 0, 2**bits - 1)
        assert_array_equal(requant_code(acc, off, f, bits), want)


class TestInputCodec:
    def test_affine_then_encode(self):
        base = QuantSpec(6, -8.0, 8.0)
        codec = InputQuantSpec(base, scale=np.array([2.0, 0.5]), bias=np.array([-1.0, 3.0]))
        x = np.array([[1.0, 2.0]])
        z = codec.affine(x)
        assert_array_equal(z, [[1.0, 4.0]])
        assert_array_equal(codec.encode(x), base.encode(z))

    def test_rejects_nonpositive_scale(self):
        base = QuantSpec(4, -1.0, 1.0)
        with pytest.raises(ValueError):
            InputQuantSpec(base, scale=np.array([0.0]), bias=np.array([0.0]))

    def test_rejects_shape_mismatch(self):
        base = QuantSpec(4, -1.0, 1.0)
        with pytest.raises(ValueError):
            InputQuantSpec(base, scale=np.ones(2), bias=np.ones(3))


@settings(max_examples=80, deadline=None)
@given(
    bits=st.integers(min_value=1, max_value=12),
    x=st.floats(min_value=-100, max_value=100, allow_nan=False),
)
def test_property_round_trip_and_bound(bits, x):
    q = QuantSpec(bits, -7.0, 9.0)
    c = q.encode(x)
    assert 0 <= c < q.n_codes
    assert abs(q.decode(c) - np.clip(x, -7.0, 9.0)) <= q.step / 2 + 1e-9
