import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pricure.ring import (DEFAULT_PRIME, EncodingRangeError, FixedPointCodec,
                          ModulusMismatchError, RingElement, RingError, RingModulus,
                          centered_lift)

Q = DEFAULT_PRIME


class TestModulusConstruction:
    def test_default_is_mersenne_61(self, mod):
        assert mod.q == 2**61 - 1

    @pytest.mark.parametrize("bad", [0, 1, 4, 10, 2**61, 2**62 + 1, 2**61 - 3])
    def test_rejects_non_primes_and_out_of_range(self, bad):
        with pytest.raises(RingError):
            RingModulus(bad)

    @pytest.mark.parametrize("q", [3, 251, 65521, 2**31 - 1, 2**61 - 1])
    def test_accepts_primes(self, q):
        assert RingModulus(q).q == q

    def test_mismatch_detected(self, mod, small_mod):
        with pytest.raises(ModulusMismatchError):
            mod._check(small_mod)


class TestArithmetic:
    def test_add_wraps(self, mod):
        a = np.array([Q - 1], dtype=np.uint64)
        assert mod.add(a, np.array([5], dtype=np.uint64))[0] == 4

    def test_sub_wraps(self, mod):
        a = np.array([3], dtype=np.uint64)
        assert mod.sub(a, np.array([10], dtype=np.uint64))[0] == Q - 7

    def test_neg(self, mod):
        assert mod.neg(np.array([1], dtype=np.uint64))[0] == Q - 1
        assert mod.neg(np.array([0], dtype=np.uint64))[0] == 0

    def test_mul_matches_python_ints(self, mod, rng):
        a = mod.uniform(rng, (50,))
        b = mod.uniform(rng, (50,))
        got = mod.mul(a, b)
        want = [(int(x) * int(y)) % Q for x, y in zip(a, b)]
        assert got.tolist() == want

    def test_scale_by_negative_constant(self, mod):
        a = np.array([7], dtype=np.uint64)
        assert mod.scale_by(a, -1)[0] == Q - 7

    def test_as_array_rejects_out_of_range(self, mod):
        with pytest.raises(RingError):
            mod.as_array(np.array([Q], dtype=np.uint64))

    def test_reduce_and_from_signed(self, mod):
        assert mod.from_signed(np.array([-1]))[0] == Q - 1
        assert mod.reduce(np.array([Q + 5], dtype=object))[0] == 5

    def test_centered_round_trip(self, mod, rng):
        signed = rng.integers(-10**9, 10**9, size=200)
        assert np.array_equal(mod.centered(mod.from_signed(signed)), signed)

    @given(st.integers(0, Q - 1), st.integers(0, Q - 1))
    @settings(max_examples=200, deadline=None)
    def test_add_mul_property(self, a, b):
        mod = RingModulus()
        aa = np.array([a], dtype=np.uint64)
        bb = np.array([b], dtype=np.uint64)
        assert int(mod.add(aa, bb)[0]) == (a + b) % Q
        assert int(mod.mul(aa, bb)[0]) == (a * b) % Q


class TestMatmul:
    def test_matches_bigint_reference(self, mod, rng):
        a = mod.uniform(rng, (7, 11))
        b = mod.uniform(rng, (11, 5))
        want = (a.astype(object) @ b.astype(object)) % Q
        assert np.array_equal(mod.matmul(a, b), want.astype(np.uint64))

    def test_small_modulus(self, small_mod, rng):
        a = small_mod.uniform(rng, (4, 6))
        b = small_mod.uniform(rng, (6, 3))
        want = (a.astype(object) @ b.astype(object)) % 251
        assert np.array_equal(small_mod.matmul(a, b), want.astype(np.uint64))

    def test_shape_mismatch(self, mod, rng):
        with pytest.raises(RingError):
            mod.matmul(mod.uniform(rng, (2, 3)), mod.uniform(rng, (4, 2)))

    def test_inner_dim_bound(self, mod):
        a = np.zeros((1, 2**20 + 1), dtype=np.uint64)
        b = np.zeros((2**20 + 1, 1), dtype=np.uint64)
        with pytest.raises(RingError):
            mod.matmul(a, b)

    def test_extreme_values(self, mod):
        a = np.full((3, 3), Q - 1, dtype=np.uint64)
        want = (a.astype(object) @ a.astype(object)) % Q
        assert np.array_equal(mod.matmul(a, a), want.astype(np.uint64))


class TestRingElement:
    def test_ops(self, mod):
        x = RingElement(Q - 1, mod)
        y = RingElement(3, mod)
        assert (x + y).value == 2
        assert (x - y).value == Q - 4
        assert (x * y).value == (3 * (Q - 1)) % Q
        assert (x + 1).value == 0

    def test_centered(self, mod):
        assert RingElement(Q - 1, mod).centered() == -1
        assert RingElement(5, mod).centered() == 5
        assert centered_lift(-3 % Q, mod) == -3

    def test_range_check(self, mod):
        with pytest.raises(RingError):
            RingElement(Q, mod)


class TestCodec:
    def test_truncation_toward_zero(self, codec):
        assert codec.encode(0.456) == 45
        assert codec.encode(-0.456) == Q - 45
        assert codec.decode(np.array([45], dtype=np.uint64))[0] == pytest.approx(0.45)

    def test_float_noise_snap(self, codec):
        # 0.29 * 100 is 28.999999999999996 in binary floating point
        assert codec.encode(0.29) == 29
        assert codec.encode(-0.29) == Q - 29

    def test_two_decimal_values_round_trip(self, codec, rng):
        vals = np.round(rng.uniform(-1000, 1000, 500), 2)
        assert np.allclose(codec.decode(codec.encode(vals)), vals)

    def test_range_limit(self, codec):
        with pytest.raises(EncodingRangeError):
            codec.encode(codec.limit * 1.5)

    def test_units_helpers(self, codec):
        units = np.array([-123, 0, 77])
        assert np.array_equal(codec.to_units(codec.from_units(units)), units)

    def test_scale_validation(self, mod):
        with pytest.raises(RingError):
            FixedPointCodec(mod, 0)
