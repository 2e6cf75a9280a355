import numpy as np
import pytest
from hypothesis import given, strategies as st

from fuzzvault.galois import DEFAULT_PRIMITIVE_POLYS, Field, field_new, poly_eval


def gf2_poly_mul(a: int, b: int) -> int:
    out = 0
    while b:
        if b & 1:
            out ^= a
        a <<= 1
        b >>= 1
    return out


def test_gf16_generator_has_full_order():
    f = field_new(4, 0b10011)
    # exhaustive: alpha^i for i = 1..14 never returns to 1 early
    seen = set()
    x = 1
    for i in range(15):
        assert x not in seen
        seen.add(x)
        x = f.mul(x, 2)
    assert x == 1
    assert len(seen) == 15


def test_reducible_polynomial_rejected():
    # x^4 + x^2 + 1 = (x^2 + x + 1)^2, verified by brute-force factorization
    assert gf2_poly_mul(0b111, 0b111) == 0b10101
    factors = [
        (p, q)
        for p in range(2, 1 << 4)
        for q in range(2, 1 << 4)
        if gf2_poly_mul(p, q) == 0b10101
    ]
    assert factors, "oracle: 0b10101 must factor over GF(2)"
    with pytest.raises(ValueError):
        field_new(4, 0b10101)


def test_gf256_default_poly_is_primitive():
    f = field_new(8, 0b100011101)
    # exhaustive order check on the generator
    x = 1
    for i in range(255):
        x = f.mul(x, 2)
        if i < 254:
            assert x != 1
    assert x == 1


def test_non_primitive_but_irreducible_rejected():
    # x^4 + x^3 + x^2 + x + 1 is irreducible but its root has order 5
    with pytest.raises(ValueError):
        field_new(4, 0b11111)


def test_degree_mismatch_rejected():
    with pytest.raises(ValueError):
        field_new(4, 0b1011)  # degree 3 polynomial for m=4


def test_mul_identities():
    f = field_new(4)
    for a in range(16):
        assert f.mul(a, 1) == a
        assert f.mul(a, 0) == 0
    # x^3 * x = x^4 = x + 1 under x^4 + x + 1
    assert f.mul(0b1000, 0b0010) == 0b0011


def test_inverse_exhaustive_gf16():
    f = field_new(4)
    assert f.inv(1) == 1
    for a in range(1, 16):
        assert f.mul(a, f.inv(a)) == 1
    with pytest.raises(ZeroDivisionError):
        f.inv(0)


def test_poly_eval_cases():
    f = field_new(4)
    alpha = 2
    assert poly_eval(f, [7], alpha) == 7  # constant polynomial
    assert poly_eval(f, [0, 1], alpha) == alpha  # identity polynomial
    # 1 + x + x^2 at alpha, by direct expansion
    expected = 1 ^ alpha ^ f.mul(alpha, alpha)
    assert poly_eval(f, [1, 1, 1], alpha) == expected


def test_lagrange_exhaustive_gf16():
    f = field_new(4)
    for a in range(1, 16):
        assert f.pow(a, 15) == 1


def test_distributivity_exhaustive_gf16():
    f = field_new(4)
    for a in range(16):
        for b in range(16):
            for c in range(16):
                assert f.mul(a, b ^ c) == f.mul(a, b) ^ f.mul(a, c)


def test_log_exp_round_trip():
    for m in (4, 7, 8):
        f = field_new(m)
        for a in range(1, 1 << m):
            assert f.alpha_pow(f.log(a)) == a


@given(st.integers(min_value=1, max_value=255), st.integers(min_value=1, max_value=255))
def test_gf256_mul_commutes_and_inverts(a, b):
    f = Field(8)
    assert f.mul(a, b) == f.mul(b, a)
    assert f.div(f.mul(a, b), b) == a


@given(st.integers(min_value=0, max_value=255), st.integers(min_value=0, max_value=255),
       st.integers(min_value=0, max_value=255))
def test_gf256_associativity(a, b, c):
    f = Field(8)
    assert f.mul(f.mul(a, b), c) == f.mul(a, f.mul(b, c))


def test_all_default_polys_are_primitive():
    for m in DEFAULT_PRIMITIVE_POLYS:
        Field(m)  # constructor validates primitivity


def test_exp_table_period():
    f = field_new(5)
    assert np.array_equal(f.exp_table[: f.n], f.exp_table[f.n : 2 * f.n])
