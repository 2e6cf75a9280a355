import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fuzzvault import ecc
from fuzzvault.galois import Field, poly_eval


@pytest.fixture(scope="module")
def bch_15_7():
    return ecc.bch_new(4, 2)


def brute_force_min_poly(field: Field, element: int) -> int:
    """Lowest-degree binary polynomial with the element as a root."""
    for degree in range(1, field.m + 1):
        for mask in range(1 << degree):
            candidate = mask | (1 << degree)
            coeffs = [(candidate >> i) & 1 for i in range(degree + 1)]
            if poly_eval(field, coeffs, element) == 0:
                return candidate
    raise AssertionError("no minimal polynomial found")


def all_codewords(code: ecc.BchCode) -> np.ndarray:
    words = np.zeros((1 << code.k, code.n), dtype=np.uint8)
    for i in range(1 << code.k):
        info = np.array([(i >> j) & 1 for j in range(code.k)], dtype=np.uint8)
        words[i] = ecc.encode(code, info)
    return words


def test_bch_15_7_construction(bch_15_7):
    code = bch_15_7
    assert (code.n, code.k, code.t) == (15, 7, 2)
    field = code.field
    # generator = lcm of the minimal polynomials of alpha and alpha^3,
    # cross-checked against brute-force minimal polynomials
    m1 = brute_force_min_poly(field, field.alpha_pow(1))
    m3 = brute_force_min_poly(field, field.alpha_pow(3))
    assert m1 != m3
    assert code.generator_poly == ecc.gf2_mul(m1, m3)


def test_bch_15_11_is_hamming():
    code = ecc.bch_new(4, 1)
    assert (code.n, code.k) == (15, 11)
    assert code.generator_poly == brute_force_min_poly(code.field, 2)


def test_bch_127_constructions():
    # the threshold-calibrated t values land in the one-information-bit regime
    for t, expected_k in ((10, 64), (31, 8), (40, 1), (43, 1)):
        code = ecc.bch_new(7, t)
        assert code.n == 127 and code.k == expected_k
        assert ecc.gf2_mod((1 << 127) | 1, code.generator_poly) == 0


def test_bch_t_too_large():
    with pytest.raises(ValueError):
        ecc.bch_new(4, 8)


def test_encode_zero_and_linearity(bch_15_7):
    code = bch_15_7
    zero = ecc.encode(code, np.zeros(7, dtype=np.uint8))
    assert not zero.any()
    rng = np.random.default_rng(0)
    for _ in range(50):
        i1 = rng.integers(0, 2, 7, dtype=np.uint8)
        i2 = rng.integers(0, 2, 7, dtype=np.uint8)
        assert np.array_equal(ecc.encode(code, i1) ^ ecc.encode(code, i2),
                              ecc.encode(code, i1 ^ i2))


def test_encode_syndromes_vanish(bch_15_7):
    rng = np.random.default_rng(1)
    for _ in range(100):
        cw = ecc.random_codeword(bch_15_7, rng)
        assert all(s == 0 for s in ecc.syndromes(bch_15_7, cw))


def test_encode_wrong_length(bch_15_7):
    with pytest.raises(ValueError):
        ecc.encode(bch_15_7, np.zeros(8, dtype=np.uint8))


def test_random_codeword_deterministic(bch_15_7):
    a = ecc.random_codeword(bch_15_7, np.random.default_rng(7))
    b = ecc.random_codeword(bch_15_7, np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_random_codeword_bit_marginals(bch_15_7):
    rng = np.random.default_rng(2)
    total = np.zeros(15)
    n_draws = 10_000
    for _ in range(n_draws):
        total += ecc.random_codeword(bch_15_7, rng)
    # each coordinate marginal is 1/2 over the code; 5 sigma of a fair coin
    sigma = 0.5 / np.sqrt(n_draws)
    assert np.all(np.abs(total / n_draws - 0.5) < 5 * sigma)


def test_decode_codewords_unchanged(bch_15_7):
    words = all_codewords(bch_15_7)
    ok, out = ecc.decode_batch(bch_15_7, words)
    assert ok.all()
    assert np.array_equal(out, words)


def test_decode_all_correctable_patterns(bch_15_7):
    """Exhaustive: every codeword with every weight <= 2 error pattern."""
    code = bch_15_7
    words = all_codewords(code)
    patterns = [np.zeros(15, dtype=np.uint8)]
    for i in range(15):
        e = np.zeros(15, dtype=np.uint8)
        e[i] = 1
        patterns.append(e)
        for j in range(i + 1, 15):
            e2 = e.copy()
            e2[j] = 1
            patterns.append(e2)
    patterns = np.stack(patterns)
    for cw in words[:: 8]:  # every 8th codeword keeps this quick; acceptance covers all
        received = cw[None, :] ^ patterns
        ok, out = ecc.decode_batch(code, received)
        assert ok.all()
        assert np.all(out == cw[None, :])


def test_decode_matches_brute_force_nearest(bch_15_7):
    """Sampled oracle equivalence; the full 2^15 sweep runs in acceptance."""
    code = bch_15_7
    words = all_codewords(code)
    word_ints = words.astype(np.uint16) @ (1 << np.arange(15, dtype=np.uint16))
    rng = np.random.default_rng(3)
    received = rng.integers(0, 2, size=(3000, 15), dtype=np.uint8)
    ok, out = ecc.decode_batch(code, received)
    rec_ints = received.astype(np.uint16) @ (1 << np.arange(15, dtype=np.uint16))
    for row in range(received.shape[0]):
        dists = [bin(int(rec_ints[row]) ^ int(w)).count("1") for w in word_ints]
        best = min(dists)
        if best <= code.t:
            assert ok[row]
            assert np.array_equal(out[row], words[int(np.argmin(dists))])
        else:
            assert not ok[row]


def test_decode_beyond_capacity_round_trip_n127():
    code = ecc.bch_new(7, 43)
    rng = np.random.default_rng(4)
    n_trials = 300
    cws = np.stack([ecc.random_codeword(code, rng) for _ in range(n_trials)])
    errs = np.zeros_like(cws)
    for i in range(n_trials):
        w = int(rng.integers(0, code.t + 1))
        errs[i, rng.choice(code.n, size=w, replace=False)] = 1
    ok, out = ecc.decode_batch(code, cws ^ errs)
    assert ok.all()
    assert np.array_equal(out, cws)


# ---------------------------------------------------------------------------
# PinSketch
# ---------------------------------------------------------------------------

def test_sketch_of_empty_set_is_zero():
    ps = ecc.PinSketch(4, 3)
    assert all(s == 0 for s in ps.sketch(set()).syndromes)


def test_sketch_single_element_matches_powers():
    ps = ecc.PinSketch(4, 3)
    f = ps.field
    for i in (1, 5, 15):
        sk = ps.sketch({i})
        for idx, j in enumerate(range(1, 2 * ps.t, 2)):
            assert sk.syndromes[idx] == f.alpha_pow(i * j)


@settings(max_examples=60)
@given(st.sets(st.integers(min_value=1, max_value=15)),
       st.sets(st.integers(min_value=1, max_value=15)))
def test_sketch_linearity_small_universe(a, b):
    ps = ecc.PinSketch(4, 4)
    combined = ps.sketch(a).xor(ps.sketch(b))
    assert combined.syndromes == ps.sketch(a ^ b).syndromes


def test_recover_identical_sets():
    ps = ecc.PinSketch(8, 10)
    a = {3, 17, 99, 255}
    assert ps.recover(ps.sketch(a), a) == set()


def test_recover_randomized_within_capacity():
    ps = ecc.PinSketch(8, 12)
    rng = np.random.default_rng(5)
    for _ in range(200):
        universe = np.arange(1, 256)
        a = set(rng.choice(universe, size=rng.integers(0, 120), replace=False).tolist())
        b = set(a)
        # apply up to t element flips
        flips = rng.choice(universe, size=rng.integers(0, ps.t + 1), replace=False)
        for x in flips.tolist():
            b ^= {x}
        assert len(a ^ b) <= ps.t
        assert ps.recover(ps.sketch(a), b) == a ^ b


def test_recover_beyond_capacity_flagged():
    """Differences of t+1 elements must fail or recover a wrong set, never
    silently the right one with wrong size; the hash layer catches wrong sets."""
    ps = ecc.PinSketch(8, 5)
    rng = np.random.default_rng(6)
    outcomes = {"fail": 0, "wrong": 0, "correct": 0}
    for _ in range(100):
        a = set(rng.choice(np.arange(1, 256), size=40, replace=False).tolist())
        others = [x for x in range(1, 256) if x not in a]
        diff = set(np.random.default_rng(int(rng.integers(1 << 30))).choice(
            others, size=ps.t + 1, replace=False).tolist())
        b = a ^ diff
        result = ps.recover(ps.sketch(a), b)
        if result is None:
            outcomes["fail"] += 1
        elif result == diff:
            outcomes["correct"] += 1
        else:
            outcomes["wrong"] += 1
    assert outcomes["correct"] == 0
    assert outcomes["fail"] > 0


def test_sketch_rejects_bad_elements():
    ps = ecc.PinSketch(4, 2)
    with pytest.raises(ValueError):
        ps.sketch({0, 3})
    with pytest.raises(ValueError):
        ps.sketch({16})
    with pytest.raises(ValueError):
        ps.sketch([3, 3])


def test_sketch_bits_matches_set_form():
    ps = ecc.PinSketch(8, 6)
    rng = np.random.default_rng(8)
    bits = rng.integers(0, 2, size=128, dtype=np.uint8)
    support = {int(i) + 1 for i in np.flatnonzero(bits)}
    assert ps.sketch_bits(bits).syndromes == ps.sketch(support).syndromes
