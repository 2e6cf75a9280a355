"""Binary narrow-sense BCH codes and PinSketch set-difference sketches.

Codewords and received words are numpy uint8 arrays of 0/1 values where
index i holds the coefficient of x^i.  Decoding is syndrome-based:
Berlekamp-Massey for the error locator, Chien search for its roots, and a
final syndrome re-check so a "successful" decode always returns a true
codeword (possibly the wrong one beyond capacity; the commitment layer's
hash tag is what catches that).

The decode hot path is written as plain loops over int64 tables so numba
can compile it; the guessing attack decodes millions of words.  Without
numba the same functions run unmodified, just slower.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .galois import Field

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


# ---------------------------------------------------------------------------
# GF(2)[x] arithmetic on int-encoded polynomials (bit i = coefficient of x^i)
# ---------------------------------------------------------------------------

def gf2_degree(p: int) -> int:
    return p.bit_length() - 1


def gf2_mul(a: int, b: int) -> int:
    """Carry-less product of two GF(2) polynomials."""
    result = 0
    while b:
        if b & 1:
            result ^= a
        a <<= 1
        b >>= 1
    return result


def gf2_mod(a: int, b: int) -> int:
    """Remainder of a divided by b over GF(2)."""
    db = gf2_degree(b)
    while gf2_degree(a) >= db:
        a ^= b << (gf2_degree(a) - db)
    return a


def bits_to_int(bits: np.ndarray) -> int:
    acc = 0
    for i in range(len(bits) - 1, -1, -1):
        acc = (acc << 1) | int(bits[i])
    return acc


def int_to_bits(value: int, length: int) -> np.ndarray:
    out = np.zeros(length, dtype=np.uint8)
    for i in range(length):
        out[i] = (value >> i) & 1
    return out


# ---------------------------------------------------------------------------
# Decoder kernels (numba-compiled when available)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _bm_inplace(syn, exp, log, nf, sigma, prev, tmp):
    """Berlekamp-Massey over GF(2^m): fill sigma with the minimal LFSR for
    the syndrome sequence, return its degree L."""
    two_t = syn.shape[0]
    for i in range(two_t + 1):
        sigma[i] = 0
        prev[i] = 0
    sigma[0] = 1
    prev[0] = 1
    big_l = 0
    shift = 1
    b = 1
    for r in range(two_t):
        d = syn[r]
        for i in range(1, big_l + 1):
            si = sigma[i]
            sr = syn[r - i]
            if si != 0 and sr != 0:
                d ^= exp[(log[si] + log[sr]) % nf]
        if d == 0:
            shift += 1
            continue
        lc = (log[d] + nf - log[b]) % nf  # log of d / b
        if 2 * big_l <= r:
            for i in range(two_t + 1):
                tmp[i] = sigma[i]
            for i in range(two_t + 1 - shift):
                pi = prev[i]
                if pi != 0:
                    sigma[i + shift] ^= exp[(lc + log[pi]) % nf]
            for i in range(two_t + 1):
                prev[i] = tmp[i]
            b = d
            big_l = r + 1 - big_l
            shift = 1
        else:
            for i in range(two_t + 1 - shift):
                pi = prev[i]
                if pi != 0:
                    sigma[i + shift] ^= exp[(lc + log[pi]) % nf]
            shift += 1
    return big_l


@njit(cache=True)
def _chien_roots(sigma, big_l, exp, log, nf, out_pos):
    """Find positions p with sigma(alpha^-p) = 0; returns the root count."""
    count = 0
    for p in range(nf):
        acc = sigma[0]
        xe = nf - p if p > 0 else 0
        for i in range(1, big_l + 1):
            si = sigma[i]
            if si != 0:
                acc ^= exp[(log[si] + i * xe) % nf]
        if acc == 0:
            if count < out_pos.shape[0]:
                out_pos[count] = p
            count += 1
            if count > big_l:
                break
    return count


@njit(cache=True)
def _decode_batch_kernel(words, exp, log, nf, t, out_words, status):
    num_words, n = words.shape
    two_t = 2 * t
    syn = np.zeros(two_t, dtype=np.int64)
    sigma = np.zeros(two_t + 1, dtype=np.int64)
    prev = np.zeros(two_t + 1, dtype=np.int64)
    tmp = np.zeros(two_t + 1, dtype=np.int64)
    pos = np.zeros(t, dtype=np.int64)
    ones = np.zeros(n, dtype=np.int64)
    for w in range(num_words):
        n_ones = 0
        for i in range(n):
            out_words[w, i] = words[w, i]
            if words[w, i]:
                ones[n_ones] = i
                n_ones += 1
        all_zero = True
        for j in range(1, two_t + 1):
            s = 0
            for oi in range(n_ones):
                s ^= exp[(ones[oi] * j) % nf]
            syn[j - 1] = s
            if s != 0:
                all_zero = False
        if all_zero:
            status[w] = 1
            continue
        big_l = _bm_inplace(syn, exp, log, nf, sigma, prev, tmp)
        if big_l > t:
            status[w] = 0
            continue
        count = _chien_roots(sigma, big_l, exp, log, nf, pos)
        if count != big_l:
            status[w] = 0
            continue
        for c in range(count):
            out_words[w, pos[c]] ^= 1
        ok = True
        for j in range(1, two_t + 1):
            s = 0
            for i in range(n):
                if out_words[w, i]:
                    s ^= exp[(i * j) % nf]
            if s != 0:
                ok = False
                break
        status[w] = 1 if ok else 0
    return 0


@njit(cache=True)
def _sketch_batch_kernel(bits, exp, nf, t, out_syn):
    """Odd syndromes s_j = xor over set bits i of alpha^((i+1) j), j = 1,3,..2t-1.

    Bit position i corresponds to set element i+1 (elements are 1-based so
    that no element maps to alpha^0's exponent 0 ambiguously).
    """
    num_rows, n_bits = bits.shape
    for w in range(num_rows):
        for idx in range(t):
            j = 2 * idx + 1
            s = 0
            for i in range(n_bits):
                if bits[w, i]:
                    s ^= exp[((i + 1) * j) % nf]
            out_syn[w, idx] = s
    return 0


@njit(cache=True)
def _setdiff_decode_kernel(odd_syn, exp, log, nf, t, out_idx, out_count, status):
    """Recover symmetric-difference elements from odd syndromes of the
    difference.  Even syndromes follow from S_2j = S_j^2 in characteristic 2."""
    num_rows = odd_syn.shape[0]
    two_t = 2 * t
    syn = np.zeros(two_t, dtype=np.int64)
    sigma = np.zeros(two_t + 1, dtype=np.int64)
    prev = np.zeros(two_t + 1, dtype=np.int64)
    tmp = np.zeros(two_t + 1, dtype=np.int64)
    pos = np.zeros(t, dtype=np.int64)
    for w in range(num_rows):
        all_zero = True
        for idx in range(t):
            v = odd_syn[w, idx]
            syn[2 * idx] = v
            if v != 0:
                all_zero = False
        if all_zero:
            out_count[w] = 0
            status[w] = 1
            continue
        for j in range(2, two_t + 1, 2):
            v = syn[j // 2 - 1]
            syn[j - 1] = exp[(2 * log[v]) % nf] if v != 0 else 0
        big_l = _bm_inplace(syn, exp, log, nf, sigma, prev, tmp)
        if big_l > t:
            status[w] = 0
            continue
        count = _chien_roots(sigma, big_l, exp, log, nf, pos)
        if count != big_l:
            status[w] = 0
            continue
        # Cross-check: the recovered elements must reproduce the input odd
        # syndromes, otherwise this is a beyond-capacity artifact.
        ok = True
        for idx in range(t):
            j = 2 * idx + 1
            s = 0
            for c in range(count):
                p = pos[c]
                e = nf if p == 0 else p
                s ^= exp[(e * j) % nf]
            if s != odd_syn[w, idx]:
                ok = False
                break
        if not ok:
            status[w] = 0
            continue
        for c in range(count):
            p = pos[c]
            out_idx[w, c] = nf if p == 0 else p
        out_count[w] = count
        status[w] = 1
    return 0


# ---------------------------------------------------------------------------
# BCH codes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BchCode:
    """An (n, k) narrow-sense binary BCH code correcting t errors."""

    field: Field
    n: int
    k: int
    t: int
    generator_poly: int

    def __repr__(self) -> str:
        return f"BchCode(n={self.n}, k={self.k}, t={self.t}, m={self.field.m})"


def _cyclotomic_coset(j: int, n: int) -> list[int]:
    coset = []
    e = j % n
    while e not in coset:
        coset.append(e)
        e = (e * 2) % n
    return coset


def minimal_polynomial(field: Field, j: int) -> int:
    """Minimal polynomial over GF(2) of alpha^j, as an int-encoded polynomial."""
    coeffs = [1]
    for e in _cyclotomic_coset(j, field.n):
        root = field.alpha_pow(e)
        nxt = [0] * (len(coeffs) + 1)
        for i, c in enumerate(coeffs):
            nxt[i + 1] ^= c
            nxt[i] ^= field.mul(root, c)
        coeffs = nxt
    if any(c not in (0, 1) for c in coeffs):
        raise AssertionError("minimal polynomial has non-binary coefficients")
    return sum(c << i for i, c in enumerate(coeffs))


def bch_new(m: int, t: int, primitive_poly: int | None = None) -> BchCode:
    """Construct the narrow-sense BCH code of length 2^m - 1 correcting t errors.

    The generator is the LCM of the minimal polynomials of alpha^1..alpha^2t;
    in characteristic 2 only the odd powers contribute distinct factors.
    Raises if t leaves no room for information bits.
    """
    if t < 1:
        raise ValueError("t must be at least 1")
    field = Field(m, primitive_poly)
    n = field.n
    if 2 * t - 1 >= n:
        raise ValueError(f"t={t} too large for code length n={n}")
    gen = 1
    seen_leaders: set[int] = set()
    for j in range(1, 2 * t, 2):
        leader = min(_cyclotomic_coset(j, n))
        if leader in seen_leaders:
            continue
        seen_leaders.add(leader)
        gen = gf2_mul(gen, minimal_polynomial(field, j))
    degree = gf2_degree(gen)
    if degree >= n:
        raise ValueError(f"t={t} too large: generator degree {degree} leaves no information bits")
    if gf2_mod((1 << n) | 1, gen) != 0:
        raise AssertionError("generator does not divide x^n - 1")
    return BchCode(field=field, n=n, k=n - degree, t=t, generator_poly=gen)


def encode(code: BchCode, info_bits: np.ndarray) -> np.ndarray:
    """Systematic encoding: information bits occupy coordinates n-k..n-1."""
    info_bits = np.asarray(info_bits, dtype=np.uint8)
    if info_bits.shape != (code.k,):
        raise ValueError(f"expected {code.k} information bits, got shape {info_bits.shape}")
    shifted = bits_to_int(info_bits) << (code.n - code.k)
    remainder = gf2_mod(shifted, code.generator_poly)
    return int_to_bits(shifted ^ remainder, code.n)


def random_codeword(code: BchCode, rng: np.random.Generator) -> np.ndarray:
    """Uniform codeword: uniform information bits, then systematic encoding."""
    info = rng.integers(0, 2, size=code.k, dtype=np.uint8)
    return encode(code, info)


def syndromes(code: BchCode, word: np.ndarray) -> list[int]:
    """S_j = word(alpha^j) for j = 1..2t; all zero iff word is a codeword."""
    field = code.field
    out = []
    positions = np.flatnonzero(word)
    for j in range(1, 2 * code.t + 1):
        s = 0
        for i in positions:
            s ^= field.alpha_pow(int(i) * j)
        out.append(s)
    return out


def decode_batch(code: BchCode, words: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Decode each row of `words`; returns (ok, corrected).

    ok[i] is True iff row i decoded to a codeword (within t errors of one,
    or a beyond-capacity miscorrection that still lands on a codeword).
    Rows with ok[i] False hold the unmodified input.
    """
    words = np.ascontiguousarray(words, dtype=np.uint8)
    if words.ndim != 2 or words.shape[1] != code.n:
        raise ValueError(f"expected words of length n={code.n}")
    out = np.empty_like(words)
    status = np.zeros(words.shape[0], dtype=np.int8)
    _decode_batch_kernel(
        words, code.field.exp_table, code.field.log_table,
        np.int64(code.field.n), np.int64(code.t), out, status,
    )
    return status == 1, out


def decode(code: BchCode, received: np.ndarray) -> np.ndarray | None:
    """Decode one received word; None signals a decoding failure."""
    received = np.asarray(received, dtype=np.uint8)
    if received.shape != (code.n,):
        raise ValueError(f"expected a word of length n={code.n}")
    ok, out = decode_batch(code, received[None, :])
    return out[0] if ok[0] else None


# ---------------------------------------------------------------------------
# PinSketch: syndrome sketches for set difference over GF(2^m) \ {0}
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SetSketch:
    """t odd power-sum syndromes of a subset of {1 .. 2^m - 1}."""

    m: int
    t: int
    syndromes: tuple[int, ...]

    def __post_init__(self):
        if len(self.syndromes) != self.t:
            raise ValueError("sketch must carry exactly t syndromes")

    def xor(self, other: "SetSketch") -> "SetSketch":
        if (self.m, self.t) != (other.m, other.t):
            raise ValueError("sketch parameters differ")
        return SetSketch(self.m, self.t, tuple(a ^ b for a, b in zip(self.syndromes, other.syndromes)))


class PinSketch:
    """Set-difference sketching over the universe {1 .. 2^m - 1}.

    A length-n binary template maps into this universe by listing the
    1-based coordinates of its set bits, so recovering the symmetric
    difference of two supports recovers exactly the bit positions where the
    two templates disagree.
    """

    def __init__(self, m: int, t: int, primitive_poly: int | None = None):
        if t < 1:
            raise ValueError("t must be at least 1")
        self.field = Field(m, primitive_poly)
        self.m = m
        self.t = t
        if 2 * t > self.field.n:
            raise ValueError(f"t={t} too large for universe size {self.field.n}")

    def sketch(self, support) -> SetSketch:
        """Odd syndromes s_j = sum over elements i of alpha^(i*j), j = 1,3,..,2t-1."""
        raw = [int(i) for i in support]
        elems = sorted(set(raw))
        if len(elems) != len(raw):
            raise ValueError("support elements must be distinct")
        for i in elems:
            if not 1 <= i <= self.field.n:
                raise ValueError(f"support element {i} outside universe [1, {self.field.n}]")
        syn = []
        for j in range(1, 2 * self.t, 2):
            s = 0
            for i in elems:
                s ^= self.field.alpha_pow(i * j)
            syn.append(s)
        return SetSketch(self.m, self.t, tuple(syn))

    def sketch_bits_batch(self, bits: np.ndarray) -> np.ndarray:
        """Row-wise sketches of 0/1 templates (bit i = element i + 1)."""
        bits = np.ascontiguousarray(bits, dtype=np.uint8)
        if bits.ndim != 2:
            raise ValueError("expected a 2-d array of templates")
        if bits.shape[1] > self.field.n:
            raise ValueError("template longer than the sketch universe")
        out = np.zeros((bits.shape[0], self.t), dtype=np.int64)
        _sketch_batch_kernel(bits, self.field.exp_table, np.int64(self.field.n),
                             np.int64(self.t), out)
        return out

    def sketch_bits(self, bits: np.ndarray) -> SetSketch:
        syn = self.sketch_bits_batch(np.asarray(bits, dtype=np.uint8)[None, :])[0]
        return SetSketch(self.m, self.t, tuple(int(v) for v in syn))

    def recover_batch(self, sketch_a: SetSketch, odd_syn_b: np.ndarray):
        """Symmetric differences between A and many Bs given B's raw syndromes.

        Returns (ok, indices, counts): for rows with ok True, indices[row, :counts[row]]
        lists the elements of A xor B (only valid when the true difference
        has at most t elements; larger differences mostly fail, occasionally
        produce a wrong set that downstream hash checks reject).
        """
        if (sketch_a.m, sketch_a.t) != (self.m, self.t):
            raise ValueError("sketch parameters differ")
        odd_syn_b = np.ascontiguousarray(odd_syn_b, dtype=np.int64)
        diff = odd_syn_b ^ np.asarray(sketch_a.syndromes, dtype=np.int64)[None, :]
        out_idx = np.zeros((diff.shape[0], self.t), dtype=np.int64)
        out_count = np.zeros(diff.shape[0], dtype=np.int64)
        status = np.zeros(diff.shape[0], dtype=np.int8)
        _setdiff_decode_kernel(diff, self.field.exp_table, self.field.log_table,
                               np.int64(self.field.n), np.int64(self.t),
                               out_idx, out_count, status)
        return status == 1, out_idx, out_count

    def recover(self, sketch_a: SetSketch, support_b) -> set[int] | None:
        """A xor B from sketch(A) and the explicit set B; None on failure."""
        sketch_b = self.sketch(support_b)
        diff = np.asarray(sketch_a.xor(sketch_b).syndromes, dtype=np.int64)[None, :]
        out_idx = np.zeros((1, self.t), dtype=np.int64)
        out_count = np.zeros(1, dtype=np.int64)
        status = np.zeros(1, dtype=np.int8)
        _setdiff_decode_kernel(np.ascontiguousarray(diff), self.field.exp_table,
                               self.field.log_table, np.int64(self.field.n),
                               np.int64(self.t), out_idx, out_count, status)
        if status[0] != 1:
            return None
        return set(int(v) for v in out_idx[0, : out_count[0]])


def pinsketch_sketch(m: int, t: int, support) -> SetSketch:
    """Convenience wrapper: sketch a support set under fresh (m, t) parameters."""
    return PinSketch(m, t).sketch(support)


def pinsketch_recover(sketch_a: SetSketch, support_b) -> set[int] | None:
    """Convenience wrapper: recover the symmetric difference or None."""
    return PinSketch(sketch_a.m, sketch_a.t).recover(sketch_a, support_b)
