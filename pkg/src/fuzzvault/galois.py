"""GF(2^m) arithmetic with log/exp tables.

Field elements are plain integers in [0, 2^m) whose bits are polynomial
coefficients over GF(2).  Multiplication and inversion go through the
discrete-log tables built at construction, which is plenty fast for code
lengths up to 1023 and keeps every operation branch-free and portable.
"""

from __future__ import annotations

import numpy as np

# Standard primitive polynomials, one per extension degree (LSB = constant
# term).  Primitivity of each entry is re-verified by the Field constructor.
DEFAULT_PRIMITIVE_POLYS: dict[int, int] = {
    3: 0b1011,                # x^3 + x + 1
    4: 0b10011,               # x^4 + x + 1
    5: 0b100101,              # x^5 + x^2 + 1
    6: 0b1000011,             # x^6 + x + 1
    7: 0b10001001,            # x^7 + x^3 + 1
    8: 0b100011101,           # x^8 + x^4 + x^3 + x^2 + 1
    9: 0b1000010001,          # x^9 + x^4 + 1
    10: 0b10000001001,        # x^10 + x^3 + 1
    11: 0b100000000101,       # x^11 + x^2 + 1
    12: 0b1000001010011,      # x^12 + x^6 + x^4 + x + 1
    13: 0b10000000011011,     # x^13 + x^4 + x^3 + x + 1
    14: 0b100010001000011,    # x^14 + x^10 + x^6 + x + 1
    15: 0b1000000000000011,   # x^15 + x + 1
    16: 0b10001000000001011,  # x^16 + x^12 + x^3 + x + 1
}


class Field:
    """The finite field GF(2^m) for 3 <= m <= 16.

    Immutable after construction; all operations are pure, so instances may
    be shared freely across threads.
    """

    def __init__(self, m: int, primitive_poly: int | None = None):
        if not 3 <= m <= 16:
            raise ValueError(f"extension degree m={m} outside supported range 3..16")
        if primitive_poly is None:
            primitive_poly = DEFAULT_PRIMITIVE_POLYS[m]
        if primitive_poly.bit_length() - 1 != m:
            raise ValueError(
                f"primitive polynomial degree {primitive_poly.bit_length() - 1} != m={m}"
            )
        self.m = m
        self.primitive_poly = primitive_poly
        self.order = 1 << m
        self.n = self.order - 1  # size of the multiplicative group

        exp = [0] * (2 * self.n)
        log = [0] * self.order
        x = 1
        for i in range(self.n):
            exp[i] = x
            if x == 1 and i > 0:
                # x (= alpha) returned to 1 early: its order divides i < 2^m-1.
                raise ValueError(
                    f"polynomial {primitive_poly:#b} is not primitive for m={m} "
                    f"(generator order {i})"
                )
            log[x] = i
            x <<= 1
            if x & self.order:
                x ^= primitive_poly
        if x != 1:
            raise ValueError(
                f"polynomial {primitive_poly:#b} is not primitive for m={m} "
                "(generator does not return to 1 after 2^m - 1 steps)"
            )
        for i in range(self.n, 2 * self.n):
            exp[i] = exp[i - self.n]
        self._exp = exp
        self._log = log
        # Copies for vectorized/numba consumers.
        self.exp_table = np.asarray(exp, dtype=np.int64)
        self.log_table = np.asarray(log, dtype=np.int64)

    def __repr__(self) -> str:
        return f"Field(m={self.m}, primitive_poly={self.primitive_poly:#b})"

    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        return self._exp[self._log[a] + self._log[b]]

    def inv(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError("zero has no multiplicative inverse")
        return self._exp[self.n - self._log[a]]

    def div(self, a: int, b: int) -> int:
        return self.mul(a, self.inv(b))

    def pow(self, a: int, e: int) -> int:
        if a == 0:
            if e == 0:
                return 1
            if e < 0:
                raise ZeroDivisionError("zero to a negative power")
            return 0
        return self._exp[(self._log[a] * e) % self.n]

    def alpha_pow(self, e: int) -> int:
        """alpha^e for the generator alpha = x."""
        return self._exp[e % self.n]

    def log(self, a: int) -> int:
        if a == 0:
            raise ValueError("log of zero is undefined")
        return self._log[a]


def field_new(m: int, primitive_poly: int | None = None) -> Field:
    """Build GF(2^m), rejecting reducible or non-primitive moduli."""
    return Field(m, primitive_poly)


def poly_eval(field: Field, coeffs, x: int) -> int:
    """Evaluate sum(coeffs[i] * x^i) by Horner's rule; coeffs[i] multiplies x^i."""
    acc = 0
    for c in reversed(coeffs):
        acc = field.mul(acc, x) ^ c
    return acc
