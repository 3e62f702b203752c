"""GF(2) bit words and lower-triangular Toeplitz arithmetic.

A bit word ``b_1 b_2 ... b_n`` (``b_1`` the most significant level) is the
polynomial ``b_1 + b_2 z + ... + b_n z^(n-1)`` over GF(2).  Multiplying by a
lower-triangular Toeplitz matrix whose first column is ``c`` is the same as
multiplying polynomials ``c(z) y(z)`` and keeping the ``n`` lowest
coefficients.  Everything here works on that representation: a word is
stored as a Python int whose bit ``i - 1`` holds level ``b_i``.

The raw helpers (``clmul_trunc``, ``poly_inverse``) accept either Python
ints or numpy unsigned integer arrays, so the same code path drives both
single protocol runs and vectorized enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

__all__ = [
    "BitVec",
    "LtToeplitz",
    "EMPTY_KEY",
    "clmul_trunc",
    "poly_inverse",
    "t_lt",
    "t_lt_inv",
    "identity",
    "mat_vec",
    "mat_mat",
    "truncate",
    "invert",
]


def _mask(n: int) -> int:
    return (1 << n) - 1


def clmul_trunc(a, b, n: int):
    """Carry-less product of ``a`` and ``b`` reduced mod ``z^n``.

    Works elementwise on numpy ``uint64`` arrays as well as on ints
    (``n <= 64`` in the array case).
    """
    mask = _mask(n)
    acc = a & 0
    for i in range(n):
        bit = (b >> i) & 1
        acc ^= (a << i) & (0 - bit)
    return acc & mask


def poly_inverse(a: int, n: int) -> int:
    """Inverse of ``a`` modulo ``z^n`` over GF(2); ``a`` must have constant term 1."""
    if not a & 1:
        raise ZeroDivisionError("polynomial with zero constant term is not invertible")
    # Newton iteration: inv <- inv * (2 - a*inv) == inv * a * inv over GF(2).
    inv, prec = 1, 1
    while prec < n:
        prec = min(2 * prec, n)
        inv = clmul_trunc(clmul_trunc(inv, inv, prec), a & _mask(prec), prec)
    return inv & _mask(n)


@dataclass(frozen=True, slots=True)
class BitVec:
    """Finite binary word, most significant level first.

    ``value`` packs the word as a polynomial: bit ``i - 1`` of ``value`` is
    level ``b_i``.  Use :meth:`from_bits` to build one from a bit sequence.
    """

    length: int
    value: int

    def __post_init__(self):
        if self.length < 1:
            raise ValueError(f"BitVec length must be >= 1, got {self.length}")
        if self.value < 0 or self.value >> self.length:
            raise ValueError(f"value {self.value:#x} does not fit in {self.length} bits")

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "BitVec":
        bits = tuple(bits)
        value = 0
        for i, b in enumerate(bits):
            if b not in (0, 1):
                raise ValueError(f"bit {i} is {b!r}, expected 0 or 1")
            value |= b << i
        return cls(len(bits), value)

    @classmethod
    def unit(cls, n: int) -> "BitVec":
        """The pilot word ``e_1 = [1, 0, ..., 0]``."""
        return cls(n, 1)

    @classmethod
    def zeros(cls, n: int) -> "BitVec":
        return cls(n, 0)

    @classmethod
    def from_hex(cls, text: str) -> "BitVec":
        """Inverse of :meth:`to_hex` (``"<len>:<hex>"``)."""
        length, _, digits = text.partition(":")
        n = int(length)
        if n == 0:
            return EMPTY_KEY
        msb = int(digits, 16) if digits else 0
        return cls.from_bits((msb >> (n - 1 - i)) & 1 for i in range(n))

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple((self.value >> i) & 1 for i in range(self.length))

    def __len__(self) -> int:
        return self.length

    def __getitem__(self, i):
        return self.bits[i]

    def __iter__(self):
        return iter(self.bits)

    def to_int_msb(self) -> int:
        """The word read as a binary number with ``b_1`` as the top bit."""
        out = 0
        for b in self.bits:
            out = (out << 1) | b
        return out

    def to_hex(self) -> str:
        """``"<len>:<hex>"`` with the word read MSB-first."""
        if self.length == 0:
            return "0:"
        width = (self.length + 3) // 4
        return f"{self.length}:{self.to_int_msb():0{width}x}"

    def concat(self, other: "BitVec") -> "BitVec":
        if other.length == 0:
            return self
        if self.length == 0:
            return other
        return BitVec(self.length + other.length, self.value | (other.value << self.length))

    def __str__(self) -> str:
        return "".join(map(str, self.bits)) or "<empty>"


def _empty() -> BitVec:
    v = object.__new__(BitVec)
    object.__setattr__(v, "length", 0)
    object.__setattr__(v, "value", 0)
    return v


#: Zero-length key.  Only protocol-level code produces it; ``truncate``
#: never returns it.
EMPTY_KEY = _empty()


@dataclass(frozen=True, slots=True)
class LtToeplitz:
    """Square lower-triangular Toeplitz matrix over GF(2), kept as its first column."""

    first_col: BitVec

    @property
    def dim(self) -> int:
        return self.first_col.length

    @property
    def invertible(self) -> bool:
        return bool(self.first_col.value & 1)

    def entry(self, i: int, j: int) -> int:
        """Entry at 1-based row ``i``, column ``j``."""
        if not (1 <= i <= self.dim and 1 <= j <= self.dim):
            raise IndexError((i, j))
        return self.first_col.bits[i - j] if i >= j else 0


def t_lt(x: BitVec) -> LtToeplitz:
    return LtToeplitz(x)


def t_lt_inv(X: LtToeplitz) -> BitVec:
    return X.first_col


def identity(n: int) -> LtToeplitz:
    return LtToeplitz(BitVec.unit(n))


def mat_vec(X: LtToeplitz, y: BitVec) -> BitVec:
    if X.dim != y.length:
        raise ValueError(f"dimension mismatch: matrix {X.dim} vs vector {y.length}")
    return BitVec(y.length, clmul_trunc(X.first_col.value, y.value, y.length))


def mat_mat(X: LtToeplitz, Y: LtToeplitz) -> LtToeplitz:
    if X.dim != Y.dim:
        raise ValueError(f"dimension mismatch: {X.dim} vs {Y.dim}")
    return LtToeplitz(mat_vec(X, Y.first_col))


def truncate(x: BitVec, m: int) -> BitVec:
    """Keep the ``m`` most significant levels of ``x``."""
    if m < 1:
        raise ValueError(f"truncation length must be >= 1, got {m}")
    if m > x.length:
        raise ValueError(f"cannot truncate a {x.length}-bit word to {m} bits")
    return BitVec(m, x.value & _mask(m))


def invert(X: LtToeplitz) -> LtToeplitz:
    if not X.invertible:
        raise ZeroDivisionError("lower-triangular Toeplitz matrix with zero diagonal is singular")
    return LtToeplitz(BitVec(X.dim, poly_inverse(X.first_col.value, X.dim)))

