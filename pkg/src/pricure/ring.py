"""Arithmetic in the integer quotient ring mod a prime, plus fixed-point encoding.

All protocol values live in [0, q) for a prime modulus q.  Tensors are numpy
``uint64`` arrays; every operation here is pure.  Products are computed without
intermediate overflow by splitting operands into 21-bit limbs, so exact matrix
multiplication stays in fast int64 numpy kernels even for a 61-bit modulus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Mersenne prime 2^61 - 1: fits a 64-bit word, products fit three 21-bit limbs.
DEFAULT_PRIME = 2**61 - 1
DEFAULT_SCALE = 100

_LIMB_BITS = 21
_LIMB_MASK = (1 << _LIMB_BITS) - 1
# Partial limb products are < 2^42; int64 accumulation is exact while
# inner_dim * 2^42 < 2^63.
_MAX_INNER_DIM = 1 << 20


class RingError(Exception):
    """Base class for ring arithmetic failures."""


class ModulusMismatchError(RingError):
    """Operands belong to different rings."""


class EncodingRangeError(RingError):
    """A real value does not fit the centered fixed-point range."""


def _is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, valid for all n < 3.3e24."""
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class RingModulus:
    """A prime modulus q < 2^62 and the vectorized arithmetic under it."""

    q: int = DEFAULT_PRIME

    def __post_init__(self):
        if not (2 < self.q < 2**62):
            raise RingError(f"modulus must be a prime below 2^62, got {self.q}")
        if not _is_prime(self.q):
            raise RingError(f"modulus {self.q} is not prime")

    # -- canonicalization ---------------------------------------------------

    def as_array(self, values) -> np.ndarray:
        arr = np.asarray(values, dtype=np.uint64)
        if arr.size and int(arr.max()) >= self.q:
            raise RingError("value outside [0, q)")
        return arr

    def reduce(self, values) -> np.ndarray:
        """Reduce arbitrary nonnegative integers into [0, q)."""
        arr = np.asarray(values)
        if arr.dtype == object:
            return (arr % self.q).astype(np.uint64)
        return (arr.astype(np.uint64) % np.uint64(self.q)).astype(np.uint64)

    def from_signed(self, values) -> np.ndarray:
        """Map signed integers onto their canonical representatives."""
        arr = np.asarray(values)
        if arr.dtype == object:
            return (arr % self.q).astype(np.uint64)
        # numpy mod takes the sign of the divisor, so the result is in [0, q)
        return (arr.astype(np.int64) % np.int64(self.q)).astype(np.uint64)

    def centered(self, values) -> np.ndarray:
        """Inverse of reduction on (-q/2, q/2]: the signed representative."""
        arr = self.as_array(values)
        half = np.uint64((self.q - 1) // 2)
        signed = arr.astype(np.int64)
        return np.where(arr > half, signed - np.int64(self.q), signed)

    # -- arithmetic ---------------------------------------------------------

    def _check(self, other: "RingModulus"):
        if self.q != other.q:
            raise ModulusMismatchError(f"modulus mismatch: {self.q} vs {other.q}")

    def add(self, a, b) -> np.ndarray:
        a, b = self.as_array(a), self.as_array(b)
        return (a + b) % np.uint64(self.q)  # sums stay below 2^63

    def sub(self, a, b) -> np.ndarray:
        a, b = self.as_array(a), self.as_array(b)
        return (a + (np.uint64(self.q) - b)) % np.uint64(self.q)

    def neg(self, a) -> np.ndarray:
        a = self.as_array(a)
        return (np.uint64(self.q) - a) % np.uint64(self.q)

    def mul(self, a, b) -> np.ndarray:
        """Element-wise product, exact via arbitrary-precision intermediates."""
        a, b = self.as_array(a), self.as_array(b)
        prod = (a.astype(object) * b.astype(object)) % self.q
        return np.asarray(prod, dtype=np.uint64)

    def scale_by(self, a, c: int) -> np.ndarray:
        """Multiply a tensor by a public integer constant."""
        a = self.as_array(a)
        c = c % self.q
        return np.asarray((a.astype(object) * c) % self.q, dtype=np.uint64)

    def matmul(self, a, b) -> np.ndarray:
        """Exact 2-D matrix product mod q via 21-bit limb decomposition."""
        a, b = self.as_array(a), self.as_array(b)
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise RingError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        if a.shape[1] > _MAX_INNER_DIM:
            raise RingError(f"inner dimension {a.shape[1]} exceeds overflow-safe bound")
        nlimbs = max(1, -(-(self.q - 1).bit_length() // _LIMB_BITS))
        a_limbs = [((a >> np.uint64(_LIMB_BITS * i)) & np.uint64(_LIMB_MASK)).astype(np.int64)
                   for i in range(nlimbs)]
        b_limbs = [((b >> np.uint64(_LIMB_BITS * i)) & np.uint64(_LIMB_MASK)).astype(np.int64)
                   for i in range(nlimbs)]
        total = np.zeros((a.shape[0], b.shape[1]), dtype=object)
        for i, al in enumerate(a_limbs):
            for j, bl in enumerate(b_limbs):
                partial = al @ bl  # exact in int64 by the inner-dim bound
                total += partial.astype(object) << (_LIMB_BITS * (i + j))
        return (total % self.q).astype(np.uint64)

    def uniform(self, rng: np.random.Generator, shape=()) -> np.ndarray:
        return rng.integers(0, self.q, size=shape, dtype=np.uint64)


@dataclass(frozen=True)
class RingElement:
    """A single canonical ring value; scalar convenience over RingModulus."""

    value: int
    modulus: RingModulus = field(default_factory=RingModulus)

    def __post_init__(self):
        if not 0 <= self.value < self.modulus.q:
            raise RingError(f"value {self.value} outside [0, {self.modulus.q})")

    def _coerce(self, other) -> "RingElement":
        if isinstance(other, RingElement):
            self.modulus._check(other.modulus)
            return other
        return RingElement(other % self.modulus.q, self.modulus)

    def __add__(self, other):
        other = self._coerce(other)
        return RingElement((self.value + other.value) % self.modulus.q, self.modulus)

    def __sub__(self, other):
        other = self._coerce(other)
        return RingElement((self.value - other.value) % self.modulus.q, self.modulus)

    def __mul__(self, other):
        other = self._coerce(other)
        return RingElement((self.value * other.value) % self.modulus.q, self.modulus)

    def centered(self) -> int:
        """Signed representative in (-q/2, q/2]."""
        q = self.modulus.q
        return self.value if self.value <= (q - 1) // 2 else self.value - q


@dataclass(frozen=True)
class FixedPointCodec:
    """Maps reals to ring integers at a fixed decimal scale.

    Encoding truncates toward zero: with the default scale of 100, the value
    0.456 becomes 45.  A small snap (6 decimal places) absorbs binary float
    noise so that e.g. 0.29 * 100 == 28.999999999999996 still encodes to 29.
    """

    modulus: RingModulus = field(default_factory=RingModulus)
    scale: int = DEFAULT_SCALE

    def __post_init__(self):
        if self.scale < 1:
            raise RingError("scale must be a positive integer")

    @property
    def limit(self) -> float:
        """Largest representable magnitude (exclusive)."""
        return self.modulus.q / (2 * self.scale)

    def encode(self, x):
        arr = np.asarray(x, dtype=np.float64)
        if np.any(np.abs(arr) >= self.limit):
            raise EncodingRangeError(f"magnitude >= {self.limit} not representable")
        units = np.trunc(np.round(arr * self.scale, 6)).astype(np.int64)
        out = self.modulus.from_signed(units)
        return int(out) if np.isscalar(x) or arr.ndim == 0 else out

    def decode(self, a):
        arr = self.modulus.centered(np.asarray(a, dtype=np.uint64))
        out = arr.astype(np.float64) / self.scale
        return float(out) if out.ndim == 0 else out

    def from_units(self, units) -> np.ndarray:
        """Exact path for integer fixed-point units (e.g. parsed decimals)."""
        return self.modulus.from_signed(np.asarray(units))

    def to_units(self, a):
        """Signed fixed-point units of a ring tensor."""
        return self.modulus.centered(np.asarray(a, dtype=np.uint64))


def centered_lift(value: int, modulus: RingModulus) -> int:
    """Signed representative of a canonical value, as a plain int."""
    return RingElement(value % modulus.q, modulus).centered()
