# File: scripts/fixed_point.py (Q2FMM)
"""
Two's-complement fixed-point register formats.

A value v is stored as the integer k = v * 2^fraction_bits; the register holds
the low `width` bits of k. Signed formats spend one extra bit on the sign.
"""

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from scripts.errors import RepresentationError

Rounding = Literal["nearest_even", "floor"]


@dataclass(frozen=True)
class FixedPointFormat:
    integer_bits: int
    fraction_bits: int
    signed: bool = False

    def __post_init__(self):
        if self.integer_bits < 0 or self.fraction_bits < 0:
            raise RepresentationError(
                f"bit counts must be non-negative (integer_bits={self.integer_bits}, "
                f"fraction_bits={self.fraction_bits})"
            )
        if self.width < 1:
            raise RepresentationError("a fixed-point format needs at least one bit")

    @property
    def width(self) -> int:
        return self.integer_bits + self.fraction_bits + (1 if self.signed else 0)

    @property
    def ulp(self) -> float:
        return 2.0 ** -self.fraction_bits

    @property
    def max_int(self) -> int:
        return (1 << (self.integer_bits + self.fraction_bits)) - 1

    @property
    def min_int(self) -> int:
        return -(1 << (self.integer_bits + self.fraction_bits)) if self.signed else 0

    @property
    def max_value(self) -> float:
        return self.max_int * self.ulp

    @property
    def min_value(self) -> float:
        return self.min_int * self.ulp

    def representable(self, scaled: int) -> bool:
        return self.min_int <= scaled <= self.max_int

    # --- scaled integers ---
    def quantize(self, value: float, rounding: Rounding = "nearest_even") -> int:
        """Scaled integer for `value`; raises RepresentationError when out of range."""
        if not math.isfinite(value):
            raise RepresentationError(f"cannot encode non-finite value {value}")
        scaled = math.ldexp(value, self.fraction_bits)
        k = math.floor(scaled) if rounding == "floor" else round(scaled)
        if not self.representable(k):
            raise RepresentationError(
                f"value {value} is outside [{self.min_value}, {self.max_value}] "
                f"for format {self.describe()}"
            )
        return int(k)

    def to_pattern(self, scaled: int) -> int:
        return scaled & ((1 << self.width) - 1)

    def from_pattern(self, pattern: int) -> int:
        pattern &= (1 << self.width) - 1
        if self.signed and pattern >> (self.width - 1):
            return pattern - (1 << self.width)
        return pattern

    def wrap(self, scaled: int) -> int:
        """Two's-complement wrap of an arbitrary integer into this width."""
        return self.from_pattern(self.to_pattern(scaled))

    def wrap_array(self, scaled: np.ndarray) -> np.ndarray:
        mask = np.int64((1 << self.width) - 1)
        pattern = np.asarray(scaled, dtype=np.int64) & mask
        if self.signed:
            pattern = np.where(pattern >> (self.width - 1), pattern - (np.int64(1) << self.width), pattern)
        return pattern

    # --- values ---
    def encode(self, value: float, rounding: Rounding = "nearest_even") -> int:
        return self.to_pattern(self.quantize(value, rounding))

    def decode(self, pattern: int) -> float:
        return self.from_pattern(pattern) * self.ulp

    def describe(self) -> str:
        sign = "s" if self.signed else "u"
        return f"{sign}{self.integer_bits}.{self.fraction_bits}"


def integer_bits_for(count: int) -> int:
    """ceil(log2(count + 1)), exact for integers."""
    return max(int(count), 0).bit_length()


def fraction_bits_for(eps_b: float) -> int:
    """ceil(log2(1 / eps_b))."""
    if not 0.0 < eps_b <= 1.0:
        raise RepresentationError(f"eps_b must lie in (0, 1], got {eps_b}")
    return max(0, int(math.ceil(math.log2(1.0 / eps_b) - 1e-12)))


def format_for(bound: float, fraction_bits: int, signed: bool) -> FixedPointFormat:
    """Narrowest format holding every value of magnitude <= bound."""
    scaled = int(math.ceil(math.ldexp(abs(bound), fraction_bits) - 1e-9))
    total = integer_bits_for(scaled)
    floor_bits = 0 if (fraction_bits or signed) else 1
    return FixedPointFormat(integer_bits=max(total - fraction_bits, floor_bits),
                            fraction_bits=fraction_bits, signed=signed)
