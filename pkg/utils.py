"""Shared helpers: exact rational coercion, bitmask arithmetic, counting."""

from fractions import Fraction
from functools import lru_cache
from typing import Any, Iterable, Iterator, Sequence

from errors import ContractError


def to_fraction(val: Any) -> Fraction:
    """Coerce "p/q" strings, ints and Fractions to Fraction. Floats are refused."""
    if isinstance(val, Fraction):
        return val
    if isinstance(val, bool):
        raise ContractError(f"expected a rational, got boolean {val!r}")
    if isinstance(val, int):
        return Fraction(val)
    if isinstance(val, str):
        try:
            return Fraction(val.strip())
        except (ValueError, ZeroDivisionError):
            raise ContractError(f"not a rational: {val!r}")
    # numpy integers and other exact Rationals
    if hasattr(val, "numerator") and hasattr(val, "denominator") and not isinstance(val, float):
        return Fraction(int(val.numerator), int(val.denominator))
    raise ContractError(f"not an exact rational: {val!r} (write it as a \"p/q\" string)")


def fractions_of(values: Iterable[Any]) -> tuple[Fraction, ...]:
    return tuple(to_fraction(v) for v in values)


# --- Bitmasks (bit i = atom i) ---


def bits_of(mask: int) -> Iterator[int]:
    """Indices of set bits, ascending."""
    index = 0
    while mask:
        if mask & 1:
            yield index
        mask >>= 1
        index += 1


def mask_of(indices: Iterable[int]) -> int:
    mask = 0
    for i in indices:
        mask |= 1 << i
    return mask


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def lowest_bit(mask: int) -> int:
    return mask & -mask


def spread(counter: int, positions: Sequence[int]) -> int:
    """Map bit j of `counter` onto atom positions[j]."""
    mask = 0
    j = 0
    while counter:
        if counter & 1:
            mask |= 1 << positions[j]
        counter >>= 1
        j += 1
    return mask


def submasks_ascending(mask: int) -> Iterator[int]:
    """All submasks of `mask` in increasing binary-counter order over its bits."""
    positions = list(bits_of(mask))
    for counter in range(1 << len(positions)):
        yield spread(counter, positions)


def submasks_descending(mask: int) -> Iterator[int]:
    """All submasks of `mask` from `mask` itself down to 0."""
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


# --- Counting ---


@lru_cache(maxsize=None)
def bell_number(n: int) -> int:
    """Number of set partitions of an n-element set (Bell triangle)."""
    if n < 0:
        raise ContractError(f"bell_number needs n >= 0, got {n}")
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for value in row:
            nxt.append(nxt[-1] + value)
        row = nxt
    return row[0]
