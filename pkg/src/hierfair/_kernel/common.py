"""Bits and errors shared by the exchange-graph backends."""

from __future__ import annotations


class NonRedundancyError(ValueError):
    """A bundle holds more items than its owner's valuation can use."""


def iter_bits(mask: int):
    """Yield set bit positions of `mask` in ascending order."""
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def mask_of(items) -> int:
    out = 0
    for g in items:
        out |= 1 << g
    return out


def lowest_bit(mask: int) -> int:
    return (mask & -mask).bit_length() - 1
