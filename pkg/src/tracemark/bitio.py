"""Bit-string helpers.

Payload bits travel through the toolkit as lists of 0/1 ints, most
significant bit of each byte first.  Channels embed bit lists; the payload
layer works on bytes.  These helpers are the only place the two views meet.
"""

from __future__ import annotations

__all__ = [
    "bits_from_bytes",
    "bytes_from_bits",
    "int_to_bits",
    "bits_to_int",
    "parse_hex_payload",
]


def bits_from_bytes(data: bytes) -> list[int]:
    """Expand bytes into a bit list, MSB of each byte first."""
    out = []
    for b in data:
        for shift in range(7, -1, -1):
            out.append((b >> shift) & 1)
    return out


def bytes_from_bits(bits: list[int]) -> bytes:
    """Pack a bit list into bytes, zero-padding the final partial byte."""
    out = bytearray()
    acc = 0
    n = 0
    for bit in bits:
        acc = (acc << 1) | (bit & 1)
        n += 1
        if n == 8:
            out.append(acc)
            acc = 0
            n = 0
    if n:
        out.append(acc << (8 - n))
    return bytes(out)


def int_to_bits(value: int, width: int) -> list[int]:
    """Fixed-width big-endian bit list for a non-negative integer."""
    if value < 0:
        raise ValueError("value must be non-negative")
    if value >> width:
        raise ValueError(f"value {value} does not fit in {width} bits")
    return [(value >> shift) & 1 for shift in range(width - 1, -1, -1)]


def bits_to_int(bits: list[int]) -> int:
    value = 0
    for bit in bits:
        value = (value << 1) | (bit & 1)
    return value


def parse_hex_payload(text: str) -> bytes:
    """Parse the CLI payload notation, e.g. ``0xA6A3CA`` -> ``b'\\xa6\\xa3\\xca'``."""
    t = text.strip()
    if t.lower().startswith("0x"):
        t = t[2:]
    if not t or len(t) % 2:
        raise ValueError(f"hex payload must have an even digit count: {text!r}")
    return bytes.fromhex(t)
