"""Payload construction, sealing, and error protection.

A payload travels through three representations before embedding:

    raw fields -> payload bytes p -> sealed p' = ciphertext || mac
               -> protected p'' = p' || parity

Sealing is encrypt-then-MAC; the MAC is verified before anything is
decrypted.  The parity layer wraps the Reed-Solomon engine and accepts
erasure positions from the extractor, which flags every bit it had to
guess.
"""

from __future__ import annotations

import hashlib
import hmac
import math
import secrets
import struct
from bisect import bisect_right
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import NamedTuple, Protocol

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from . import rs
from .bitio import bits_from_bytes, bits_to_int, bytes_from_bits, int_to_bits
from .errors import (
    AuthenticationFailure,
    ConfigurationError,
    EmbeddingCapacityError,
    MalformedPayload,
    RangeError,
)

__all__ = [
    "TimeFields",
    "TS_BITS",
    "pack_timestamp",
    "unpack_timestamp",
    "fields_to_datetime",
    "LogIndependentPayload",
    "LogDependentPayload",
    "Sealer",
    "SymmetricSealer",
    "seal",
    "open_sealed",
    "attach_ecc",
    "decode_ecc",
    "size_parity",
    "KeySet",
    "generate_keys",
    "save_keys",
    "load_keys",
    "KEY_FILE_MAGIC",
]


# --------------------------------------------------------------------------
# Timestamps

TS_BITS = {"unix32": 32, "iso38": 38, "iso33": 33}

# Field widths: year, day of year, hour, minute, second.  The second
# field reaches 60 so announced leap seconds survive the round trip.
_ISO38_WIDTHS = (12, 9, 5, 6, 6)
_ISO33_WIDTHS = (7, 9, 5, 6, 6)


class TimeFields(NamedTuple):
    year: int
    day_of_year: int
    hour: int
    minute: int
    second: int


def _check_range(field: str, value: int, lo: int, hi: int) -> None:
    if not lo <= value <= hi:
        raise RangeError(f"{field} {value} out of range [{lo}..{hi}]")


def _as_fields(t: datetime | TimeFields | tuple) -> TimeFields:
    if isinstance(t, datetime):
        return TimeFields(
            t.year, t.timetuple().tm_yday, t.hour, t.minute, t.second
        )
    return TimeFields(*t)


def _validate_iso(f: TimeFields, year_max: int) -> None:
    _check_range("year", f.year, 0, year_max)
    _check_range("day_of_year", f.day_of_year, 1, 366)
    _check_range("hour", f.hour, 0, 23)
    _check_range("minute", f.minute, 0, 59)
    _check_range("second", f.second, 0, 60)


def fields_to_datetime(f: TimeFields) -> datetime:
    """Calendar fields as an aware UTC datetime; refuses second 60."""
    if f.second == 60:
        raise ValueError("leap second has no datetime representation")
    base = datetime(f.year, 1, 1, tzinfo=timezone.utc)
    return base + timedelta(
        days=f.day_of_year - 1, hours=f.hour, minutes=f.minute, seconds=f.second
    )


def pack_timestamp(t: datetime | TimeFields | tuple | int, mode: str = "unix32") -> list[int]:
    """Encode a UTC time as the fixed-width bit string of ``mode``.

    ``unix32`` accepts a datetime (naive means UTC) or raw seconds;
    ``iso38``/``iso33`` pack each calendar component separately, which
    is what lets second 60 through.  ``iso33`` stores the year mod 100.
    """
    if mode == "unix32":
        if isinstance(t, int):
            seconds = t
        else:
            if not isinstance(t, datetime):
                f = _as_fields(t)
                _check_range("second", f.second, 0, 59)
                t = fields_to_datetime(f)
            if t.tzinfo is None:
                t = t.replace(tzinfo=timezone.utc)
            seconds = int(t.timestamp())
        _check_range("timestamp", seconds, 0, 0xFFFFFFFF)
        return int_to_bits(seconds, 32)
    if mode == "iso38":
        f = _as_fields(t)
        _validate_iso(f, 4095)
        values = f
        widths = _ISO38_WIDTHS
    elif mode == "iso33":
        f = _as_fields(t)
        f = f._replace(year=f.year % 100)
        _validate_iso(f, 99)
        values = f
        widths = _ISO33_WIDTHS
    else:
        raise ValueError(f"unknown timestamp mode {mode!r}")
    bits: list[int] = []
    for width, value in zip(widths, values):
        bits.extend(int_to_bits(value, width))
    return bits


def unpack_timestamp(bits: list[int], mode: str) -> datetime | TimeFields:
    """Inverse of :func:`pack_timestamp`; iso modes return raw fields."""
    if mode not in TS_BITS:
        raise ValueError(f"unknown timestamp mode {mode!r}")
    if len(bits) != TS_BITS[mode]:
        raise ValueError(f"{mode} needs {TS_BITS[mode]} bits, got {len(bits)}")
    if mode == "unix32":
        return datetime.fromtimestamp(bits_to_int(bits), tz=timezone.utc)
    widths = _ISO38_WIDTHS if mode == "iso38" else _ISO33_WIDTHS
    values = []
    at = 0
    for width in widths:
        values.append(bits_to_int(bits[at : at + width]))
        at += width
    return TimeFields(*values)


# --------------------------------------------------------------------------
# Payload layouts


@dataclass(frozen=True)
class LogIndependentPayload:
    """Identifies the recipient without consulting any server-side state.

    user id, a timestamp, and an 8-bit nonce; the nonce makes two
    downloads by the same user in the same second distinguishable and
    keeps the sealed form fresh.
    """

    user_id: int
    timestamp: datetime | TimeFields
    nonce: int
    ts_mode: str = "unix32"
    user_id_bits: int = 32

    def __post_init__(self) -> None:
        if self.ts_mode not in TS_BITS:
            raise ValueError(f"unknown timestamp mode {self.ts_mode!r}")
        _check_range("user_id", self.user_id, 0, 2**self.user_id_bits - 1)
        _check_range("nonce", self.nonce, 0, 255)

    @classmethod
    def build(
        cls,
        user_id: int,
        timestamp: datetime | TimeFields,
        *,
        ts_mode: str = "unix32",
        user_id_bits: int = 32,
        nonce: int | None = None,
    ) -> "LogIndependentPayload":
        if nonce is None:
            nonce = secrets.randbits(8)
        return cls(user_id, timestamp, nonce, ts_mode, user_id_bits)

    @property
    def bit_length(self) -> int:
        return self.user_id_bits + TS_BITS[self.ts_mode] + 8

    def to_bits(self) -> list[int]:
        return (
            int_to_bits(self.user_id, self.user_id_bits)
            + pack_timestamp(self.timestamp, self.ts_mode)
            + int_to_bits(self.nonce, 8)
        )

    def to_bytes(self) -> bytes:
        return bytes_from_bits(self.to_bits())

    @classmethod
    def from_bytes(
        cls, raw: bytes, *, ts_mode: str = "unix32", user_id_bits: int = 32
    ) -> "LogIndependentPayload":
        total = user_id_bits + TS_BITS[ts_mode] + 8
        if len(raw) != math.ceil(total / 8):
            raise MalformedPayload(
                f"expected {math.ceil(total / 8)} payload bytes, got {len(raw)}"
            )
        bits = bits_from_bytes(raw)[:total]
        user_id = bits_to_int(bits[:user_id_bits])
        ts = unpack_timestamp(
            bits[user_id_bits : user_id_bits + TS_BITS[ts_mode]], ts_mode
        )
        nonce = bits_to_int(bits[user_id_bits + TS_BITS[ts_mode] :])
        return cls(user_id, ts, nonce, ts_mode, user_id_bits)


@dataclass(frozen=True)
class LogDependentPayload:
    """A random identifier that is meaningless without the download log.

    Because the id carries no information by itself, it can be embedded
    unsealed on the capacity-starved channels.
    """

    download_id: int
    id_bits: int = 64

    def __post_init__(self) -> None:
        _check_range("download_id", self.download_id, 1, 2**self.id_bits - 1)

    def to_bytes(self) -> bytes:
        return bytes_from_bits(int_to_bits(self.download_id, self.id_bits))

    @classmethod
    def from_bytes(cls, raw: bytes, *, id_bits: int = 64) -> "LogDependentPayload":
        if len(raw) != math.ceil(id_bits / 8):
            raise MalformedPayload(
                f"expected {math.ceil(id_bits / 8)} payload bytes, got {len(raw)}"
            )
        return cls(bits_to_int(bits_from_bytes(raw)[:id_bits]), id_bits)


# --------------------------------------------------------------------------
# Sealing

DEFAULT_MAC_LEN = 8


class Sealer(Protocol):
    def seal(self, payload: bytes) -> bytes: ...

    def open(self, sealed: bytes) -> bytes: ...


@dataclass(frozen=True)
class SymmetricSealer:
    """AES-256-CTR plus truncated HMAC-SHA256, encrypt-then-MAC.

    The counter starts from a fixed zero block, so sealing is a pure
    function of (payload, keys): there is no room in the embedded form
    for an IV, and freshness comes from the payload nonce instead.  An
    asymmetric sealer (opening key held by a third party) can be swapped
    in anywhere a Sealer is accepted.
    """

    enc_key: bytes
    mac_key: bytes
    mac_len: int = DEFAULT_MAC_LEN

    def __post_init__(self) -> None:
        if len(self.enc_key) != 32:
            raise ConfigurationError("enc_key must be 32 bytes")
        if len(self.mac_key) != 32:
            raise ConfigurationError("mac_key must be 32 bytes")
        if self.enc_key == self.mac_key:
            raise ConfigurationError("enc_key and mac_key must differ")
        if not 4 <= self.mac_len <= 32:
            raise ConfigurationError("mac_len must be in [4, 32] bytes")

    def _keystream_xor(self, data: bytes) -> bytes:
        enc = Cipher(
            algorithms.AES(self.enc_key), modes.CTR(bytes(16))
        ).encryptor()
        return enc.update(data) + enc.finalize()

    def seal(self, payload: bytes) -> bytes:
        if not payload:
            raise MalformedPayload("cannot seal an empty payload")
        ciphertext = self._keystream_xor(payload)
        tag = hmac.new(self.mac_key, ciphertext, hashlib.sha256).digest()
        return ciphertext + tag[: self.mac_len]

    def open(self, sealed: bytes) -> bytes:
        if len(sealed) < self.mac_len + 1:
            raise MalformedPayload(
                f"sealed payload shorter than {self.mac_len + 1} bytes"
            )
        ciphertext, tag = sealed[: -self.mac_len], sealed[-self.mac_len :]
        want = hmac.new(self.mac_key, ciphertext, hashlib.sha256).digest()
        if not hmac.compare_digest(tag, want[: self.mac_len]):
            raise AuthenticationFailure("payload MAC verification failed")
        return self._keystream_xor(ciphertext)


def seal(payload: bytes, enc_key: bytes, mac_key: bytes, mac_len: int = DEFAULT_MAC_LEN) -> bytes:
    return SymmetricSealer(enc_key, mac_key, mac_len).seal(payload)


def open_sealed(sealed: bytes, enc_key: bytes, mac_key: bytes, mac_len: int = DEFAULT_MAC_LEN) -> bytes:
    return SymmetricSealer(enc_key, mac_key, mac_len).open(sealed)


# --------------------------------------------------------------------------
# Error protection


def _block_count(data_len: int, t: int) -> int:
    if t == 0:
        return 1
    cap = rs.MAX_BLOCK - t
    return max(1, math.ceil(data_len / cap))


def _block_sizes(data_len: int, nblocks: int) -> list[int]:
    base, rem = divmod(data_len, nblocks)
    return [base + 1] * rem + [base] * (nblocks - rem)


def attach_ecc(sealed: bytes, t: int) -> bytes:
    """Append ``t`` parity symbols per block; the data prefix is verbatim.

    Payloads too long for one 255-byte codeword are split into even
    blocks, each with its own ``t`` parity symbols, and the parities are
    concatenated after all the data so the protected form still starts
    with the sealed payload.
    """
    if t < 0:
        raise ValueError("parity count must be non-negative")
    if t >= rs.MAX_BLOCK:
        raise ValueError(f"parity count must be below {rs.MAX_BLOCK}")
    if t == 0:
        return bytes(sealed)
    nblocks = _block_count(len(sealed), t)
    if nblocks == 1:
        return rs.encode(sealed, t)
    parities = []
    at = 0
    for size in _block_sizes(len(sealed), nblocks):
        parities.append(rs.encode(sealed[at : at + size], t)[-t:])
        at += size
    return bytes(sealed) + b"".join(parities)


def _resolve_blocks(total_len: int, t: int) -> tuple[int, int]:
    """Recover (block count, data length) from the protected length."""
    for nblocks in range(1, total_len // t + 1):
        data_len = total_len - nblocks * t
        if data_len >= 1 and _block_count(data_len, t) == nblocks:
            return nblocks, data_len
    raise MalformedPayload(
        f"{total_len} bytes cannot be a protected payload with t={t}"
    )


def decode_ecc(protected: bytes, t: int, erase_pos: list[int] | None = None) -> bytes:
    """Strip and use the parity; ``erase_pos`` are known-bad byte offsets."""
    if t < 0:
        raise ValueError("parity count must be non-negative")
    if t == 0:
        return bytes(protected)
    nblocks, data_len = _resolve_blocks(len(protected), t)
    sizes = _block_sizes(data_len, nblocks)
    offsets = [0]
    for size in sizes:
        offsets.append(offsets[-1] + size)
    erasures: list[list[int]] = [[] for _ in range(nblocks)]
    for p in erase_pos or []:
        if not 0 <= p < len(protected):
            raise ValueError(f"erasure position {p} outside protected payload")
        if p < data_len:
            block = bisect_right(offsets, p) - 1
            erasures[block].append(p - offsets[block])
        else:
            q = p - data_len
            block = q // t
            erasures[block].append(sizes[block] + q % t)
    out = []
    for i, size in enumerate(sizes):
        codeword = (
            protected[offsets[i] : offsets[i] + size]
            + protected[data_len + i * t : data_len + (i + 1) * t]
        )
        out.append(rs.decode(codeword, t, erase_pos=erasures[i]))
    return b"".join(out)


def size_parity(touchable_count: int, sealed_len: int) -> int:
    """Largest parity count whose protected payload still fits.

    The linguistic channel needs one usable word per bit, so the budget
    is 8 * (sealed length + total parity) <= touchable_count, scanned
    from the most generous t downward.  The caller is expected to fall
    back to smaller values if a trial embedding still fails.
    """
    if sealed_len < 1:
        raise ValueError("sealed payload must be non-empty")
    if touchable_count < 0:
        raise ValueError("touchable count must be non-negative")
    start = min(touchable_count // 8 - sealed_len, rs.MAX_BLOCK - 1)
    for t in range(start, -1, -1):
        total = sealed_len + _block_count(sealed_len, t) * t
        if 8 * total <= touchable_count:
            return t
    raise EmbeddingCapacityError(
        f"{sealed_len} payload bytes do not fit in {touchable_count} usable positions"
    )


# --------------------------------------------------------------------------
# Key management

KEY_FILE_MAGIC = b"TRACEMARK-KEYS\x00\x00"


@dataclass(frozen=True)
class KeySet:
    enc_key: bytes
    mac_key: bytes
    graph_key: bytes


def generate_keys() -> KeySet:
    while True:
        keys = KeySet(
            secrets.token_bytes(32), secrets.token_bytes(32), secrets.token_bytes(32)
        )
        if keys.enc_key != keys.mac_key:
            return keys


def save_keys(path: str | Path, keys: KeySet) -> None:
    blob = KEY_FILE_MAGIC
    for key in (keys.enc_key, keys.mac_key, keys.graph_key):
        blob += struct.pack(">H", len(key)) + key
    Path(path).write_bytes(blob)


def load_keys(path: str | Path) -> KeySet:
    blob = Path(path).read_bytes()
    if not blob.startswith(KEY_FILE_MAGIC):
        raise ConfigurationError(f"{path} is not a key file")
    at = len(KEY_FILE_MAGIC)
    keys = []
    for _ in range(3):
        if at + 2 > len(blob):
            raise ConfigurationError(f"{path} is truncated")
        (length,) = struct.unpack(">H", blob[at : at + 2])
        at += 2
        if at + length > len(blob):
            raise ConfigurationError(f"{path} is truncated")
        keys.append(blob[at : at + length])
        at += length
    if at != len(blob):
        raise ConfigurationError(f"{path} has trailing data")
    return KeySet(*keys)
