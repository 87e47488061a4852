"""Minimal TrueType reader/writer: just enough to permute a cmap.

Handles sfnt files with a format-4 (segment-delta) character map, the
case every PDF-embedded Latin subset falls into.  Everything else about
the font (glyf, hmtx, metrics) is carried through byte-identical, which
is exactly what keeps the patched font rendering identically: glyph ids
and their outlines/advances never move, only the code-to-glyph table.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

__all__ = ["SfntFont", "rebuild_cmap_format4"]

_SFNT_TRUETYPE = 0x00010000
_CHECKSUM_MAGIC = 0xB1B0AFBA


def _checksum(data: bytes) -> int:
    if len(data) % 4:
        data += bytes(4 - len(data) % 4)
    total = 0
    for (word,) in struct.iter_unpack(">I", data):
        total = (total + word) & 0xFFFFFFFF
    return total


@dataclass
class SfntFont:
    """A parsed font: raw bytes plus the table directory."""

    raw: bytes
    scaler: int
    tables: dict[bytes, tuple[int, int]]  # tag -> (offset, length)
    table_order: list[bytes]

    @classmethod
    def from_bytes(cls, raw: bytes) -> "SfntFont":
        if len(raw) < 12:
            raise ValueError("not an sfnt font: too short")
        scaler, num_tables = struct.unpack(">IH", raw[:6])
        if scaler not in (_SFNT_TRUETYPE, 0x74727565):  # 'true'
            raise ValueError(f"unsupported sfnt scaler 0x{scaler:08X}")
        tables = {}
        order = []
        for i in range(num_tables):
            tag, _, offset, length = struct.unpack_from(">4sIII", raw, 12 + 16 * i)
            if offset + length > len(raw):
                raise ValueError(f"table {tag!r} overruns the file")
            tables[tag] = (offset, length)
            order.append(tag)
        return cls(raw, scaler, tables, order)

    def table(self, tag: bytes) -> bytes:
        offset, length = self.tables[tag]
        return self.raw[offset : offset + length]

    # -- character map ----------------------------------------------------

    def char_to_glyph(self) -> dict[int, int]:
        """Decode the best Unicode cmap subtable into a full mapping."""
        cmap = self.table(b"cmap")
        num = struct.unpack_from(">H", cmap, 2)[0]
        records = {}
        for i in range(num):
            plat, enc, offset = struct.unpack_from(">HHI", cmap, 4 + 8 * i)
            records[(plat, enc)] = offset
        for want in ((3, 1), (0, 3), (0, 4), (3, 0), (0, 2), (0, 1), (0, 0)):
            if want in records and struct.unpack_from(">H", cmap, records[want])[0] == 4:
                return _parse_format4(cmap, records[want])
        raise ValueError("font has no format-4 Unicode cmap subtable")

    def char_advances(self, codes) -> dict[int, int]:
        """Advance widths in 1000-unit glyph space for the given codes.

        Codes missing from the character map are left out.
        """
        upem = struct.unpack_from(">H", self.table(b"head"), 18)[0]
        num_metrics = struct.unpack_from(">H", self.table(b"hhea"), 34)[0]
        hmtx = self.table(b"hmtx")
        cmap = self.char_to_glyph()
        out = {}
        for code in codes:
            gid = cmap.get(code)
            if gid is None:
                continue
            metric = min(gid, num_metrics - 1)
            advance = struct.unpack_from(">H", hmtx, 4 * metric)[0]
            out[code] = round(advance * 1000 / upem)
        return out

    def with_cmap(self, mapping: dict[int, int]) -> bytes:
        """Whole font re-serialized with ``mapping`` as its only cmap."""
        new_cmap = rebuild_cmap_format4(mapping)
        parts = []
        offset = 12 + 16 * len(self.table_order)
        entries = []
        for tag in self.table_order:
            data = new_cmap if tag == b"cmap" else self.table(tag)
            if tag == b"head":
                data = data[:8] + bytes(4) + data[12:]  # zero checkSumAdjustment
            entries.append((tag, _checksum(data), offset, len(data)))
            padded = data + bytes((4 - len(data) % 4) % 4)
            parts.append(padded)
            offset += len(padded)
        num = len(entries)
        # binary-search fields of the offset table
        entry_selector = num.bit_length() - 1
        search_range = 16 * (1 << entry_selector)
        header = struct.pack(
            ">IHHHH", self.scaler, num, search_range, entry_selector,
            16 * num - search_range,
        )
        directory = b"".join(
            struct.pack(">4sIII", tag, csum, off, length)
            for tag, csum, off, length in entries
        )
        blob = bytearray(header + directory + b"".join(parts))
        adjustment = (_CHECKSUM_MAGIC - _checksum(bytes(blob))) & 0xFFFFFFFF
        head_off = dict((t, o) for t, _, o, _ in entries)[b"head"]
        struct.pack_into(">I", blob, head_off + 8, adjustment)
        return bytes(blob)


def _parse_format4(cmap: bytes, at: int) -> dict[int, int]:
    seg_x2 = struct.unpack_from(">H", cmap, at + 6)[0]
    segs = seg_x2 // 2
    end = struct.unpack_from(f">{segs}H", cmap, at + 14)
    start = struct.unpack_from(f">{segs}H", cmap, at + 16 + seg_x2)
    delta = struct.unpack_from(f">{segs}H", cmap, at + 16 + 2 * seg_x2)
    range_off_base = at + 16 + 3 * seg_x2
    range_off = struct.unpack_from(f">{segs}H", cmap, range_off_base)
    out: dict[int, int] = {}
    for i in range(segs):
        for code in range(start[i], end[i] + 1):
            if code == 0xFFFF:
                continue
            if range_off[i] == 0:
                gid = (code + delta[i]) & 0xFFFF
            else:
                addr = range_off_base + 2 * i + range_off[i] + 2 * (code - start[i])
                gid = struct.unpack_from(">H", cmap, addr)[0]
                if gid != 0:
                    gid = (gid + delta[i]) & 0xFFFF
            if gid != 0:
                out[code] = gid
    return out


def _runs(codes: list[int]) -> list[list[int]]:
    runs: list[list[int]] = []
    for code in codes:
        if runs and code == runs[-1][-1] + 1:
            runs[-1].append(code)
        else:
            runs.append([code])
    return runs


def rebuild_cmap_format4(mapping: dict[int, int]) -> bytes:
    """A fresh cmap table holding ``mapping`` under (3,1) and (0,3).

    Consecutive codes with consecutive glyph ids compress to a delta
    segment; anything else spills into the trailing glyph-id array.
    """
    if not mapping:
        raise ValueError("cannot build an empty cmap")
    if any(not 0 <= c < 0xFFFF for c in mapping):
        raise ValueError("format 4 only covers codes below 0xFFFF")
    segments = []  # (start, end, delta, gids or None)
    for run in _runs(sorted(mapping)):
        gids = [mapping[c] for c in run]
        if all(g == gids[0] + k for k, g in enumerate(gids)):
            segments.append((run[0], run[-1], (gids[0] - run[0]) & 0xFFFF, None))
        else:
            segments.append((run[0], run[-1], 0, gids))
    segments.append((0xFFFF, 0xFFFF, 1, None))

    segs = len(segments)
    glyph_words: list[int] = []
    range_offs = []
    for i, (_, _, _, gids) in enumerate(segments):
        if gids is None:
            range_offs.append(0)
        else:
            range_offs.append(2 * (segs - i + len(glyph_words)))
            glyph_words.extend(gids)

    entry_selector = segs.bit_length() - 1
    search_range = 2 * (1 << entry_selector)
    length = 16 + 8 * segs + 2 * len(glyph_words)
    sub = struct.pack(
        ">HHHHHHH", 4, length, 0, 2 * segs, search_range, entry_selector,
        2 * segs - search_range,
    )
    sub += struct.pack(f">{segs}H", *(s[1] for s in segments))
    sub += b"\x00\x00"
    sub += struct.pack(f">{segs}H", *(s[0] for s in segments))
    sub += struct.pack(f">{segs}H", *(s[2] for s in segments))
    sub += struct.pack(f">{segs}H", *range_offs)
    sub += struct.pack(f">{len(glyph_words)}H", *glyph_words)

    # Two encoding records sharing one subtable body.
    header = struct.pack(">HH", 0, 2)
    header += struct.pack(">HHI", 0, 3, 4 + 16)
    header += struct.pack(">HHI", 3, 1, 4 + 16)
    return header + sub
