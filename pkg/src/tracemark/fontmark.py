"""Font-channel watermark: integer payload as a cmap permutation.

The payload becomes a self-inverting permutation built from disjoint
transpositions: pair ``i`` of the slot list is swapped exactly when bit
``i`` of the sentinel-prefixed payload is set.  Sentinel first (pair 0
always swapped, so even payload 0 changes the font), then the payload
bits least-significant first, which is what makes the decoding unique:
pair ``1 + k`` swapped means bit ``k`` of the payload is set, and
missing high pairs are simply zero bits.

Slots are the single-byte character codes of the sealed font that
render a glyph no other byte code renders, in sorted order.  Taking
them from the font instead of from the document text keeps the pair
layout stable when an attacker inserts or removes words.  Patching
rewrites the font so code ``x`` renders the glyph the code ``perm(x)``
used to render, and rewrites every string byte through the same
permutation; the two cancel out visually, while a naive text copy
(which ignores the patched cmap) comes out garbled.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from . import pdfio
from .errors import (
    CapacityError,
    ChannelUnavailable,
    ConfigurationError,
    NoSignalError,
    TamperSuspected,
)
from .sfnt import SfntFont

__all__ = [
    "int_to_sip",
    "sip_to_int",
    "sip_capacity",
    "code_permutation",
    "patch_font",
    "recover_permutation",
    "fontmark_slots",
    "apply_fontmark",
    "extract_fontmark",
    "FontmarkResult",
]


def sip_capacity(n_slots: int) -> int:
    """Largest payload bit length a slot count can carry."""
    return max(n_slots // 2 - 1, 0)


def int_to_sip(p: int, n_slots: int) -> list[int]:
    """Encode ``p`` as an involution over ``range(n_slots)``."""
    if p < 0:
        raise ValueError("payload integer must be non-negative")
    if p.bit_length() + 1 > n_slots // 2:
        raise CapacityError(
            f"{p.bit_length()}-bit payload needs {2 * (p.bit_length() + 1)} slots, "
            f"have {n_slots}"
        )
    perm = list(range(n_slots))
    transposed = [0] + [1 + k for k in range(p.bit_length()) if p >> k & 1]
    for i in transposed:
        perm[2 * i], perm[2 * i + 1] = perm[2 * i + 1], perm[2 * i]
    return perm


def sip_to_int(perm: list[int]) -> int:
    """Decode an involution back to its payload integer.

    Raises :class:`TamperSuspected` when the permutation is not made of
    aligned pair transpositions or lacks the sentinel swap.
    """
    for i, target in enumerate(perm):
        if not 0 <= target < len(perm) or perm[target] != i:
            raise TamperSuspected("font permutation is not an involution")
    p = 0
    for i in range(len(perm) // 2):
        a, b = perm[2 * i], perm[2 * i + 1]
        if (a, b) == (2 * i + 1, 2 * i):
            if i > 0:
                p |= 1 << (i - 1)
        elif (a, b) != (2 * i, 2 * i + 1):
            raise TamperSuspected(
                "font permutation moves codes across slot pairs"
            )
    if len(perm) % 2 and perm[-1] != len(perm) - 1:
        raise TamperSuspected("font permutation moves the unpaired last slot")
    if not perm or perm[0] != 1:
        raise TamperSuspected("sentinel transposition is absent")
    return p


def code_permutation(slots: list[int], perm: list[int]) -> dict[int, int]:
    """Slot-index involution as a character-code mapping."""
    if sorted(slots) != list(slots) or len(set(slots)) != len(slots):
        raise ValueError("slots must be sorted and distinct")
    if len(perm) != len(slots):
        raise ValueError("permutation and slot list disagree on length")
    return {slots[i]: slots[perm[i]] for i in range(len(slots))}


def patch_font(font_bytes: bytes, code_perm: dict[int, int]) -> bytes:
    """Rewrite a font so code ``x`` renders the old glyph of ``code_perm[x]``."""
    font = SfntFont.from_bytes(font_bytes)
    mapping = font.char_to_glyph()
    missing = [c for c in code_perm if c not in mapping]
    if missing:
        raise ValueError(f"font has no glyph for codes {missing[:8]}")
    patched = dict(mapping)
    for code, source in code_perm.items():
        patched[code] = mapping[source]
    return font.with_cmap(patched)


def recover_permutation(
    marked_font: bytes, reference_font: bytes, slots: list[int]
) -> list[int]:
    """Read the slot permutation back out of a patched font.

    Compares where each used code points in the marked font against the
    reference; codes whose glyphs are not reachable from the used slots
    mean the cmap was edited by something other than this channel.
    """
    marked = SfntFont.from_bytes(marked_font).char_to_glyph()
    reference = SfntFont.from_bytes(reference_font).char_to_glyph()
    by_glyph: dict[int, int] = {}
    for j, code in enumerate(slots):
        gid = reference.get(code)
        if gid is None:
            raise TamperSuspected(f"reference font lacks used code {code}")
        if gid in by_glyph:
            raise TamperSuspected(
                f"reference font renders codes {slots[by_glyph[gid]]} and "
                f"{code} with one glyph; slots are ambiguous"
            )
        by_glyph[gid] = j
    perm = []
    for code in slots:
        gid = marked.get(code)
        if gid is None or gid not in by_glyph:
            raise TamperSuspected(
                f"code {code} renders a glyph outside the document's slot set"
            )
        perm.append(by_glyph[gid])
    return perm


# ---------------------------------------------------------------------------
# Document level


def fontmark_slots(
    reference_font: bytes, code_range: tuple[int, int] = (0, 0xFF)
) -> list[int]:
    """The byte codes of the font that identify their glyph uniquely.

    Ambiguous codes (two byte codes drawing one glyph) are dropped on
    both endpoints, so the pair layout never depends on which of them a
    permutation recovery would have picked.  ``code_range`` narrows the
    slots to the span the document declares widths for, keeping the
    permuted width table total.
    """
    lo, hi = code_range
    mapping = SfntFont.from_bytes(reference_font).char_to_glyph()
    low = {c: g for c, g in mapping.items() if lo <= c <= min(hi, 0xFF)}
    counts = Counter(low.values())
    return sorted(c for c, g in low.items() if counts[g] == 1)


def _embedded_font(
    model: pdfio.DocumentModel, font: str | None
) -> tuple[str, bytes]:
    if font is not None:
        data = model.font_bytes(font)
        if data is None:
            raise ChannelUnavailable(f"font {font} has no embedded program")
        return font, data
    candidates = [
        (name, data)
        for name in sorted(model.fonts)
        if (data := model.font_bytes(name)) is not None
    ]
    if not candidates:
        raise ChannelUnavailable("document embeds no font program")
    if len(candidates) > 1:
        raise ConfigurationError(
            "several embedded fonts; name the one to use"
        )
    return candidates[0]


def apply_fontmark(
    model: pdfio.DocumentModel, payload: int, font: str | None = None
) -> pdfio.Edits:
    """Edits that patch the embedded font and garble the text to match."""
    resource, font_bytes = _embedded_font(model, font)
    info = model.fonts[resource]
    slots = fontmark_slots(font_bytes, (info.first_char, info.last_char))
    perm = int_to_sip(payload, len(slots))
    moves = {
        c: t for c, t in code_permutation(slots, perm).items() if c != t
    }
    return pdfio.Edits(
        code_map=moves,
        font_file=patch_font(font_bytes, moves),
        font_resource=resource,
    )


@dataclass
class FontmarkResult:
    payload: int
    code_map: dict[int, int]  # the recovered involution; its own inverse
    resource: str


def extract_fontmark(
    model: pdfio.DocumentModel,
    reference_font: bytes,
    font: str | None = None,
) -> FontmarkResult:
    """Read the payload back from a leaked document's embedded font.

    Raises :class:`ChannelUnavailable` when there is no embedded font or
    its glyph outlines are not the sealed font's (a substituted font
    cannot carry this mark), :class:`NoSignalError` when the cmap is the
    reference one, and :class:`TamperSuspected` when the permutation is
    not one this channel could have written.
    """
    resource, marked_bytes = _embedded_font(model, font)
    marked_glyf = SfntFont.from_bytes(marked_bytes).table(b"glyf")
    reference_glyf = SfntFont.from_bytes(reference_font).table(b"glyf")
    if marked_glyf != reference_glyf:
        raise ChannelUnavailable(
            "embedded font outlines differ from the sealed font"
        )
    info = model.fonts[resource]
    slots = fontmark_slots(reference_font, (info.first_char, info.last_char))
    perm = recover_permutation(marked_bytes, reference_font, slots)
    if perm == list(range(len(perm))):
        raise NoSignalError("embedded font cmap carries no mark")
    payload = sip_to_int(perm)
    moves = {
        c: t for c, t in code_permutation(slots, perm).items() if c != t
    }
    return FontmarkResult(payload, moves, resource)
