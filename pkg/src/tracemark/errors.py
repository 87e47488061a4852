"""Exception hierarchy shared by every tracemark module.

All toolkit errors derive from :class:`TracemarkError` so callers can catch
one base class at the CLI boundary.  Subclasses carry whatever context the
raising module can cheaply provide (synset ids, token indices, byte offsets)
because these errors are routinely surfaced to operators verbatim.
"""

from __future__ import annotations

__all__ = [
    "TracemarkError",
    "LexiconError",
    "DisjointTaxonomies",
    "NotNeighbours",
    "RangeError",
    "ConfigurationError",
    "AuthenticationFailure",
    "MalformedPayload",
    "EccDecodeError",
    "EmbeddingCapacityError",
    "CapacityError",
    "StoreError",
    "SyncLostError",
    "NoSignalError",
    "ChannelUnavailable",
    "TamperSuspected",
    "PdfParseError",
    "UnsupportedLayout",
    "EditConflict",
]


class TracemarkError(Exception):
    """Base class for all toolkit errors."""


class LexiconError(TracemarkError):
    """A lexical source file is malformed or violates a source invariant."""


class DisjointTaxonomies(TracemarkError):
    """Two senses share no common ancestor, so no similarity is defined."""


class NotNeighbours(TracemarkError):
    """Edge weight requested for two words that share no synset."""


class RangeError(TracemarkError):
    """A timestamp or payload component is outside its encodable range.

    The message names the offending field.
    """


class ConfigurationError(TracemarkError):
    """Keys or parameters are mutually inconsistent (e.g. enc key == mac key)."""


class AuthenticationFailure(TracemarkError):
    """A sealed payload failed MAC verification."""


class MalformedPayload(TracemarkError):
    """A sealed payload is structurally invalid (too short to hold a tag)."""


class EccDecodeError(TracemarkError):
    """Reed-Solomon decoding failed; the codeword is beyond repair."""


class EmbeddingCapacityError(TracemarkError):
    """The document cannot carry the payload even with zero parity."""


class CapacityError(TracemarkError):
    """A permutation payload does not fit in the available glyph slots."""


class StoreError(TracemarkError):
    """The download log could not satisfy an insert (id collisions, I/O)."""


class SyncLostError(TracemarkError):
    """Extraction walked out of alignment between the two word sequences."""

    def __init__(self, message: str, original_index: int, watermarked_index: int):
        super().__init__(message)
        self.original_index = original_index
        self.watermarked_index = watermarked_index


class NoSignalError(TracemarkError):
    """The document holds no complete segment, so nothing can be decoded."""


class ChannelUnavailable(TracemarkError):
    """A channel's carrier is missing (e.g. the embedded font was replaced)."""


class TamperSuspected(TracemarkError):
    """A recovered permutation is not an involution; the font was altered."""


class PdfParseError(TracemarkError):
    """The file is not parseable as a PDF within the supported subset."""


class UnsupportedLayout(TracemarkError):
    """The document falls outside the supported layout subset.

    Carries a short location hint (object number or byte offset) when known.
    """

    def __init__(self, message: str, location: str | None = None):
        super().__init__(message if location is None else f"{message} ({location})")
        self.location = location


class EditConflict(TracemarkError):
    """Two edits in one edit set touch the same byte range."""
