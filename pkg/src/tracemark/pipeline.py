"""Three-channel embedding and extraction over whole documents.

Embedding always runs linguistic, then structural, then fontmark, with a
serialize/reparse between stages so each channel sees the document the
next parser will see.  Extraction runs in the opposite order: the font
permutation must come off first, because until the strings are un-garbled
neither the word walk nor anything keyed on text can read the leak.

A channel that cannot run reports why and the others continue; no stage
ever hides another's failure.  Reports are plain dicts with a version
field so downstream tooling can pin the schema.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from . import linguistic, payload, pdfio, structural
from .bitio import bits_from_bytes, bits_to_int, bytes_from_bits, int_to_bits
from .errors import (
    AuthenticationFailure,
    CapacityError,
    ChannelUnavailable,
    ConfigurationError,
    EccDecodeError,
    EmbeddingCapacityError,
    MalformedPayload,
    NoSignalError,
    SyncLostError,
    TamperSuspected,
)
from .fontmark import (
    _embedded_font,
    apply_fontmark,
    extract_fontmark,
    fontmark_slots,
    sip_to_int,
)
from .lexgraph import LexGraph, LexicalSource
from .linguistic import WordSequence, eligible_mask
from .payload import KeySet, LogIndependentPayload, TS_BITS

__all__ = [
    "CHANNELS",
    "REPORT_VERSION",
    "PipelineConfig",
    "ChannelEmbed",
    "EmbedReport",
    "ChannelExtract",
    "WatermarkReport",
    "embed_document",
    "extract_document",
]

CHANNELS = ("linguistic", "structural", "fontmark")

REPORT_VERSION = 1

# Channel statuses.  Embedding uses the first three; extraction all six.
EMBEDDED = "embedded"
RECOVERED = "recovered"
PARTIAL = "partial"
ABSENT = "absent"
UNAVAILABLE = "unavailable"
FAILED = "failed"
DISABLED = "disabled"


@dataclass(frozen=True)
class PipelineConfig:
    """Everything both endpoints must agree on, keys aside."""

    channels: tuple[str, ...] = CHANNELS
    structural: structural.StructuralConfig = structural.StructuralConfig()
    mode: str = linguistic.DEFAULT_MODE
    resync_window: int = 2
    mac_len: int = payload.DEFAULT_MAC_LEN
    ecc_t: int | None = None  # None picks the widest parity that fits
    ts_mode: str = "unix32"
    user_id_bits: int = 32
    id_bits: int | None = None  # download-id width; None means one per class
    stop_words: frozenset[str] = frozenset()
    simplified_resync: bool = False
    font: str | None = None  # fontmark resource; None resolves the only one

    def __post_init__(self) -> None:
        for name in self.channels:
            if name not in CHANNELS:
                raise ConfigurationError(f"unknown channel {name!r}")
        if self.ts_mode not in TS_BITS:
            raise ConfigurationError(f"unknown timestamp mode {self.ts_mode!r}")
        width = self.download_id_bits
        if not 1 <= width <= self.structural.n_classes:
            raise ConfigurationError(
                f"{width} id bits exceed the {self.structural.n_classes} "
                f"segment classes"
            )

    @property
    def download_id_bits(self) -> int:
        return self.id_bits if self.id_bits is not None else self.structural.n_classes

    def identity_bytes(self) -> int:
        """Length of the log-independent payload this config describes."""
        return math.ceil((self.user_id_bits + TS_BITS[self.ts_mode] + 8) / 8)


# ---------------------------------------------------------------------------
# Reports


@dataclass
class ChannelEmbed:
    channel: str
    status: str
    reason: str | None = None
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"status": self.status, "detail": self.detail}
        if self.reason is not None:
            out["reason"] = self.reason
        return out


@dataclass
class EmbedReport:
    channels: list[ChannelEmbed]

    def channel(self, name: str) -> ChannelEmbed:
        for entry in self.channels:
            if entry.channel == name:
                return entry
        raise KeyError(name)

    @property
    def embedded(self) -> list[str]:
        return [c.channel for c in self.channels if c.status == EMBEDDED]

    @property
    def any_embedded(self) -> bool:
        return bool(self.embedded)

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "channels": {c.channel: c.to_dict() for c in self.channels},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class ChannelExtract:
    channel: str
    status: str
    payload: int | None = None  # decoded integer id, when one exists
    payload_hex: str | None = None  # recovered bytes, when they exist
    reason: str | None = None
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"status": self.status, "detail": self.detail}
        if self.payload is not None:
            out["payload"] = self.payload
        if self.payload_hex is not None:
            out["payload_hex"] = self.payload_hex
        if self.reason is not None:
            out["reason"] = self.reason
        return out


@dataclass
class WatermarkReport:
    channels: list[ChannelExtract]

    def channel(self, name: str) -> ChannelExtract:
        for entry in self.channels:
            if entry.channel == name:
                return entry
        raise KeyError(name)

    @property
    def download_id(self) -> int | None:
        """Best id across the log-dependent channels; fontmark outranks
        structural because its decode is exact rather than a vote."""
        for name in ("fontmark", "structural"):
            try:
                entry = self.channel(name)
            except KeyError:
                continue
            if entry.status == RECOVERED and entry.payload is not None:
                return entry.payload
        return None

    @property
    def identity(self) -> dict | None:
        try:
            entry = self.channel("linguistic")
        except KeyError:
            return None
        if entry.status == RECOVERED and "identity" in entry.detail:
            return entry.detail["identity"]
        return None

    def to_dict(self) -> dict:
        out = {
            "version": REPORT_VERSION,
            "channels": {c.channel: c.to_dict() for c in self.channels},
        }
        if self.download_id is not None:
            out["download_id"] = self.download_id
        if self.identity is not None:
            out["identity"] = self.identity
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Embedding


def _linguistic_payload_bits(
    seq: WordSequence,
    keys: KeySet,
    identity: LogIndependentPayload,
    graph: LexGraph,
    config: PipelineConfig,
) -> tuple[list[int], int, dict]:
    """Seal the identity and wrap it in as much parity as the page holds."""
    sealed = payload.seal(
        identity.to_bytes(), keys.enc_key, keys.mac_key, config.mac_len
    )
    usable = sum(eligible_mask(seq, graph, keys.graph_key, config.mode))
    if config.ecc_t is not None:
        t = config.ecc_t
    else:
        t = payload.size_parity(usable, len(sealed))
    protected = payload.attach_ecc(sealed, t)
    if 8 * len(protected) > usable:
        raise EmbeddingCapacityError(
            f"{len(protected)} protected bytes need {8 * len(protected)} "
            f"usable words, document has {usable}"
        )
    detail = {
        "sealed_bytes": len(sealed),
        "protected_bytes": len(protected),
        "parity_t": t,
        "usable_words": usable,
    }
    return bits_from_bytes(protected), t, detail


def embed_document(
    pdf: bytes,
    keys: KeySet,
    graph: LexGraph,
    *,
    identity: LogIndependentPayload | None = None,
    download_id: int | None = None,
    raw: bytes | None = None,
    config: PipelineConfig | None = None,
    source: LexicalSource | None = None,
    metric=None,
) -> tuple[bytes, EmbedReport]:
    """Watermark one document; returns the new bytes and what happened.

    Normal use gives ``identity`` (sealed and parity-wrapped onto the
    linguistic channel) plus ``download_id`` (embedded bare on the two
    low-capacity channels).  ``raw`` instead pushes the same unwrapped
    bytes through every channel; it exists for calibration and testing,
    and excludes the other two arguments.
    """
    config = config or PipelineConfig()
    if raw is not None:
        if identity is not None or download_id is not None:
            raise ConfigurationError("raw payload excludes identity and id")
        if not raw:
            raise ConfigurationError("raw payload is empty")
    if config.ecc_t is not None and not 0 <= config.ecc_t < 128:
        raise ConfigurationError(f"parity t={config.ecc_t} out of range")

    current = pdf
    model = pdfio.parse(current)
    entries: list[ChannelEmbed] = []

    # -- linguistic -------------------------------------------------------
    if "linguistic" not in config.channels:
        entries.append(ChannelEmbed("linguistic", DISABLED))
    else:
        try:
            seq = WordSequence.from_model(model, stop_words=config.stop_words)
            if raw is not None:
                bits = bits_from_bytes(raw)
                detail = {"payload_bits": len(bits), "wrapped": False}
            else:
                if identity is None:
                    raise ConfigurationError(
                        "linguistic channel needs an identity payload"
                    )
                bits, _, detail = _linguistic_payload_bits(
                    seq, keys, identity, graph, config
                )
                detail["wrapped"] = True
                detail["payload_bits"] = len(bits)
            result = linguistic.embed(
                seq,
                bits,
                graph,
                keys.graph_key,
                mode=config.mode,
                source=source,
                metric=metric,
            )
            if not result.success:
                entries.append(ChannelEmbed("linguistic", FAILED, result.reason))
            else:
                detail["replaced_words"] = len(result.replacements)
                detail["renounced"] = len(result.renounced)
                edits = pdfio.Edits(word_text=result.document_edits(seq))
                current = pdfio.serialize(model, edits)
                model = pdfio.parse(current)
                entries.append(ChannelEmbed("linguistic", EMBEDDED, None, detail))
        except (EmbeddingCapacityError, CapacityError) as exc:
            entries.append(ChannelEmbed("linguistic", FAILED, str(exc)))

    # -- structural -------------------------------------------------------
    if "structural" not in config.channels:
        entries.append(ChannelEmbed("structural", DISABLED))
    else:
        try:
            width = config.download_id_bits
            if raw is not None:
                bits = bits_from_bytes(raw)
                if len(bits) > config.structural.n_classes:
                    raise CapacityError(
                        f"{len(bits)} raw bits exceed the "
                        f"{config.structural.n_classes} segment classes"
                    )
            else:
                if download_id is None:
                    raise ConfigurationError(
                        "structural channel needs a download id"
                    )
                if not 0 <= download_id < 1 << width:
                    raise CapacityError(
                        f"download id needs more than {width} bits"
                    )
                bits = int_to_bits(download_id, width)
            edits, plan = structural.embed_spaces(model, bits, config.structural)
            applied = [p for p in plan.segments if p.applied]
            if not applied:
                reason = (
                    "no line holds a complete word run"
                    if not plan.segments
                    else "every candidate segment was rejected"
                )
                entries.append(ChannelEmbed("structural", FAILED, reason))
            else:
                detail = {
                    "payload_bits": len(bits),
                    "segments": len(plan.segments),
                    "shifted": sum(1 for p in applied if p.note == "shifted"),
                    "classes_covered": sorted({p.klass for p in applied}),
                }
                current = pdfio.serialize(model, edits)
                model = pdfio.parse(current)
                entries.append(ChannelEmbed("structural", EMBEDDED, None, detail))
        except (EmbeddingCapacityError, CapacityError) as exc:
            entries.append(ChannelEmbed("structural", FAILED, str(exc)))

    # -- fontmark ---------------------------------------------------------
    if "fontmark" not in config.channels:
        entries.append(ChannelEmbed("fontmark", DISABLED))
    else:
        try:
            if raw is not None:
                p_int = int.from_bytes(raw, "big")
            else:
                if download_id is None:
                    raise ConfigurationError("fontmark channel needs a download id")
                p_int = download_id
            edits = apply_fontmark(model, p_int, font=config.font)
            detail = {
                "resource": edits.font_resource,
                "moved_codes": len(edits.code_map or {}),
            }
            current = pdfio.serialize(model, edits)
            model = pdfio.parse(current)
            entries.append(ChannelEmbed("fontmark", EMBEDDED, None, detail))
        except (ChannelUnavailable, CapacityError) as exc:
            entries.append(ChannelEmbed("fontmark", FAILED, str(exc)))

    return current, EmbedReport(entries)


# ---------------------------------------------------------------------------
# Extraction


def _text_recovered_permutation(
    original: pdfio.DocumentModel,
    marked: pdfio.DocumentModel,
    reference_font: bytes,
    font: str | None,
) -> tuple[dict[int, int], int, int, str] | None:
    """Rebuild the garble map from the strings when the font is gone.

    A leaked copy whose embedded font was swapped for a stock one still
    carries permuted string bytes.  Words the attacker and the embedder
    both left alone read as (original byte, permuted byte) pairs, so a
    majority vote across the page recovers the permutation without any
    font to compare against.  Returns (code moves, decoded payload,
    pairs confirmed by at least one observation, resource name), or None
    when the texts align trivially or not at all.
    """
    o_words = original.words
    m_words = marked.words
    if not o_words or len(o_words) != len(m_words):
        return None

    votes: dict[tuple[int, int], int] = {}
    for ow, mw in zip(o_words, m_words):
        ob = ow.text.encode("cp1252", "replace")
        mb = mw.text.encode("cp1252", "replace")
        if len(ob) != len(mb):
            continue  # a substituted carrier; useless as evidence
        for a, b in zip(ob, mb):
            votes[(a, b)] = votes.get((a, b), 0) + 1

    try:
        resource, _ = _embedded_font(original, font)
    except (ChannelUnavailable, ConfigurationError):
        return None
    info = original.fonts[resource]
    slots = fontmark_slots(reference_font, (info.first_char, info.last_char))
    pos = {code: i for i, code in enumerate(slots)}

    # Strongest claims first; later, weaker claims may not contradict an
    # established pairing.  The permutation is its own inverse, so every
    # accepted claim fixes two codes at once.
    perm = list(range(len(slots)))
    settled: set[int] = set()
    for (a, b), _n in sorted(votes.items(), key=lambda kv: (-kv[1], kv[0])):
        if a not in pos or b not in pos:
            continue
        ia, ib = pos[a], pos[b]
        if ia in settled or ib in settled:
            continue
        perm[ia], perm[ib] = ib, ia
        settled.add(ia)
        settled.add(ib)

    if perm == list(range(len(slots))):
        return None
    # The sentinel swap cannot be voted on: its garbled half is a space
    # byte, and the word parser splits strings there.  Any other garbling
    # implies it, so put it in unless an observation said otherwise.
    if len(slots) >= 2 and 0 not in settled and 1 not in settled:
        perm[0], perm[1] = 1, 0
    try:
        decoded = sip_to_int(perm)
    except TamperSuspected:
        return None

    confirmed = 0
    for k in range(len(slots) // 2):
        if 2 * k in settled or 2 * k + 1 in settled:
            confirmed += 1
    moves = {
        slots[i]: slots[j] for i, j in enumerate(perm) if i != j
    }
    return moves, decoded, confirmed, resource


def _ungarble(
    marked: pdfio.DocumentModel, moves: dict[int, int], resource: str
) -> pdfio.DocumentModel:
    flat = pdfio.serialize(
        marked, pdfio.Edits(code_map=moves, font_resource=resource)
    )
    return pdfio.parse(flat)


def extract_document(
    marked: bytes,
    original: bytes,
    keys: KeySet,
    graph: LexGraph,
    *,
    config: PipelineConfig | None = None,
    source: LexicalSource | None = None,
    metric=None,
    rng=None,
    raw_len: int | None = None,
) -> WatermarkReport:
    """Read every channel of a leaked copy against the archived original.

    ``raw_len`` switches to the unwrapped layout ``embed_document`` uses
    for its ``raw`` argument: every channel is expected to carry exactly
    that many bytes, and no parity or seal is removed.
    """
    config = config or PipelineConfig()
    o_model = pdfio.parse(original)
    m_model = pdfio.parse(marked)
    working = m_model
    entries: list[ChannelExtract] = []

    # -- fontmark (first: it un-garbles the text for the other two) -------
    if "fontmark" not in config.channels:
        entries.append(ChannelExtract("fontmark", DISABLED))
    else:
        entries.append(_extract_fontmark_entry(o_model, m_model, config, raw_len))
        entry = entries[-1]
        moves = entry.detail.pop("_moves", None)
        resource = entry.detail.pop("_resource", None)
        if moves:
            try:
                working = _ungarble(m_model, moves, resource)
            except Exception as exc:  # noqa: BLE001 - report, never hide
                entry.detail["ungarble_error"] = str(exc)
                working = m_model

    # -- structural -------------------------------------------------------
    if "structural" not in config.channels:
        entries.append(ChannelExtract("structural", DISABLED))
    else:
        entries.append(_extract_structural_entry(working, config, raw_len))

    # -- linguistic -------------------------------------------------------
    if "linguistic" not in config.channels:
        entries.append(ChannelExtract("linguistic", DISABLED))
    else:
        entries.append(
            _extract_linguistic_entry(
                o_model, working, keys, graph, config, source, metric, rng, raw_len
            )
        )

    order = {name: i for i, name in enumerate(CHANNELS)}
    entries.sort(key=lambda e: order[e.channel])
    return WatermarkReport(entries)


def _extract_fontmark_entry(
    o_model: pdfio.DocumentModel,
    m_model: pdfio.DocumentModel,
    config: PipelineConfig,
    raw_len: int | None,
) -> ChannelExtract:
    try:
        _, reference = _embedded_font(o_model, config.font)
    except (ChannelUnavailable, ConfigurationError) as exc:
        return ChannelExtract(
            "fontmark", UNAVAILABLE, reason=f"original document: {exc}"
        )
    try:
        got = extract_fontmark(m_model, reference, font=config.font)
    except NoSignalError as exc:
        entry = ChannelExtract("fontmark", ABSENT, reason=str(exc))
        rec = _text_recovered_permutation(o_model, m_model, reference, config.font)
        if rec is not None:
            # A clean cmap over permuted strings means someone put the
            # original font back without un-garbling the text.
            moves, decoded, confirmed, resource = rec
            entry.status = FAILED
            entry.reason = (
                "the font table carries no mark but the strings are "
                "permuted; the embedded font was likely restored"
            )
            entry.detail["text_recovery"] = {
                "payload": decoded,
                "confirmed_pairs": confirmed,
            }
            entry.detail["_moves"] = moves
            entry.detail["_resource"] = resource
        return entry
    except TamperSuspected as exc:
        return ChannelExtract("fontmark", FAILED, reason=str(exc))
    except ChannelUnavailable as exc:
        entry = ChannelExtract("fontmark", UNAVAILABLE, reason=str(exc))
        rec = _text_recovered_permutation(o_model, m_model, reference, config.font)
        if rec is not None:
            moves, decoded, confirmed, resource = rec
            entry.detail["text_recovery"] = {
                "payload": decoded,
                "confirmed_pairs": confirmed,
            }
            entry.detail["_moves"] = moves
            entry.detail["_resource"] = resource
        return entry

    entry = ChannelExtract(
        "fontmark",
        RECOVERED,
        payload=got.payload,
        detail={"resource": got.resource, "moved_codes": len(got.code_map)},
    )
    entry.detail["_moves"] = got.code_map
    entry.detail["_resource"] = got.resource
    if raw_len is not None:
        if got.payload < 1 << (8 * raw_len):
            entry.payload_hex = got.payload.to_bytes(raw_len, "big").hex()
        else:
            entry.status = FAILED
            entry.reason = f"decoded integer needs more than {raw_len} bytes"
    return entry


def _extract_structural_entry(
    working: pdfio.DocumentModel,
    config: PipelineConfig,
    raw_len: int | None,
) -> ChannelExtract:
    expected = 8 * raw_len if raw_len is not None else config.download_id_bits
    try:
        got = structural.extract_model(working, expected, config.structural)
    except NoSignalError as exc:
        return ChannelExtract("structural", ABSENT, reason=str(exc))
    except CapacityError as exc:
        return ChannelExtract("structural", FAILED, reason=str(exc))

    detail = {
        "bits": got.bits,
        "confidence": round(got.confidence, 4),
        "confidences": [round(c, 4) for c in got.confidences],
        "votes": got.votes,
        "erasure_classes": got.erasures,
    }
    if all(b is None for b in got.bits):
        return ChannelExtract(
            "structural", ABSENT, reason="every class reads as an erasure",
            detail=detail,
        )
    if any(b is None for b in got.bits):
        return ChannelExtract(
            "structural", PARTIAL,
            reason=f"{len(got.erasures)} of {expected} id bits unreadable",
            detail=detail,
        )
    value = bits_to_int(got.bits)
    entry = ChannelExtract("structural", RECOVERED, payload=value, detail=detail)
    if raw_len is not None:
        entry.payload_hex = bytes_from_bits(got.bits).hex()
    return entry


def _extract_linguistic_entry(
    o_model: pdfio.DocumentModel,
    working: pdfio.DocumentModel,
    keys: KeySet,
    graph: LexGraph,
    config: PipelineConfig,
    source: LexicalSource | None,
    metric,
    rng,
    raw_len: int | None,
) -> ChannelExtract:
    d_seq = WordSequence.from_model(o_model, stop_words=config.stop_words)
    w_seq = WordSequence.from_model(working, stop_words=config.stop_words)

    if raw_len is not None:
        expected = 8 * raw_len
        t = 0
    else:
        sealed_len = config.identity_bytes() + config.mac_len
        usable = sum(eligible_mask(d_seq, graph, keys.graph_key, config.mode))
        try:
            if config.ecc_t is not None:
                t = config.ecc_t
            else:
                t = payload.size_parity(usable, sealed_len)
        except EmbeddingCapacityError as exc:
            return ChannelExtract(
                "linguistic", UNAVAILABLE,
                reason=f"original document cannot carry the payload: {exc}",
            )
        expected = 8 * len(payload.attach_ecc(bytes(sealed_len), t))

    try:
        got = linguistic.extract(
            d_seq,
            w_seq,
            expected,
            graph,
            keys.graph_key,
            resync_window=config.resync_window,
            mode=config.mode,
            source=source,
            metric=metric,
            rng=rng,
            simplified=config.simplified_resync,
        )
    except SyncLostError as exc:
        return ChannelExtract(
            "linguistic", FAILED,
            reason=(
                f"{exc}; a wider resync window or hand-repair of that "
                f"region may let the walk continue"
            ),
            detail={
                "error": "SyncLostError",
                "original_index": exc.original_index,
                "watermarked_index": exc.watermarked_index,
            },
        )

    detail = {
        "expected_bits": expected,
        "erasure_bits": len(got.erasures),
        "common_neighbour_reads": len(got.common_guesses),
    }
    if len(got.erasures) == expected:
        return ChannelExtract(
            "linguistic", ABSENT,
            reason="every carrier word reads as the original",
            detail=detail,
        )

    if raw_len is not None:
        entry = ChannelExtract(
            "linguistic", RECOVERED,
            payload=bits_to_int(got.bits),
            payload_hex=bytes_from_bits(got.bits).hex(),
            detail=detail,
        )
        return entry

    detail["parity_t"] = t
    protected = bytes_from_bits(got.bits)
    erase_bytes = sorted({i // 8 for i in got.erasures})
    detail["erasure_bytes"] = len(erase_bytes)
    try:
        sealed = payload.decode_ecc(protected, t, erase_pos=erase_bytes)
    except (EccDecodeError, MalformedPayload) as exc:
        detail["error"] = type(exc).__name__
        return ChannelExtract("linguistic", FAILED, reason=str(exc), detail=detail)
    try:
        opened = payload.open_sealed(
            sealed, keys.enc_key, keys.mac_key, config.mac_len
        )
    except AuthenticationFailure as exc:
        detail["error"] = "AuthenticationFailure"
        return ChannelExtract("linguistic", FAILED, reason=str(exc), detail=detail)
    try:
        identity = LogIndependentPayload.from_bytes(
            opened, ts_mode=config.ts_mode, user_id_bits=config.user_id_bits
        )
    except MalformedPayload as exc:
        detail["error"] = "MalformedPayload"
        return ChannelExtract("linguistic", FAILED, reason=str(exc), detail=detail)

    stamp = identity.timestamp
    detail["identity"] = {
        "user_id": identity.user_id,
        "timestamp": stamp.isoformat() if hasattr(stamp, "isoformat") else tuple(stamp),
        "nonce": identity.nonce,
    }
    return ChannelExtract(
        "linguistic", RECOVERED, payload_hex=opened.hex(), detail=detail
    )
