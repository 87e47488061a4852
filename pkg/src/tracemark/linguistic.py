"""Payload embedding and extraction through synonym substitution.

A document word carries a payload bit when it is replaceable, resolves
to a graph vertex, and has keyed-label-0 and keyed-label-1 homograph
neighbours to choose between.  That predicate never looks at the
payload, so the extractor walking the archived original recomputes the
exact bit positions and only needs the leaked copy to read bit values.

Extraction tolerates adversarial edits: insertion and deletion checks
scan a bounded window to resynchronize, reverted words surface as
erasures for the outer code, and anything worse raises
:class:`SyncLostError` rather than returning silently wrong bits.
"""

from __future__ import annotations

import logging
import secrets
from dataclasses import dataclass, field
from typing import Callable

from .errors import ConfigurationError, SyncLostError
from .lexgraph import LexGraph, LexicalSource, canon

__all__ = [
    "DEFAULT_MODE",
    "MODES",
    "WordSequence",
    "JustificationContext",
    "EmbedResult",
    "ExtractResult",
    "split_token",
    "match_case",
    "eligible_mask",
    "justification_coefficient",
    "embed",
    "extract",
    "check_inserted",
    "check_deleted",
    "extract_bit",
]

log = logging.getLogger(__name__)

MODES = ("none", "no-longer-lines", "coefficient", "exact-width")
DEFAULT_MODE = "no-longer-lines"

_PUNCT = ".,;:!?\"'`()[]{}<>«»„“”‘’—-"
_SENTENCE_END = ".!?"


def split_token(raw: str) -> tuple[str, str, str]:
    """Split punctuation off a document token: (prefix, core, suffix)."""
    start = 0
    end = len(raw)
    while start < end and raw[start] in _PUNCT:
        start += 1
    while end > start and raw[end - 1] in _PUNCT:
        end -= 1
    return raw[:start], raw[start:end], raw[end:]


def match_case(original: str, replacement: str) -> str:
    if original.isupper() and len(original) > 1:
        return replacement.upper()
    if original[:1].isupper():
        return replacement[:1].upper() + replacement[1:]
    return replacement


@dataclass
class WordSequence:
    """The token-level view both endpoints agree on.

    ``words`` holds the punctuation-stripped cores; ``raws``, ``prefixes``
    and ``suffixes`` keep enough to rebuild the exact document text.
    ``char_offsets[j]`` is the cumulative raw length of earlier tokens on
    the same line, the mono-spaced position used by justification.
    """

    words: list[str]
    untouchable: list[bool]
    line_index: list[int]
    char_offsets: list[int]
    raws: list[str] = field(default_factory=list)
    prefixes: list[str] = field(default_factory=list)
    suffixes: list[str] = field(default_factory=list)
    doc_indices: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.raws:
            self.raws = list(self.words)
        if not self.prefixes:
            self.prefixes = [""] * len(self.words)
        if not self.suffixes:
            self.suffixes = [""] * len(self.words)
        if not self.doc_indices:
            self.doc_indices = list(range(len(self.words)))
        sizes = {
            len(self.words), len(self.untouchable), len(self.line_index),
            len(self.char_offsets), len(self.raws), len(self.doc_indices),
        }
        if len(sizes) != 1:
            raise ValueError("parallel arrays disagree in length")

    def __len__(self) -> int:
        return len(self.words)

    def line_last(self, j: int) -> bool:
        return j + 1 >= len(self) or self.line_index[j + 1] != self.line_index[j]

    def line_members(self, line: int) -> list[int]:
        return [j for j, ln in enumerate(self.line_index) if ln == line]

    @classmethod
    def from_words(
        cls,
        words: list[str],
        untouchable: list[bool] | None = None,
        line_index: list[int] | None = None,
    ) -> "WordSequence":
        line_index = line_index or [0] * len(words)
        offsets: list[int] = []
        acc: dict[int, int] = {}
        for w, ln in zip(words, line_index):
            offsets.append(acc.get(ln, 0))
            acc[ln] = acc.get(ln, 0) + len(w)
        return cls(
            words=list(words),
            untouchable=list(untouchable) if untouchable else [False] * len(words),
            line_index=list(line_index),
            char_offsets=offsets,
        )

    @classmethod
    def from_model(cls, model, stop_words=frozenset()) -> "WordSequence":
        """Tokenize a parsed document and annotate replaceability.

        A token cannot be touched when it is capitalized mid-sentence,
        contains a digit, sits inside double quotes, appears in the
        stop list, or shares a PDF string item with a neighbour.
        """
        stop = {canon(w) for w in stop_words}
        words: list[str] = []
        untouchable: list[bool] = []
        lines: list[int] = []
        offsets: list[int] = []
        raws: list[str] = []
        prefixes: list[str] = []
        suffixes: list[str] = []
        doc_indices: list[int] = []
        acc: dict[int, int] = {}
        quote_depth = 0
        sentence_start = True
        for w in model.words:
            prefix, core, suffix = split_token(w.text)
            if '"' in prefix:
                quote_depth += prefix.count('"')
            fixed = (
                not core
                or any(ch.isdigit() for ch in core)
                or (core[:1].isupper() and not sentence_start)
                or quote_depth % 2 == 1
                or canon(core) in stop
                or not model.word_editable(w.index)
            )
            words.append(core)
            untouchable.append(fixed)
            lines.append(w.line)
            offsets.append(acc.get(w.line, 0))
            acc[w.line] = acc.get(w.line, 0) + len(w.text)
            raws.append(w.text)
            prefixes.append(prefix)
            suffixes.append(suffix)
            doc_indices.append(w.index)
            if '"' in suffix + core:
                quote_depth += (suffix + core).count('"')
            sentence_start = any(ch in _SENTENCE_END for ch in suffix)
        return cls(
            words=words,
            untouchable=untouchable,
            line_index=lines,
            char_offsets=offsets,
            raws=raws,
            prefixes=prefixes,
            suffixes=suffixes,
            doc_indices=doc_indices,
        )


# --------------------------------------------------------------------------
# Eligibility


def _length_ok(mode: str, original_core: str, candidate_word: str) -> bool:
    if mode == "no-longer-lines":
        return len(candidate_word) <= len(canon(original_core))
    return True


def eligible_mask(
    seq: WordSequence, graph: LexGraph, key: bytes, mode: str = DEFAULT_MODE
) -> list[bool]:
    """Payload positions: replaceable words with both bit labels on offer.

    Must stay payload independent; the extractor calls this on the
    archived original to find the same positions.
    """
    if mode not in MODES:
        raise ConfigurationError(f"unknown justification mode {mode!r}")
    out = []
    for j, word in enumerate(seq.words):
        if seq.untouchable[j]:
            out.append(False)
            continue
        v = graph.resolve(word)
        if v is None:
            out.append(False)
            continue
        labels = set()
        for u, _w in graph.homograph_neighbours(v):
            if _length_ok(mode, word, u[0]):
                labels.add(graph.label(v, u, key))
            if labels == {0, 1}:
                break
        out.append(labels == {0, 1})
    return out


# --------------------------------------------------------------------------
# Justification


@dataclass
class JustificationContext:
    """Per-line bookkeeping for alignment-preserving substitution.

    With no ``metric`` the position unit is the character count, the
    mono-spaced approximation; a metric maps a token to its rendered
    width and upgrades every position to exact units.
    """

    mode: str
    seq: WordSequence
    metric: Callable[[str], float] | None = None
    line_delta: dict[int, float] = field(default_factory=dict)
    _offsets: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        if self.metric is not None:
            acc: dict[int, float] = {}
            for raw, ln in zip(self.seq.raws, self.seq.line_index):
                self._offsets.append(acc.get(ln, 0.0))
                acc[ln] = acc.get(ln, 0.0) + self.metric(raw)

    def measure(self, token: str) -> float:
        return float(len(token)) if self.metric is None else self.metric(token)

    def replacement_raw(self, j: int, candidate: str) -> str:
        cased = match_case(self.seq.words[j], candidate)
        return self.seq.prefixes[j] + cased + self.seq.suffixes[j]

    def remaining(self, j: int) -> int:
        line = self.seq.line_index[j]
        return sum(
            1
            for k in range(j + 1, len(self.seq))
            if self.seq.line_index[k] == line
        )

    def p_original(self, j: int) -> float:
        if self.metric is None:
            return float(self.seq.char_offsets[j])
        return self._offsets[j]

    def p_watermarked(self, j: int) -> float:
        line = self.seq.line_index[j]
        return self.p_original(j) + self.line_delta.get(line, 0.0)

    def note_replacement(self, j: int, candidate: str) -> None:
        line = self.seq.line_index[j]
        delta = self.measure(self.replacement_raw(j, candidate)) - self.measure(
            self.seq.raws[j]
        )
        self.line_delta[line] = self.line_delta.get(line, 0.0) + delta


def q_value(
    following: int,
    p_original: float,
    p_watermarked: float,
    original_len: float,
    candidate_len: float,
) -> float:
    """Piecewise alignment coefficient in [0, 1].

    With no words left on the line the replacement must restore the
    line end exactly; otherwise the residual misalignment is amortized
    over the remaining words.
    """
    gap = p_original + original_len - p_watermarked - candidate_len
    if following == 0:
        return 1.0 if gap == 0 else 0.0
    return max(0.0, 1.0 - abs(gap / following))


def justification_coefficient(
    j: int, candidate: str, ctx: JustificationContext
) -> float:
    return q_value(
        ctx.remaining(j),
        ctx.p_original(j),
        ctx.p_watermarked(j),
        ctx.measure(ctx.seq.raws[j]),
        ctx.measure(ctx.replacement_raw(j, candidate)),
    )


def _measure(token: str, metric) -> float:
    return float(len(token)) if metric is None else metric(token)


def _same_size_synonym(
    source: LexicalSource, graph: LexGraph, v: tuple, metric=None
) -> str | None:
    """A non-homograph synset sibling the same size as the word, or None.

    Size is character count, or the metric when one is given.  Both
    endpoints run this with identical arguments, so a renounced
    position is recognizable without knowing the payload.
    """
    word, pos = v
    target = _measure(word, metric)
    best: str | None = None
    for sense in source.senses(word, pos):
        for member in sense.members:
            m = canon(member)
            if m == word or _measure(m, metric) != target:
                continue
            if graph.vertices.get((m, pos), False):
                continue  # homographs would read as payload
            if best is None or m < best:
                best = m
    return best


# --------------------------------------------------------------------------
# Embedding


@dataclass
class EmbedResult:
    success: bool
    replacements: dict[int, str]  # sequence index -> replacement core
    bit_positions: list[int]  # sequence index that carries each bit
    renounced: list[int] = field(default_factory=list)
    reason: str | None = None

    def document_edits(self, seq: WordSequence) -> dict[int, str]:
        """Replacement map keyed by document word index, punctuation-safe."""
        out = {}
        for j, word in self.replacements.items():
            cased = match_case(seq.words[j], word)
            out[seq.doc_indices[j]] = seq.prefixes[j] + cased + seq.suffixes[j]
        return out


def embed(
    seq: WordSequence,
    bits: list[int],
    graph: LexGraph,
    key: bytes,
    mode: str = DEFAULT_MODE,
    source: LexicalSource | None = None,
    metric=None,
) -> EmbedResult:
    """Walk the document, replacing one eligible word per payload bit.

    Returns ``success=False`` when the document runs out of eligible
    words before the payload does; that is an outcome, not an error.
    """
    if mode not in MODES:
        raise ConfigurationError(f"unknown justification mode {mode!r}")
    if mode in ("coefficient", "exact-width") and source is None:
        raise ConfigurationError(f"mode {mode!r} needs the lexical source")
    if mode == "exact-width" and metric is None:
        raise ConfigurationError("exact-width mode needs a width metric")
    if not bits:
        raise ValueError("payload is empty")
    elig = eligible_mask(seq, graph, key, mode)
    ctx = JustificationContext(mode, seq, metric if mode == "exact-width" else None)
    replacements: dict[int, str] = {}
    positions: list[int] = []
    renounced: list[int] = []
    j = 0
    remaining = list(bits)
    while remaining:
        while j < len(seq) and not elig[j]:
            j += 1
        if j >= len(seq):
            return EmbedResult(
                False, replacements, positions, renounced,
                reason=f"document exhausted with {len(remaining)} bits left",
            )
        bit = remaining[0]
        v = graph.resolve(seq.words[j])
        candidates = [
            (u, w)
            for u, w in graph.neighbours(v, bit, key)
            if _length_ok(mode, seq.words[j], u[0])
        ]
        assert candidates, "eligibility promised a candidate for each bit"
        if mode in ("coefficient", "exact-width"):
            scored = [
                (justification_coefficient(j, u[0], ctx), u, w)
                for u, w in candidates
            ]
            scored.sort(key=lambda e: (-e[0] * e[2], e[1]))
            best_q, best, _ = scored[0]
            if seq.line_last(j) and best_q <= 0.0:
                fallback = _same_size_synonym(source, graph, v, ctx.metric)
                if fallback is not None:
                    replacements[j] = fallback
                    renounced.append(j)
                    ctx.note_replacement(j, fallback)
                    j += 1
                    continue
                log.warning(
                    "word %d: no size-preserving fallback; embedding anyway", j
                )
            chosen = best
        else:
            chosen = candidates[0][0]
        replacements[j] = chosen[0]
        positions.append(j)
        ctx.note_replacement(j, chosen[0])
        remaining.pop(0)
        j += 1
    return EmbedResult(True, replacements, positions, renounced)


# --------------------------------------------------------------------------
# Extraction


def _related(graph: LexGraph, a: str, b: str) -> bool:
    """The three-clause resynchronization test between two spellings."""
    if canon(a) == canon(b):
        return True
    va = graph.resolve(a)
    vb = graph.resolve(b)
    if va is None or vb is None:
        return False
    if graph.adjacent(va, vb):
        return True
    return bool(graph.common_neighbours(va, vb))


def check_inserted(
    graph: LexGraph, d_j: str, marked: list[str], l: int, window: int
) -> int | None:
    """Offset of the first marked word ahead that relates to d_j."""
    for x in range(1, window + 1):
        if l + x < len(marked) and _related(graph, d_j, marked[l + x]):
            return x
    return None


def check_deleted(
    graph: LexGraph,
    w_l: str,
    original: list[str],
    j: int,
    window: int,
    elig: list[bool],
) -> tuple[int, int] | None:
    """(words deleted, payload words among them), or None.

    The caller emits one random erasure bit per deleted payload word so
    the outer code sees their positions.
    """
    for x in range(1, window + 1):
        if j + x < len(original) and _related(graph, original[j + x], w_l):
            return x, sum(1 for k in range(j, j + x) if elig[k])
    return None


def extract_bit(graph: LexGraph, original: str, replacement: str, key: bytes) -> int:
    """Keyed label of the (original, replacement) edge."""
    v = graph.resolve(original)
    u = graph.resolve(replacement)
    if v is None or u is None:
        raise ValueError("both words must resolve in the graph")
    return graph.label(v, u, key)


@dataclass
class ExtractResult:
    bits: list[int]
    erasures: list[int]  # bit positions that were guessed
    common_guesses: list[tuple[int, int, str]] = field(default_factory=list)

    @property
    def erasure_count(self) -> int:
        return len(self.erasures)


def extract(
    d_seq: WordSequence,
    w_seq: WordSequence,
    expected_bits: int,
    graph: LexGraph,
    key: bytes,
    resync_window: int = 2,
    mode: str = DEFAULT_MODE,
    source: LexicalSource | None = None,
    metric=None,
    rng=None,
    simplified: bool = False,
) -> ExtractResult:
    """Recover the payload by walking original and leaked copies together.

    ``resync_window`` is the largest run of consecutive inserted or
    deleted words survivable; more raises :class:`SyncLostError` with
    both cursor positions.  Insertion is always tested before deletion.
    """
    if mode in ("coefficient", "exact-width") and source is None:
        raise ConfigurationError(f"mode {mode!r} needs the lexical source")
    if mode == "exact-width" and metric is None:
        raise ConfigurationError("exact-width mode needs a width metric")
    rng = rng or secrets.SystemRandom()
    elig = eligible_mask(d_seq, graph, key, mode)
    d = d_seq.words
    w = w_seq.words
    bits: list[int] = []
    erasures: list[int] = []
    guesses: list[tuple[int, int, str]] = []
    presumed = 0  # consecutive simplified-mode presumptions

    def guess() -> None:
        erasures.append(len(bits))
        bits.append(rng.getrandbits(1))

    j = 0
    l = 0
    while len(bits) < expected_bits and j < len(d):
        if l >= len(w):
            # leaked copy ends early; the remaining originals were cut
            if elig[j]:
                guess()
            j += 1
            continue
        d_j, w_l = d[j], w[l]
        if not elig[j]:
            if _related(graph, d_j, w_l):
                j += 1
                l += 1
                presumed = 0
                continue
            x = check_inserted(graph, d_j, w, l, resync_window)
            if x is not None:
                j += 1
                l += x + 1
                presumed = 0
                continue
            hit = check_deleted(graph, w_l, d, j, resync_window, elig)
            if hit is not None:
                x, y = hit
                for _ in range(y):
                    guess()
                j += x
                presumed = 0
                continue
            if simplified and presumed < resync_window:
                presumed += 1  # presume one inserted word and move on
                l += 1
                continue
            raise SyncLostError(
                f"no relation between original word {j} and leaked word {l} "
                f"within the resync window", j, l,
            )
        # payload position
        v = graph.resolve(d_j)
        u = graph.resolve(w_l)
        if canon(d_j) == canon(w_l):
            guess()  # reverted to the original; value unknowable
            j += 1
            l += 1
            presumed = 0
            continue
        if u is not None and graph.is_homograph(u) and graph.adjacent(v, u):
            bits.append(graph.label(v, u, key))
            j += 1
            l += 1
            presumed = 0
            continue
        if mode in ("coefficient", "exact-width"):
            fallback = _same_size_synonym(source, graph, v, metric)
            if fallback is not None and canon(w_l) == fallback:
                j += 1  # renounced position: word replaced, no bit spent
                l += 1
                presumed = 0
                continue
        if u is not None:
            rs = [r for r in graph.common_neighbours(v, u) if graph.is_homograph(r)]
            if rs:
                r = min(rs)
                log.info(
                    "word %d/%d: reading bit through common neighbour %s", j, l, r
                )
                guesses.append((j, l, r[0]))
                bits.append(graph.label(v, r, key))
                j += 1
                l += 1
                presumed = 0
                continue
        x = check_inserted(graph, d_j, w, l, resync_window)
        if x is not None:
            l += x  # retest this payload word against the post-gap word
            presumed = 0
            continue
        hit = check_deleted(graph, w_l, d, j, resync_window, elig)
        if hit is not None:
            x, y = hit
            for _ in range(y):
                guess()
            j += x
            presumed = 0
            continue
        if simplified and presumed < resync_window:
            presumed += 1
            l += 1
            continue
        raise SyncLostError(
            f"no relation between original word {j} and leaked word {l} "
            f"within the resync window", j, l,
        )
    while len(bits) < expected_bits:
        guess()  # original exhausted; trailing positions unrecoverable
    return ExtractResult(bits[:expected_bits], erasures, guesses)
