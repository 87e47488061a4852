"""Payload embedding in inter-word space statistics.

Lines are cut into overlapping runs of consecutive words.  Each run is
assigned a class by reading the width-comparison labels of its words as
a binary number, and every run of class c carries payload bit c through
the sign of the difference between its odd and even space widths.  The
labels depend only on word widths, which spacing edits never touch, so
an extractor can recompute classes from the leaked document alone:
this channel needs no original.

Shifts come in compensating pairs, so line width is preserved exactly;
a run is left alone when the required shift would be visible or would
shrink a space below the parser's word-boundary threshold.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterator

from . import pdfio
from .errors import CapacityError, ConfigurationError, NoSignalError

__all__ = [
    "StructuralConfig",
    "Gap",
    "LineGeometry",
    "Segment",
    "SegmentPlan",
    "SpacePlan",
    "StructuralResult",
    "line_geometry",
    "word_labels",
    "segment_class",
    "iter_segments",
    "plan_embed",
    "embed_spaces",
    "extract_lines",
    "extract_model",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StructuralConfig:
    """Geometry of the spacing channel, shared by both endpoints.

    ``segment_words`` must be odd so the owned spaces split evenly into
    odd and even positions and paired shifts cancel.  All width values
    are in glyph-space units, the scale of TJ operands.
    """

    segment_words: int = 5
    n_classes: int = 16
    delta: float = 40.0
    max_shift: float = 80.0
    min_residual: float = 0.6
    space_threshold: float = float(pdfio.SPACE_THRESHOLD)

    def __post_init__(self) -> None:
        if self.segment_words < 3 or self.segment_words % 2 == 0:
            raise ConfigurationError("segment_words must be odd and at least 3")
        if self.n_classes < 1:
            raise ConfigurationError("n_classes must be positive")
        if self.delta <= 0:
            raise ConfigurationError("delta must be positive")
        if self.max_shift < self.delta / 2:
            raise ConfigurationError(
                "max_shift below delta/2 could never reach the target"
            )
        if not 0.0 <= self.min_residual <= 1.0:
            raise ConfigurationError("min_residual must be within [0, 1]")


@dataclass
class Gap:
    """One inter-word space; ``width`` is positive when readable.

    A gap drawn by a space glyph instead of a positioning operand has no
    adjustable value: ``width`` and ``space_index`` are then None and
    every run owning the gap is ignored by both endpoints.
    """

    width: float | None
    space_index: int | None = None


@dataclass
class LineGeometry:
    widths: list[float]
    gaps: list[Gap]  # one fewer than words

    def __post_init__(self) -> None:
        if self.gaps and len(self.gaps) != len(self.widths) - 1:
            raise ValueError("a line needs exactly one gap between words")


def word_labels(widths: list[float]) -> list[int]:
    """1 where a word is wider than its successor; the last word has none."""
    return [1 if widths[i] > widths[i + 1] else 0 for i in range(len(widths) - 1)]


def segment_class(labels: list[int], n_classes: int) -> int:
    value = 0
    for bit in labels:
        value = (value << 1) | bit
    return value % n_classes


@dataclass
class Segment:
    line: int
    start: int  # word offset within the line
    klass: int
    gaps: list[Gap]

    def widths(self) -> list[float]:
        return [g.width for g in self.gaps]

    def diff(self) -> float:
        """Mean odd-position space width minus mean even-position width."""
        odd = self.widths()[0::2]
        even = self.widths()[1::2]
        return sum(odd) / len(odd) - sum(even) / len(even)


def iter_segments(
    lines: list[LineGeometry], config: StructuralConfig
) -> Iterator[Segment]:
    """Complete runs of ``segment_words`` words, never spanning lines.

    Consecutive runs share their boundary word, so a line of n words
    yields floor((n - 1) / (s - 1)) runs.  Runs owning an unreadable
    gap are dropped.
    """
    s = config.segment_words
    for line_no, line in enumerate(lines):
        labels = word_labels(line.widths)
        start = 0
        while start + s <= len(line.widths):
            gaps = line.gaps[start:start + s - 1]
            if all(g.width is not None for g in gaps):
                yield Segment(
                    line_no,
                    start,
                    segment_class(labels[start:start + s - 1], config.n_classes),
                    gaps,
                )
            start += s - 1


def line_geometry(model: pdfio.DocumentModel) -> list[LineGeometry]:
    """Word widths and gap widths per line of a parsed document."""
    by_pair = {
        (sp.left_word, sp.right_word): sp
        for sp in model.spaces
        if sp.left_word is not None and sp.right_word is not None
    }
    lines: list[LineGeometry] = []
    for line_no in sorted({w.line for w in model.words}):
        words = model.line_words(line_no)
        widths = [model.word_width(w) for w in words]
        gaps = []
        for a, b in zip(words, words[1:]):
            sp = by_pair.get((a.index, b.index))
            if sp is None or sp.value is None:
                gaps.append(Gap(None))
            else:
                gaps.append(Gap(-sp.value, sp.index))
        lines.append(LineGeometry(widths, gaps))
    return lines


# ---------------------------------------------------------------------------
# Embedding


@dataclass
class SegmentPlan:
    line: int
    start: int
    klass: int
    bit: int | None
    diff_before: float
    shift: float
    applied: bool
    note: str

    def to_dict(self) -> dict:
        return {
            "line": self.line, "start": self.start, "class": self.klass,
            "bit": self.bit, "diff_before": round(self.diff_before, 3),
            "shift": round(self.shift, 3), "applied": self.applied,
            "note": self.note,
        }


@dataclass
class SpacePlan:
    """Everything the embedder decided, one record per complete run."""

    segments: list[SegmentPlan] = field(default_factory=list)
    space_values: dict[int, float] = field(default_factory=dict)

    @property
    def applied_count(self) -> int:
        return sum(1 for s in self.segments if s.applied)

    def to_json(self) -> str:
        return json.dumps(
            {"segments": [s.to_dict() for s in self.segments]}, indent=2
        )


def plan_embed(
    lines: list[LineGeometry], bits: list[int], config: StructuralConfig
) -> SpacePlan:
    if len(bits) > config.n_classes:
        raise CapacityError(
            f"{len(bits)} payload bits exceed the {config.n_classes} "
            f"segment classes"
        )
    plan = SpacePlan()
    for seg in iter_segments(lines, config):
        if seg.klass >= len(bits):
            plan.segments.append(SegmentPlan(
                seg.line, seg.start, seg.klass, None, seg.diff(), 0.0,
                False, "class unused",
            ))
            continue
        bit = bits[seg.klass]
        diff0 = seg.diff()
        target = config.delta if bit else -config.delta
        if (diff0 > 0) == (bit == 1) and abs(diff0) >= config.delta:
            plan.segments.append(SegmentPlan(
                seg.line, seg.start, seg.klass, bit, diff0, 0.0,
                True, "already past target",
            ))
            continue
        x = (target - diff0) / 2.0
        note = ""
        if abs(x) > config.max_shift:
            note = "shift over limit"
        else:
            for pos, gap in enumerate(seg.gaps):
                new = gap.width + (x if pos % 2 == 0 else -x)
                if new < config.min_residual * gap.width:
                    note = "space squeezed too far"
                    break
                if new <= config.space_threshold:
                    note = "space would stop separating words"
                    break
        if note:
            plan.segments.append(SegmentPlan(
                seg.line, seg.start, seg.klass, bit, diff0, x, False, note,
            ))
            continue
        for pos, gap in enumerate(seg.gaps):
            new = gap.width + (x if pos % 2 == 0 else -x)
            gap.width = new  # later runs on the line see the shifted value
            plan.space_values[gap.space_index] = -new
        plan.segments.append(SegmentPlan(
            seg.line, seg.start, seg.klass, bit, diff0, x, True, "shifted",
        ))
    return plan


def embed_spaces(
    model: pdfio.DocumentModel, bits: list[int], config: StructuralConfig
) -> tuple[pdfio.Edits, SpacePlan]:
    plan = plan_embed(line_geometry(model), bits, config)
    return pdfio.Edits(space_values=dict(plan.space_values)), plan


# ---------------------------------------------------------------------------
# Extraction


@dataclass
class StructuralResult:
    bits: list[int | None]  # None marks an erasure
    confidences: list[float]
    votes: list[tuple[int, int, int]]  # per class: ones, zeros, erasures

    @property
    def confidence(self) -> float:
        return min(self.confidences) if self.confidences else 0.0

    @property
    def erasures(self) -> list[int]:
        return [i for i, b in enumerate(self.bits) if b is None]


def extract_lines(
    lines: list[LineGeometry], expected_bits: int, config: StructuralConfig
) -> StructuralResult:
    """Blind majority vote over every complete run in the document."""
    if expected_bits > config.n_classes:
        raise CapacityError(
            f"{expected_bits} payload bits exceed the {config.n_classes} "
            f"segment classes"
        )
    tallies = [[0, 0, 0] for _ in range(expected_bits)]  # ones, zeros, erasures
    seen = False
    for seg in iter_segments(lines, config):
        seen = True
        if seg.klass >= expected_bits:
            continue
        diff = seg.diff()
        if abs(diff) < config.delta / 2.0:
            tallies[seg.klass][2] += 1
        elif diff > 0:
            tallies[seg.klass][0] += 1
        else:
            tallies[seg.klass][1] += 1
    if not seen:
        raise NoSignalError(
            "no line holds a complete word run; nothing to decode"
        )
    bits: list[int | None] = []
    confidences: list[float] = []
    votes: list[tuple[int, int, int]] = []
    for ones, zeros, erased in tallies:
        total = ones + zeros + erased
        votes.append((ones, zeros, erased))
        if total == 0 or ones == zeros:
            bits.append(None)
            confidences.append(0.0)
            continue
        winner = 1 if ones > zeros else 0
        bits.append(winner)
        confidences.append(max(ones, zeros) / total)
    return StructuralResult(bits, confidences, votes)


def extract_model(
    model: pdfio.DocumentModel, expected_bits: int, config: StructuralConfig
) -> StructuralResult:
    return extract_lines(line_geometry(model), expected_bits, config)
