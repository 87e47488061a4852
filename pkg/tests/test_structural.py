"""Spacing-statistics channel: segmentation, embedding, blind extraction.

Gap widths are plain numbers here; the oracle for labels and classes is
small enough to state inline.  Integration tests go through a real
document build-parse-edit-reparse cycle so the TJ operand bookkeeping
is exercised end to end.
"""

from __future__ import annotations

import pytest

from tracemark import pdfio
from tracemark.errors import CapacityError, ConfigurationError, NoSignalError
from tracemark.structural import (
    Gap,
    LineGeometry,
    StructuralConfig,
    embed_spaces,
    extract_lines,
    extract_model,
    iter_segments,
    line_geometry,
    plan_embed,
    segment_class,
    word_labels,
)


def gaps(*widths):
    return [Gap(w) for w in widths]


def line_for_labels(labels, base=300.0):
    """Widths realizing a label sequence, equal 300-unit gaps between."""
    lengths = [4.0]
    for bit in labels:
        lengths.append(lengths[-1] - 1.0 if bit else lengths[-1] + 1.0)
    widths = [v * 100 for v in lengths]
    return LineGeometry(
        widths, [Gap(base, space_index=k) for k in range(len(widths) - 1)]
    )


class TestConfig:
    def test_defaults_valid(self):
        cfg = StructuralConfig()
        assert cfg.segment_words == 5
        assert cfg.n_classes == 16

    @pytest.mark.parametrize("kwargs", [
        {"segment_words": 4},
        {"segment_words": 1},
        {"n_classes": 0},
        {"delta": 0.0},
        {"delta": 40.0, "max_shift": 10.0},
        {"min_residual": 1.5},
    ])
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ConfigurationError):
            StructuralConfig(**kwargs)


class TestLabels:
    def test_wider_than_successor(self):
        assert word_labels([300, 250, 250, 400]) == [1, 0, 0]

    def test_tie_is_zero(self):
        assert word_labels([500, 500]) == [0]

    def test_short_lines(self):
        assert word_labels([420]) == []
        assert word_labels([]) == []

    def test_class_binary_msb_first(self):
        assert segment_class([1, 0, 1, 1], 16) == 11
        assert segment_class([1, 0, 0, 0], 16) == 8
        assert segment_class([0, 0, 0, 0], 16) == 0

    def test_class_wraps_modulo(self):
        assert segment_class([1, 1, 1, 1], 5) == 0
        assert segment_class([1, 0, 1, 1, 0, 1], 24) == 45 % 24


class TestSegments:
    CFG = StructuralConfig()

    def starts(self, n_words):
        line = LineGeometry([300.0] * n_words, gaps(*[250.0] * (n_words - 1)))
        return [s.start for s in iter_segments([line], self.CFG)]

    def test_stride_shares_boundary_word(self):
        assert self.starts(13) == [0, 4, 8]
        assert self.starts(9) == [0, 4]
        assert self.starts(8) == [0]

    def test_too_short_line_has_none(self):
        assert self.starts(4) == []

    def test_segments_never_span_lines(self):
        lines = [
            LineGeometry([300.0] * 4, gaps(*[250.0] * 3)),
            LineGeometry([300.0] * 4, gaps(*[250.0] * 3)),
        ]
        assert list(iter_segments(lines, self.CFG)) == []

    def test_owned_gaps(self):
        line = line_for_labels([1, 0, 1, 1, 0, 1, 0, 0], base=300.0)
        segs = list(iter_segments([line], self.CFG))
        assert [s.start for s in segs] == [0, 4]
        assert segs[0].gaps is not segs[1].gaps
        assert len(segs[0].gaps) == 4
        assert segs[0].klass == segment_class([1, 0, 1, 1], 16)
        assert segs[1].klass == segment_class([0, 1, 0, 0], 16)

    def test_unreadable_gap_drops_only_its_segment(self):
        line = line_for_labels([0] * 8)
        line.gaps[1] = Gap(None)
        segs = list(iter_segments([line], self.CFG))
        assert [s.start for s in segs] == [4]

    def test_diff_alternating_means(self):
        line = LineGeometry(
            [300.0] * 5, gaps(320.0, 280.0, 320.0, 280.0)
        )
        seg = next(iter_segments([line], self.CFG))
        assert seg.diff() == pytest.approx(40.0)


class TestEmbedPlan:
    CFG = StructuralConfig()

    def test_exact_target_and_width_conservation(self):
        line = line_for_labels([0, 0, 0, 0])  # class 0
        before = sum(g.width for g in line.gaps)
        plan = plan_embed([line], [1], self.CFG)
        assert plan.applied_count == 1
        seg = next(iter_segments([line], self.CFG))
        assert seg.diff() == pytest.approx(self.CFG.delta)
        assert sum(g.width for g in line.gaps) == pytest.approx(before)
        assert len(plan.space_values) == 4

    def test_zero_bit_targets_negative_delta(self):
        line = line_for_labels([0, 0, 0, 0])
        plan_embed([line], [0], self.CFG)
        seg = next(iter_segments([line], self.CFG))
        assert seg.diff() == pytest.approx(-self.CFG.delta)

    def test_already_past_target_untouched(self):
        line = line_for_labels([0, 0, 0, 0])
        for i, g in enumerate(line.gaps):
            g.width = 350.0 if i % 2 == 0 else 250.0  # diff +100
        plan = plan_embed([line], [1], self.CFG)
        assert plan.space_values == {}
        assert plan.segments[0].applied
        assert plan.segments[0].note == "already past target"

    def test_shift_over_limit_skipped(self):
        line = line_for_labels([0, 0, 0, 0])
        for i, g in enumerate(line.gaps):
            g.width = 250.0 if i % 2 == 0 else 500.0  # diff -250
        plan = plan_embed([line], [1], self.CFG)  # would need x = 145
        assert not plan.segments[0].applied
        assert plan.segments[0].note == "shift over limit"
        assert plan.space_values == {}

    def test_residual_guard(self):
        cfg = StructuralConfig(delta=900.0, max_shift=500.0)
        line = line_for_labels([0, 0, 0, 0], base=1000.0)
        plan = plan_embed([line], [1], cfg)  # x = 450, floor is 600
        assert not plan.segments[0].applied
        assert plan.segments[0].note == "space squeezed too far"

    def test_threshold_guard(self):
        cfg = StructuralConfig(delta=300.0, max_shift=200.0, min_residual=0.0)
        line = line_for_labels([0, 0, 0, 0])  # gaps 300, x = 150 -> 150
        plan = plan_embed([line], [1], cfg)
        assert not plan.segments[0].applied
        assert plan.segments[0].note == "space would stop separating words"

    def test_unused_class_left_alone(self):
        line = line_for_labels([0, 0, 0, 1])  # class 1
        plan = plan_embed([line], [1], self.CFG)  # only class 0 carries
        assert plan.space_values == {}
        assert plan.segments[0].note == "class unused"

    def test_capacity_checked(self):
        line = line_for_labels([0, 0, 0, 0])
        with pytest.raises(CapacityError):
            plan_embed([line], [0] * 17, self.CFG)

    def test_plan_json(self):
        line = line_for_labels([0, 0, 0, 0])
        plan = plan_embed([line], [1], self.CFG)
        assert '"class": 0' in plan.to_json()


class TestExtract:
    CFG = StructuralConfig()

    def test_clean_majority(self):
        lines = [line_for_labels([0, 0, 0, 0]) for _ in range(3)]
        for line in lines[:2]:
            for i, g in enumerate(line.gaps):
                g.width += 40.0 if i % 2 == 0 else -40.0  # diff +80
        for i, g in enumerate(lines[2].gaps):
            g.width += -40.0 if i % 2 == 0 else 40.0  # diff -80
        result = extract_lines(lines, 1, self.CFG)
        assert result.bits == [1]
        assert result.confidences == [pytest.approx(2 / 3)]
        assert result.votes == [(2, 1, 0)]

    def test_small_diff_votes_erasure(self):
        line = line_for_labels([0, 0, 0, 0])
        for i, g in enumerate(line.gaps):
            g.width += 9.0 if i % 2 == 0 else -9.0  # diff 18 < delta/2
        result = extract_lines([line], 1, self.CFG)
        assert result.bits == [None]
        assert result.confidence == 0.0
        assert result.erasures == [0]

    def test_uncovered_class_is_erasure(self):
        line = line_for_labels([0, 0, 0, 0])
        plan_embed([line], [1], self.CFG)
        result = extract_lines([line], 2, self.CFG)
        assert result.bits[0] == 1
        assert result.bits[1] is None
        assert result.confidences == [1.0, 0.0]

    def test_tied_votes_are_erasure(self):
        lines = [line_for_labels([0, 0, 0, 0]) for _ in range(2)]
        for sign, line in zip((1, -1), lines):
            for i, g in enumerate(line.gaps):
                g.width += sign * (40.0 if i % 2 == 0 else -40.0)
        result = extract_lines(lines, 1, self.CFG)
        assert result.bits == [None]

    def test_no_complete_segment_raises(self):
        line = LineGeometry([300.0] * 3, gaps(250.0, 250.0))
        with pytest.raises(NoSignalError):
            extract_lines([line], 1, self.CFG)

    def test_capacity_checked(self):
        line = line_for_labels([0, 0, 0, 0])
        with pytest.raises(CapacityError):
            extract_lines([line], 17, self.CFG)


def build_test_pdf(label_lines):
    """One page whose word lengths realize the given per-line labels."""
    doc_lines = []
    for labels in label_lines:
        lengths = [2]
        for bit in labels:
            lengths.append(lengths[-1] - 1 if bit else lengths[-1] + 1)
        items: list = []
        for k, n in enumerate(lengths):
            if k:
                items.append(-300)
            items.append(chr(ord("a") + k) * n)
        doc_lines.append(items)
    return pdfio.build_document(doc_lines)


class TestDocumentRoundTrip:
    CFG = StructuralConfig()

    # 13 words, three segments with classes 0, 1 and 2
    LABELS = [0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 1, 0]

    def test_embed_serialize_extract(self):
        model = pdfio.parse(build_test_pdf([self.LABELS]))
        bits = [1, 0, 1]
        edits, plan = embed_spaces(model, bits, self.CFG)
        assert plan.applied_count == 3
        marked = pdfio.parse(pdfio.serialize(model, edits))
        result = extract_model(marked, 3, self.CFG)
        assert result.bits == bits
        assert result.confidence == 1.0

    def test_line_width_preserved_in_document(self):
        model = pdfio.parse(build_test_pdf([self.LABELS]))
        geo0 = line_geometry(model)
        edits, _ = embed_spaces(model, [1, 0, 1], self.CFG)
        marked = pdfio.parse(pdfio.serialize(model, edits))
        geo1 = line_geometry(marked)
        for before, after in zip(geo0, geo1):
            total0 = sum(g.width for g in before.gaps) + sum(before.widths)
            total1 = sum(g.width for g in after.gaps) + sum(after.widths)
            assert total1 == pytest.approx(total0, abs=1.0)

    def test_equalized_spaces_report_zero_confidence(self):
        model = pdfio.parse(build_test_pdf([self.LABELS]))
        edits, _ = embed_spaces(model, [1, 0, 1], self.CFG)
        marked = pdfio.parse(pdfio.serialize(model, edits))
        flat = pdfio.Edits(
            space_values={sp.index: -300.0 for sp in marked.spaces}
        )
        equalized = pdfio.parse(pdfio.serialize(marked, flat))
        result = extract_model(equalized, 3, self.CFG)
        assert result.bits == [None, None, None]
        assert result.confidence == 0.0

    def test_extraction_needs_no_original(self):
        # only the marked bytes cross this line
        marked_bytes = None
        model = pdfio.parse(build_test_pdf([self.LABELS]))
        edits, _ = embed_spaces(model, [0, 1, 1], self.CFG)
        marked_bytes = pdfio.serialize(model, edits)
        result = extract_model(pdfio.parse(marked_bytes), 3, self.CFG)
        assert result.bits == [0, 1, 1]

    def test_multi_line_votes_accumulate(self):
        model = pdfio.parse(build_test_pdf([self.LABELS, self.LABELS]))
        bits = [1, 1, 0]
        edits, plan = embed_spaces(model, bits, self.CFG)
        assert plan.applied_count == 6
        marked = pdfio.parse(pdfio.serialize(model, edits))
        result = extract_model(marked, 3, self.CFG)
        assert result.bits == bits
        assert result.votes == [(2, 0, 0), (2, 0, 0), (0, 2, 0)]
