"""Whole-document embedding and extraction across all three channels.

The corpus is a fifty-line page of synthetic homograph families spread
between width-varied filler words, built so that every family word is a
usable payload position and every segment class of both structural
layouts receives at least one vote.  The filler stream is drawn from a
seeded generator that never repeats a word within four positions, which
keeps word deletions recognizable during resynchronization.
"""

from __future__ import annotations

import json
import random
from datetime import datetime, timezone
from pathlib import Path

import matplotlib
import pytest

from tracemark import pdfio, pipeline, structural
from tracemark.errors import ConfigurationError
from tracemark.lexgraph import LexicalSource, build_graph
from tracemark.linguistic import WordSequence, eligible_mask
from tracemark.payload import KeySet, LogIndependentPayload
from tracemark.pipeline import PipelineConfig, embed_document, extract_document

_TTF = Path(matplotlib.get_data_path()) / "fonts" / "ttf"
DEJAVU = (_TTF / "DejaVuSans.ttf").read_bytes()
SERIF = (_TTF / "DejaVuSerif.ttf").read_bytes()

N_FAMILIES = 24
MEMBERS = "abcde"
N_CARRIERS = 160
PER_LINE = 13
FILLER_SEED = 18
FILLER_POOL = [
    "ab", "benchmarking", "cedar", "do", "elongations", "fig",
    "gravitational", "ha", "ivy", "jackrabbit", "kiln", "lumberyards",
    "moat", "nag", "overabundant", "pews",
]

DOWNLOAD_ID = 0xBEEF
IDENT = LogIndependentPayload(
    user_id=0x0DDBA11,
    timestamp=datetime(2024, 5, 17, 10, 30, tzinfo=timezone.utc),
    nonce=0x5A,
)

RAW = bytes.fromhex("a6a3ca")
RAW_CONFIG = PipelineConfig(
    structural=structural.StructuralConfig(segment_words=7, n_classes=24)
)


def fam_base(i: int) -> str:
    return chr(97 + i // 5) + chr(97 + i % 5)


def pipeline_source() -> LexicalSource:
    """Two dozen five-member families, every member a homograph."""
    synsets = [
        {"id": "top.n.01", "pos": "n", "members": ["topmost"], "ic": 0.0,
         "depth": 1, "hypernyms": []},
    ]
    for i in range(N_FAMILIES):
        base = fam_base(i)
        shared = ["w" + base + m for m in MEMBERS]
        partners = ["p" + base + m for m in MEMBERS]
        synsets.append({
            "id": f"fam{base}.n.01", "pos": "n", "members": shared,
            "ic": 1.5, "depth": 2, "hypernyms": ["top.n.01"],
        })
        for k, (member, partner) in enumerate(zip(shared, partners)):
            synsets.append({
                "id": f"fam{base}.n.{k + 2:02d}", "pos": "n",
                "members": [member, partner], "ic": 2.5,
                "depth": 3, "hypernyms": [f"fam{base}.n.01"],
            })
    return LexicalSource.from_dict({
        "version": 1,
        "pos_taxonomies": {"n": {"max_depth": 3}},
        "synsets": synsets,
    })


@pytest.fixture(scope="module")
def graph():
    return build_graph(pipeline_source())


@pytest.fixture(scope="module")
def keys(graph):
    """A key set whose graph key makes every carrier word eligible."""
    def ok(key: bytes) -> bool:
        for i in range(N_FAMILIES):
            base = fam_base(i)
            a = graph.resolve("w" + base + "a")
            labels = {
                graph.label(a, graph.resolve("w" + base + m), key)
                for m in "bcde"
            }
            if labels != {0, 1}:
                return False
        return True

    key = next(
        i.to_bytes(4, "big") for i in range(100000) if ok(i.to_bytes(4, "big"))
    )
    return KeySet(enc_key=b"E" * 32, mac_key=b"M" * 32, graph_key=key)


def corpus_words() -> list[str]:
    rng = random.Random(FILLER_SEED)
    words: list[str] = []
    recent: list[str] = []

    def pick() -> str:
        while True:
            w = rng.choice(FILLER_POOL)
            if w not in recent:
                return w

    for k in range(N_CARRIERS):
        words.append("w" + fam_base(k % N_FAMILIES) + "a")
        recent = recent[-3:] + [words[-1]]
        for _ in range(3):
            w = pick()
            words.append(w)
            recent = recent[-3:] + [w]
    return words


def build_corpus(words: list[str] | None = None, font_file: bytes | None = DEJAVU) -> bytes:
    words = words if words is not None else corpus_words()
    lines = []
    for at in range(0, len(words), PER_LINE):
        chunk = words[at:at + PER_LINE]
        items: list = []
        for w in chunk:
            if items:
                items.append(-300.0)
            items.append(w)
        lines.append(items)
    return pdfio.build_document(lines, font_file=font_file)


@pytest.fixture(scope="module")
def original():
    return build_corpus()


@pytest.fixture(scope="module")
def marked(original, keys, graph):
    out, report = embed_document(
        original, keys, graph, identity=IDENT, download_id=DOWNLOAD_ID
    )
    assert [c.status for c in report.channels] == ["embedded"] * 3
    return out, report


def rewrite(marked_bytes: bytes, **edit_kwargs) -> bytes:
    model = pdfio.parse(marked_bytes)
    return pdfio.serialize(model, pdfio.Edits(**edit_kwargs))


# ---------------------------------------------------------------------------


class TestConfig:
    def test_defaults(self):
        config = PipelineConfig()
        assert config.download_id_bits == 16
        assert config.identity_bytes() == 9
        assert config.channels == ("linguistic", "structural", "fontmark")

    def test_id_bits_must_fit_the_classes(self):
        with pytest.raises(ConfigurationError):
            PipelineConfig(id_bits=17)

    def test_unknown_channel_rejected(self):
        with pytest.raises(ConfigurationError):
            PipelineConfig(channels=("linguistic", "spectral"))

    def test_unknown_timestamp_mode_rejected(self):
        with pytest.raises(ConfigurationError):
            PipelineConfig(ts_mode="iso99")


class TestEmbed:
    def test_corpus_has_the_planned_carriers(self, original, graph, keys):
        seq = WordSequence.from_model(pdfio.parse(original))
        assert sum(eligible_mask(seq, graph, keys.graph_key)) == N_CARRIERS

    def test_all_channels_report_embedded(self, marked):
        _, report = marked
        assert report.any_embedded
        assert report.embedded == ["linguistic", "structural", "fontmark"]

    def test_linguistic_wraps_and_fills_the_page(self, marked):
        detail = marked[1].channel("linguistic").detail
        assert detail["wrapped"] is True
        assert detail["sealed_bytes"] == 17  # 9 identity + 8 MAC
        assert detail["parity_t"] == 3
        assert detail["protected_bytes"] == 20
        assert detail["payload_bits"] == 160
        assert detail["usable_words"] == N_CARRIERS
        assert detail["replaced_words"] == N_CARRIERS

    def test_structural_covers_every_class(self, marked):
        detail = marked[1].channel("structural").detail
        assert detail["payload_bits"] == 16
        assert detail["classes_covered"] == list(range(16))
        assert detail["shifted"] > 0

    def test_fontmark_moves_codes(self, marked):
        detail = marked[1].channel("fontmark").detail
        assert detail["resource"] == "F1"
        assert detail["moved_codes"] > 0

    def test_marked_document_still_parses(self, marked, original):
        model = pdfio.parse(marked[0])
        assert len(model.words) == len(pdfio.parse(original).words)

    def test_raw_payload_excludes_the_others(self, original, keys, graph):
        with pytest.raises(ConfigurationError):
            embed_document(original, keys, graph, raw=RAW, identity=IDENT)
        with pytest.raises(ConfigurationError):
            embed_document(original, keys, graph, raw=RAW, download_id=1)
        with pytest.raises(ConfigurationError):
            embed_document(original, keys, graph, raw=b"")

    def test_missing_payload_pieces_are_configuration_errors(
        self, original, keys, graph
    ):
        with pytest.raises(ConfigurationError):
            embed_document(original, keys, graph, download_id=1)  # no identity
        with pytest.raises(ConfigurationError):
            embed_document(original, keys, graph, identity=IDENT)  # no id

    def test_disabled_channels_are_skipped(self, original, keys, graph):
        config = PipelineConfig(channels=("fontmark",))
        out, report = embed_document(
            original, keys, graph, download_id=DOWNLOAD_ID, config=config
        )
        assert report.channel("linguistic").status == "disabled"
        assert report.channel("structural").status == "disabled"
        assert report.embedded == ["fontmark"]
        model = pdfio.parse(out)
        clean = pdfio.parse(original)
        # spaces untouched, strings garbled
        assert [s.value for s in model.spaces] == [s.value for s in clean.spaces]
        assert model.word_texts() != clean.word_texts()

    def test_oversized_download_id_fails_only_structural(
        self, original, keys, graph
    ):
        out, report = embed_document(
            original, keys, graph, identity=IDENT, download_id=1 << 20
        )
        assert report.channel("structural").status == "failed"
        assert "bits" in report.channel("structural").reason
        assert report.channel("fontmark").status == "embedded"
        assert report.any_embedded

    def test_fontless_document_fails_only_fontmark(self, keys, graph):
        words = corpus_words()[: 4 * 40]
        doc = build_corpus(words, font_file=None)
        out, report = embed_document(
            doc, keys, graph, identity=IDENT, download_id=3
        )
        assert report.channel("fontmark").status == "failed"
        assert "font" in report.channel("fontmark").reason
        assert report.channel("linguistic").status in ("embedded", "failed")
        assert report.any_embedded

    def test_report_serializes(self, marked):
        data = json.loads(marked[1].to_json())
        assert data["version"] == pipeline.REPORT_VERSION
        assert set(data["channels"]) == {"linguistic", "structural", "fontmark"}


class TestExtractClean:
    @pytest.fixture(scope="class")
    def report(self, marked, original, keys, graph):
        return extract_document(marked[0], original, keys, graph)

    def test_fontmark_recovers_the_id(self, report):
        entry = report.channel("fontmark")
        assert entry.status == "recovered"
        assert entry.payload == DOWNLOAD_ID

    def test_structural_recovers_the_id(self, report):
        entry = report.channel("structural")
        assert entry.status == "recovered"
        assert entry.payload == DOWNLOAD_ID
        assert entry.detail["confidence"] == 1.0
        assert entry.detail["erasure_classes"] == []

    def test_linguistic_recovers_the_identity(self, report):
        entry = report.channel("linguistic")
        assert entry.status == "recovered"
        assert entry.detail["erasure_bits"] == 0
        assert entry.detail["identity"] == {
            "user_id": IDENT.user_id,
            "timestamp": "2024-05-17T10:30:00+00:00",
            "nonce": IDENT.nonce,
        }

    def test_report_accessors(self, report):
        assert report.download_id == DOWNLOAD_ID
        assert report.identity["user_id"] == IDENT.user_id
        data = json.loads(report.to_json())
        assert data["version"] == pipeline.REPORT_VERSION
        assert data["download_id"] == DOWNLOAD_ID

    def test_raw_mode_round_trips_on_every_channel(self, original, keys, graph):
        out, report = embed_document(
            original, keys, graph, raw=RAW, config=RAW_CONFIG
        )
        assert [c.status for c in report.channels] == ["embedded"] * 3
        got = extract_document(
            out, original, keys, graph, config=RAW_CONFIG, raw_len=len(RAW)
        )
        for name in pipeline.CHANNELS:
            entry = got.channel(name)
            assert entry.status == "recovered", name
            assert entry.payload_hex == RAW.hex(), name

    def test_unmarked_document_reads_absent(self, original, keys, graph):
        report = extract_document(original, original, keys, graph)
        assert report.channel("fontmark").status == "absent"
        assert report.channel("structural").status == "absent"
        assert report.channel("linguistic").status == "absent"
        assert report.download_id is None
        assert report.identity is None


class TestExtractUnderAttack:
    def test_reverted_substitution_is_healed_by_parity(
        self, marked, original, keys, graph
    ):
        clean = pdfio.parse(original)
        first_carrier = clean.words[0].text
        attacked = rewrite(marked[0], word_text={0: first_carrier})
        report = extract_document(attacked, original, keys, graph)
        entry = report.channel("linguistic")
        assert entry.status == "recovered"
        assert entry.detail["erasure_bits"] == 1
        assert entry.detail["identity"]["user_id"] == IDENT.user_id

    def test_insert_and_delete_within_the_window(
        self, marked, original, keys, graph
    ):
        model = pdfio.parse(marked[0])
        filler = model.words[2]  # between the first two carriers
        victim = model.words[401]  # a filler far away; 400 is a carrier
        attacked = pdfio.serialize(model, pdfio.Edits(word_text={
            filler.index: filler.text + " zzz qqq",
            victim.index: "",
        }))
        report = extract_document(attacked, original, keys, graph)
        entry = report.channel("linguistic")
        assert entry.status == "recovered"
        assert entry.detail["identity"]["user_id"] == IDENT.user_id
        assert report.download_id == DOWNLOAD_ID

    def test_insertions_beyond_the_window_lose_sync(
        self, marked, original, keys, graph
    ):
        model = pdfio.parse(marked[0])
        filler = model.words[2]
        attacked = pdfio.serialize(model, pdfio.Edits(word_text={
            filler.index: filler.text + " zzz qqq vvv",
        }))
        report = extract_document(attacked, original, keys, graph)
        entry = report.channel("linguistic")
        assert entry.status == "failed"
        assert entry.detail["error"] == "SyncLostError"
        assert "resync" in entry.reason
        # the other channels are not dragged down
        assert report.channel("fontmark").status == "recovered"
        assert report.channel("structural").status == "recovered"
        assert report.download_id == DOWNLOAD_ID

    def test_wrong_mac_key_never_authenticates(
        self, marked, original, keys, graph
    ):
        forged = KeySet(
            enc_key=keys.enc_key, mac_key=b"X" * 32, graph_key=keys.graph_key
        )
        report = extract_document(marked[0], original, forged, graph)
        entry = report.channel("linguistic")
        assert entry.status == "failed"
        assert entry.detail["error"] == "AuthenticationFailure"
        assert report.identity is None

    def test_equalized_spaces_report_erasures_not_payloads(
        self, marked, original, keys, graph
    ):
        model = pdfio.parse(marked[0])
        flat = {s.index: -300.0 for s in model.spaces if s.shiftable}
        attacked = pdfio.serialize(model, pdfio.Edits(space_values=flat))
        report = extract_document(attacked, original, keys, graph)
        entry = report.channel("structural")
        assert entry.status == "absent"
        assert entry.detail["confidence"] == 0.0
        assert all(b is None for b in entry.detail["bits"])
        # linguistic and fontmark are untouched by re-justification
        assert report.channel("linguistic").status == "recovered"
        assert report.channel("fontmark").status == "recovered"
        assert report.download_id == DOWNLOAD_ID


class TestFontAttacks:
    def test_substituted_font_recovers_by_text_alignment(
        self, marked, original, keys, graph
    ):
        attacked = rewrite(marked[0], font_file=SERIF, font_resource="F1")
        report = extract_document(attacked, original, keys, graph)
        entry = report.channel("fontmark")
        assert entry.status == "unavailable"
        assert "outline" in entry.reason
        assert entry.detail["text_recovery"]["payload"] == DOWNLOAD_ID
        assert entry.detail["text_recovery"]["confirmed_pairs"] > 0
        # the garble map recovered from text lets the other channels read
        assert report.channel("structural").status == "recovered"
        assert report.channel("linguistic").status == "recovered"
        assert report.download_id == DOWNLOAD_ID
        assert report.identity["user_id"] == IDENT.user_id

    def test_restored_font_over_garbled_text_is_flagged(
        self, marked, original, keys, graph
    ):
        attacked = rewrite(marked[0], font_file=DEJAVU, font_resource="F1")
        report = extract_document(attacked, original, keys, graph)
        entry = report.channel("fontmark")
        assert entry.status == "failed"
        assert "restored" in entry.reason
        assert entry.detail["text_recovery"]["payload"] == DOWNLOAD_ID
        assert report.channel("structural").status == "recovered"
        assert report.channel("linguistic").status == "recovered"

    def test_fontless_pair_reports_unavailable(self, keys, graph):
        words = corpus_words()[: 4 * 40]
        doc = build_corpus(words, font_file=None)
        report = extract_document(doc, doc, keys, graph)
        assert report.channel("fontmark").status == "unavailable"
        assert "original document" in report.channel("fontmark").reason
        assert report.channel("linguistic").status == "absent"
