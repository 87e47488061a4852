"""Shared test fixtures.

``toy_source_dict`` is a small hand-built taxonomy exercised by the unit
tests; expected similarity values for it are frozen in the test modules
after being derived by the independent oracles in ``oracles.py``.
The larger corpus fixtures under ``tests/fixtures`` are generated once by
``scripts/make_fixture.py`` and checked in.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).parent
FIXTURES = TESTS_DIR / "fixtures"

sys.path.insert(0, str(TESTS_DIR))


def toy_source_dict() -> dict:
    """A two-pos taxonomy small enough to verify by hand.

    Noun side: an "entity" root with a financial chain and a landform
    chain meeting only at the root, making "bank" a homograph.  Verb side:
    two senses that always contain both "travel" and "journey", so neither
    verb is a homograph.
    """
    return {
        "version": 1,
        "pos_taxonomies": {"n": {"max_depth": 5}, "v": {"max_depth": 3}},
        "synsets": [
            {"id": "entity.n.01", "pos": "n", "members": ["entity"], "ic": 0.0,
             "depth": 1, "hypernyms": []},
            {"id": "object.n.01", "pos": "n", "members": ["object", "thing"], "ic": 0.9,
             "depth": 2, "hypernyms": ["entity.n.01"]},
            {"id": "institution.n.01", "pos": "n",
             "members": ["institution", "establishment"], "ic": 1.7,
             "depth": 3, "hypernyms": ["object.n.01"]},
            {"id": "depository.n.01", "pos": "n",
             "members": ["depository", "repository", "deposit"], "ic": 2.5,
             "depth": 4, "hypernyms": ["institution.n.01"]},
            {"id": "bank.n.01", "pos": "n",
             "members": ["bank", "depository", "deposit"], "ic": 3.1,
             "depth": 5, "hypernyms": ["depository.n.01"]},
            {"id": "whole.n.01", "pos": "n", "members": ["whole", "unit"], "ic": 0.8,
             "depth": 2, "hypernyms": ["entity.n.01"]},
            {"id": "slope.n.01", "pos": "n", "members": ["slope", "incline", "side"],
             "ic": 2.0, "depth": 3, "hypernyms": ["whole.n.01"]},
            {"id": "bank.n.02", "pos": "n", "members": ["bank", "riverside"], "ic": 2.9,
             "depth": 4, "hypernyms": ["slope.n.01"]},
            {"id": "move.v.01", "pos": "v", "members": ["move"], "ic": 0.0,
             "depth": 1, "hypernyms": []},
            {"id": "travel.v.02", "pos": "v", "members": ["travel", "journey"], "ic": 1.2,
             "depth": 2, "hypernyms": ["move.v.01"]},
            {"id": "travel.v.04", "pos": "v", "members": ["travel", "journey"], "ic": 1.4,
             "depth": 2, "hypernyms": ["move.v.01"]},
        ],
    }


@pytest.fixture
def toy_source():
    from tracemark.lexgraph import LexicalSource

    return LexicalSource.from_dict(toy_source_dict())


@pytest.fixture(scope="session")
def corpus_lexicon_path() -> Path:
    path = FIXTURES / "lexicon.json"
    if not path.exists():
        pytest.skip("corpus lexicon fixture not generated yet")
    return path


@pytest.fixture(scope="session")
def corpus_graph(corpus_lexicon_path):
    from tracemark.lexgraph import LexicalSource, build_graph

    return build_graph(LexicalSource.load(corpus_lexicon_path))


@pytest.fixture(scope="session")
def fixture_pdf_path() -> Path:
    path = FIXTURES / "fixture.pdf"
    if not path.exists():
        pytest.skip("fixture PDF not generated yet")
    return path


@pytest.fixture(scope="session")
def fixture_meta() -> dict:
    path = FIXTURES / "fixture_meta.json"
    if not path.exists():
        pytest.skip("fixture metadata not generated yet")
    return json.loads(path.read_text(encoding="utf-8"))
