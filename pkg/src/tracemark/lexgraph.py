"""Keyed homograph graph built from a lexical source file.

The linguistic channel substitutes document words with same-meaning
homographs.  This module owns everything that decision needs:

* :class:`LexicalSource`: a frozen taxonomy of synsets (id, part of speech,
  member words, information content, depth, hypernym links) loaded from the
  toolkit's JSON interchange format.
* Sense similarity functions over that taxonomy (``sim_wup``, ``sim_lch``,
  ``sim_res``, ``sim_jcn``, ``sim_lin``).  ``sim_lin`` is the default used
  for edge weights.
* :class:`LexGraph`: words collapsed to one vertex per (spelling, pos),
  linked when they share a synset, each edge weighted by the mean similarity
  over the two words' sense sets.
* Keyed edge labels: the bit a substitution encodes is the low bit of an
  HMAC over the ordered pair of canonical vertex names, so the graph file
  itself is key independent and can be shipped or cached freely.

Words are compared case-folded and NFC-normalized throughout.  A word is a
homograph when at least two of its synsets are word-disjoint, i.e. share no
member other than the word itself; a word whose senses all travel with the
same companions (e.g. a verb listed beside "travel" in every sense) never
qualifies, because swapping it for a companion could not be told apart from
an ordinary synonym substitution at extraction time.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import math
import unicodedata
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from .errors import DisjointTaxonomies, LexiconError, NotNeighbours

__all__ = [
    "canon",
    "Synset",
    "LexicalSource",
    "sim_wup",
    "sim_lch",
    "sim_res",
    "sim_jcn",
    "sim_lin",
    "SIMILARITIES",
    "edge_weight",
    "is_homograph_word",
    "LexGraph",
    "build_graph",
    "build_tagged_graph",
    "vertex_canonical",
    "edge_label",
]

SOURCE_VERSION = 1
GRAPH_VERSION = 1

# Weights are serialized with a fixed number of decimal digits so the graph
# file is byte-stable across runs and platforms.
WEIGHT_DIGITS = 9


def canon(word: str) -> str:
    """Canonical comparison form of a word: NFC-normalized and case-folded."""
    return unicodedata.normalize("NFC", word).casefold()


@dataclass(frozen=True)
class Synset:
    """One sense: a set of interchangeable words plus taxonomy bookkeeping.

    ``depth`` counts nodes from the root (a root synset has depth 1) and
    ``ic`` is the information content in nats, non-decreasing from root to
    leaf.  ``hypernyms`` holds parent synset ids; multiple parents are
    allowed.
    """

    id: str
    pos: str
    members: tuple[str, ...]
    ic: float
    depth: int
    hypernyms: tuple[str, ...]


class LexicalSource:
    """An immutable taxonomy loaded from the lexical source JSON format."""

    def __init__(self, synsets: Iterable[Synset], pos_max_depth: dict[str, int]):
        self.synsets: dict[str, Synset] = {}
        for s in synsets:
            if s.id in self.synsets:
                raise LexiconError(f"duplicate synset id {s.id!r}")
            self.synsets[s.id] = s
        self.pos_max_depth = dict(pos_max_depth)
        self._word_senses: dict[tuple[str, str], list[str]] = {}
        self._ancestor_cache: dict[str, dict[str, int]] = {}
        self._validate()
        for s in self.synsets.values():
            for w in s.members:
                self._word_senses.setdefault((canon(w), s.pos), []).append(s.id)

    # -- loading ----------------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict) -> "LexicalSource":
        if not isinstance(doc, dict):
            raise LexiconError("lexical source must be a JSON object")
        if doc.get("version") != SOURCE_VERSION:
            raise LexiconError(f"unsupported lexical source version {doc.get('version')!r}")
        taxo = doc.get("pos_taxonomies")
        if not isinstance(taxo, dict) or not taxo:
            raise LexiconError("pos_taxonomies must be a non-empty object")
        pos_max_depth = {}
        for pos, entry in taxo.items():
            try:
                md = int(entry["max_depth"])
            except (TypeError, KeyError, ValueError):
                raise LexiconError(f"pos_taxonomies[{pos!r}] needs an integer max_depth") from None
            if md < 1:
                raise LexiconError(f"pos_taxonomies[{pos!r}].max_depth must be >= 1")
            pos_max_depth[pos] = md
        raw = doc.get("synsets")
        if not isinstance(raw, list) or not raw:
            raise LexiconError("synsets must be a non-empty array")
        synsets = []
        for i, entry in enumerate(raw):
            try:
                sid = entry["id"]
                s = Synset(
                    id=sid,
                    pos=entry["pos"],
                    members=tuple(entry["members"]),
                    ic=float(entry["ic"]),
                    depth=int(entry["depth"]),
                    hypernyms=tuple(entry.get("hypernyms", ())),
                )
            except (TypeError, KeyError, ValueError) as exc:
                ident = entry.get("id", f"#{i}") if isinstance(entry, dict) else f"#{i}"
                raise LexiconError(f"synset {ident!r}: {exc}") from None
            if not s.members:
                raise LexiconError(f"synset {s.id!r}: empty member list")
            if s.pos not in pos_max_depth:
                raise LexiconError(f"synset {s.id!r}: pos {s.pos!r} has no taxonomy entry")
            synsets.append(s)
        return cls(synsets, pos_max_depth)

    @classmethod
    def load(cls, path: str | Path) -> "LexicalSource":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def _validate(self) -> None:
        for s in self.synsets.values():
            if s.depth < 1:
                raise LexiconError(f"synset {s.id!r}: depth must be positive")
            if s.ic < 0:
                raise LexiconError(f"synset {s.id!r}: negative information content")
            if not s.hypernyms and s.depth != 1:
                raise LexiconError(f"synset {s.id!r}: root synsets must have depth 1")
            for hid in s.hypernyms:
                parent = self.synsets.get(hid)
                if parent is None:
                    raise LexiconError(f"synset {s.id!r}: unresolved hypernym {hid!r}")
                if parent.pos != s.pos:
                    raise LexiconError(f"synset {s.id!r}: hypernym {hid!r} crosses pos")
                if s.ic < parent.ic - 1e-9:
                    raise LexiconError(
                        f"synset {s.id!r}: ic {s.ic} below hypernym {hid!r} ic {parent.ic}"
                    )

    # -- queries ----------------------------------------------------------

    @property
    def sense_count(self) -> int:
        return len(self.synsets)

    def senses(self, word: str, pos: str) -> list[Synset]:
        """All synsets of ``word`` under ``pos`` (canonical comparison)."""
        return [self.synsets[sid] for sid in self._word_senses.get((canon(word), pos), ())]

    def pos_of_word(self, word: str) -> list[str]:
        w = canon(word)
        return sorted({pos for (cw, pos) in self._word_senses if cw == w})

    def _resolve(self, sense: "Synset | str") -> Synset:
        if isinstance(sense, Synset):
            return sense
        try:
            return self.synsets[sense]
        except KeyError:
            raise LexiconError(f"unknown synset id {sense!r}") from None

    def ancestors(self, sense: "Synset | str") -> dict[str, int]:
        """Map of ancestor synset id -> minimum hypernym steps (self at 0)."""
        s = self._resolve(sense)
        cached = self._ancestor_cache.get(s.id)
        if cached is None:
            cached = {s.id: 0}
            queue = deque([s.id])
            while queue:
                cur = self.synsets[queue.popleft()]
                nxt = cached[cur.id] + 1
                for hid in cur.hypernyms:
                    if hid not in cached or nxt < cached[hid]:
                        cached[hid] = nxt
                        queue.append(hid)
            self._ancestor_cache[s.id] = cached
        return cached

    def lcs(self, x: "Synset | str", y: "Synset | str") -> Synset:
        """Most specific common ancestor of two senses.

        Specificity is depth; ties break on higher information content and
        then on synset id so the result is deterministic.
        """
        sx, sy = self._resolve(x), self._resolve(y)
        common = self.ancestors(sx).keys() & self.ancestors(sy).keys()
        if not common:
            raise DisjointTaxonomies(f"no common ancestor for {sx.id!r} and {sy.id!r}")
        return max(
            (self.synsets[sid] for sid in common),
            key=lambda s: (s.depth, s.ic, s.id),
        )

    def path_len(self, x: "Synset | str", y: "Synset | str") -> int:
        """Shortest node-counted path between two senses through any ancestor."""
        sx, sy = self._resolve(x), self._resolve(y)
        ax, ay = self.ancestors(sx), self.ancestors(sy)
        common = ax.keys() & ay.keys()
        if not common:
            raise DisjointTaxonomies(f"no path between {sx.id!r} and {sy.id!r}")
        return min(ax[sid] + ay[sid] for sid in common) + 1


# ---------------------------------------------------------------------------
# Sense similarity
# ---------------------------------------------------------------------------


def sim_wup(src: LexicalSource, x: "Synset | str", y: "Synset | str") -> float:
    """Depth-ratio similarity: 2*depth(lcs) / (depth(x) + depth(y))."""
    sx, sy = src._resolve(x), src._resolve(y)
    anc = src.lcs(sx, sy)
    return 2.0 * anc.depth / (sx.depth + sy.depth)


def sim_lch(src: LexicalSource, x: "Synset | str", y: "Synset | str") -> float:
    """Path-based similarity: -log(path_len / (2 * taxonomy max depth)).

    Identical senses have path length 1, giving the maximum value; a path
    spanning twice the taxonomy depth gives 0.
    """
    sx, sy = src._resolve(x), src._resolve(y)
    plen = src.path_len(sx, sy)
    max_depth = src.pos_max_depth[sx.pos]
    return -math.log(plen / (2.0 * max_depth))


def sim_res(src: LexicalSource, x: "Synset | str", y: "Synset | str") -> float:
    """Information content of the most specific common ancestor."""
    return src.lcs(x, y).ic


def sim_jcn(src: LexicalSource, x: "Synset | str", y: "Synset | str") -> float:
    """Inverse ic-distance similarity, with the same-sense singularity mapped to 1.

    The distance ic(x) + ic(y) - 2*ic(lcs) is zero when the senses are
    informationally identical; 1 is returned for that whole singular case,
    not just for literally equal synsets.
    """
    sx, sy = src._resolve(x), src._resolve(y)
    if sx.id == sy.id:
        return 1.0
    denom = sx.ic + sy.ic - 2.0 * src.lcs(sx, sy).ic
    if denom <= 0.0:
        return 1.0
    return 1.0 / denom


def sim_lin(src: LexicalSource, x: "Synset | str", y: "Synset | str") -> float:
    """Ratio similarity 2*ic(lcs) / (ic(x) + ic(y)), defined as 0 at ic zero.

    This is the default edge-weight similarity: it is bounded in [0, 1]
    whenever ic grows from root to leaf, which the source loader enforces.
    """
    sx, sy = src._resolve(x), src._resolve(y)
    denom = sx.ic + sy.ic
    if denom == 0.0:
        return 0.0
    return 2.0 * src.lcs(sx, sy).ic / denom


SIMILARITIES: dict[str, Callable[[LexicalSource, Synset, Synset], float]] = {
    "wup": sim_wup,
    "lch": sim_lch,
    "res": sim_res,
    "jcn": sim_jcn,
    "lin": sim_lin,
}


def _pair_sim(src: LexicalSource, sim: Callable, sx: Synset, sy: Synset) -> float:
    # Senses from disconnected parts of one pos taxonomy share no
    # information; they contribute 0 to averaged weights instead of
    # poisoning the whole edge.
    try:
        return sim(src, sx, sy)
    except DisjointTaxonomies:
        return 0.0


def edge_weight(
    src: LexicalSource,
    x: str,
    y: str,
    pos: str,
    sim: Callable[[LexicalSource, Synset, Synset], float] = sim_lin,
) -> float:
    """Mean similarity over every sense pair of two synset-sharing words.

    weight(x, y) = sum over S(x) x S(y) of sim / (|S(x)| * |S(y)|), where
    S(w) is the set of synsets containing w under ``pos``.  Raises
    :class:`NotNeighbours` when the words share no synset, because the graph
    has no such edge to weigh.
    """
    sx = src.senses(x, pos)
    sy = src.senses(y, pos)
    if not sx or not sy:
        raise NotNeighbours(f"{x!r} or {y!r} has no {pos!r} senses")
    if not {s.id for s in sx} & {s.id for s in sy}:
        raise NotNeighbours(f"{x!r} and {y!r} share no synset")
    total = 0.0
    for a in sx:
        for b in sy:
            total += _pair_sim(src, sim, a, b)
    return total / (len(sx) * len(sy))


def is_homograph_word(src: LexicalSource, word: str, pos: str) -> bool:
    """True when two senses of the word are word-disjoint.

    Membership is compared with the word itself removed, since every sense
    of a word trivially contains it.
    """
    senses = src.senses(word, pos)
    w = canon(word)
    others = [frozenset(canon(m) for m in s.members) - {w} for s in senses]
    for i in range(len(others)):
        for j in range(i + 1, len(others)):
            if not (others[i] & others[j]):
                return True
    return False


# ---------------------------------------------------------------------------
# The collapsed graph
# ---------------------------------------------------------------------------

VKey = tuple[str, str]  # (canonical word, pos)


def vertex_canonical(v: VKey) -> str:
    """Stable textual form of a vertex, used in files and HMAC inputs."""
    return f"{v[0]}#{v[1]}"


def edge_label(x: VKey, y: VKey, key: bytes) -> int:
    """Keyed bit for the ordered vertex pair (x, y).

    The low bit of HMAC-SHA256(key, canonical(x) || 0x00 || canonical(y)).
    Order matters: extraction always evaluates (original, replacement).
    """
    msg = vertex_canonical(x).encode("utf-8") + b"\x00" + vertex_canonical(y).encode("utf-8")
    return hmac.new(key, msg, hashlib.sha256).digest()[-1] & 1


@dataclass
class LexGraph:
    """Words collapsed per (spelling, pos), with weighted synonym edges.

    The graph content is key independent; bits come from
    :meth:`label` at query time.  ``tagged`` graphs additionally carry one
    vertex per (word, sense) pair, named ``word@synset_id``, connected only
    to plain word vertices.
    """

    vertices: dict[VKey, bool] = field(default_factory=dict)  # vertex -> homograph flag
    adjacency: dict[VKey, dict[VKey, float]] = field(default_factory=dict)
    tagged: bool = False
    _by_word: dict[str, tuple[VKey, ...]] = field(default_factory=dict, repr=False)

    def _index(self) -> None:
        by_word: dict[str, list[VKey]] = {}
        for v in self.vertices:
            if "@" not in v[0]:
                by_word.setdefault(v[0], []).append(v)
        self._by_word = {w: tuple(sorted(ks)) for w, ks in by_word.items()}

    # -- lookups ----------------------------------------------------------

    def resolve(self, word: str) -> VKey | None:
        """Vertex for a document word, or None.

        A spelling present under several parts of speech is ambiguous
        without a tagger, so it resolves to nothing and the word is left
        alone.
        """
        keys = self._by_word.get(canon(word), ())
        if len(keys) == 1:
            return keys[0]
        return None

    def __contains__(self, v: VKey) -> bool:
        return v in self.vertices

    def is_homograph(self, v: VKey) -> bool:
        return self.vertices.get(v, False)

    def neighbours_all(self, v: VKey) -> dict[VKey, float]:
        return self.adjacency.get(v, {})

    def adjacent(self, a: VKey, b: VKey) -> bool:
        return b in self.adjacency.get(a, ())

    def common_neighbours(self, a: VKey, b: VKey) -> list[VKey]:
        na = self.adjacency.get(a, {})
        nb = self.adjacency.get(b, {})
        return sorted(k for k in na if k in nb)

    def label(self, x: VKey, y: VKey, key: bytes) -> int:
        return edge_label(x, y, key)

    def homograph_neighbours(self, v: VKey) -> list[tuple[VKey, float]]:
        return [(u, w) for u, w in self.adjacency.get(v, {}).items() if self.vertices.get(u)]

    def neighbours(self, x: VKey, bit: int, key: bytes) -> list[tuple[VKey, float]]:
        """Homograph neighbours of ``x`` whose keyed label equals ``bit``.

        Sorted by descending weight, ties broken lexicographically, so the
        embedder's argmax is simply the first entry.
        """
        hits = [
            (u, w)
            for u, w in self.homograph_neighbours(x)
            if edge_label(x, u, key) == bit
        ]
        hits.sort(key=lambda e: (-e[1], e[0]))
        return hits

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        verts = sorted(self.vertices)
        edges = []
        for a in sorted(self.adjacency):
            for b in sorted(self.adjacency[a]):
                if a < b:  # adjacency is symmetric; emit each edge once
                    edges.append(
                        {
                            "a": vertex_canonical(a),
                            "b": vertex_canonical(b),
                            "weight": f"{self.adjacency[a][b]:.{WEIGHT_DIGITS}f}",
                        }
                    )
        return {
            "version": GRAPH_VERSION,
            "tagged": self.tagged,
            "vertices": [
                {"word": v[0], "pos": v[1], "homograph": self.vertices[v]} for v in verts
            ],
            "edges": edges,
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, ensure_ascii=False, indent=1)
            fh.write("\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "LexGraph":
        if doc.get("version") != GRAPH_VERSION:
            raise LexiconError(f"unsupported graph version {doc.get('version')!r}")
        g = cls(tagged=bool(doc.get("tagged", False)))
        try:
            for entry in doc["vertices"]:
                g.vertices[(entry["word"], entry["pos"])] = bool(entry["homograph"])
            for entry in doc["edges"]:
                a_word, a_pos = entry["a"].rsplit("#", 1)
                b_word, b_pos = entry["b"].rsplit("#", 1)
                a, b = (a_word, a_pos), (b_word, b_pos)
                w = float(entry["weight"])
                g.adjacency.setdefault(a, {})[b] = w
                g.adjacency.setdefault(b, {})[a] = w
        except (KeyError, TypeError, ValueError) as exc:
            raise LexiconError(f"malformed graph file: {exc}") from None
        g._index()
        return g

    @classmethod
    def load(cls, path: str | Path) -> "LexGraph":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def build_graph(
    src: LexicalSource,
    sim: Callable[[LexicalSource, Synset, Synset], float] = sim_lin,
) -> LexGraph:
    """Collapse a lexical source into the synonym graph.

    One vertex per (canonical spelling, pos); an edge wherever two distinct
    spellings share a synset, weighted by :func:`edge_weight`.
    """
    g = LexGraph()
    words_by_pos: dict[str, set[str]] = {}
    for s in src.synsets.values():
        for m in s.members:
            words_by_pos.setdefault(s.pos, set()).add(canon(m))
    for pos, words in words_by_pos.items():
        for w in words:
            g.vertices[(w, pos)] = is_homograph_word(src, w, pos)
    for s in src.synsets.values():
        mm = sorted({canon(m) for m in s.members})
        for i in range(len(mm)):
            for j in range(i + 1, len(mm)):
                a, b = (mm[i], s.pos), (mm[j], s.pos)
                if b in g.adjacency.get(a, {}):
                    continue
                w = edge_weight(src, mm[i], mm[j], s.pos, sim)
                g.adjacency.setdefault(a, {})[b] = w
                g.adjacency.setdefault(b, {})[a] = w
    g._index()
    return g


def build_tagged_graph(
    src: LexicalSource,
    sim: Callable[[LexicalSource, Synset, Synset], float] = sim_lin,
) -> LexGraph:
    """Graph variant for documents whose words carry sense tags.

    Every (word, sense) pair becomes its own vertex, named
    ``word@synset_id``, linked to the plain word vertices of the other
    members of that synset.  The weight towards word y averages only over
    y's senses, the tagged side being fixed:

        weight(<x, s>, y) = sum over s_y in S(y) of sim(s, s_y) / |S(y)|

    Plain word-to-word edges are not present in this variant.
    """
    g = LexGraph(tagged=True)
    words_by_pos: dict[str, set[str]] = {}
    for s in src.synsets.values():
        for m in s.members:
            words_by_pos.setdefault(s.pos, set()).add(canon(m))
    for pos, words in words_by_pos.items():
        for w in words:
            g.vertices[(w, pos)] = is_homograph_word(src, w, pos)
    for s in src.synsets.values():
        mm = sorted({canon(m) for m in s.members})
        for x in mm:
            tagged_key = (f"{x}@{s.id}", s.pos)
            g.vertices.setdefault(tagged_key, False)
            for y in mm:
                if y == x:
                    continue
                wkey = (y, s.pos)
                ysenses = src.senses(y, s.pos)
                total = sum(_pair_sim(src, sim, s, sy) for sy in ysenses)
                w = total / len(ysenses)
                g.adjacency.setdefault(tagged_key, {})[wkey] = w
                g.adjacency.setdefault(wkey, {})[tagged_key] = w
    g._index()
    return g
