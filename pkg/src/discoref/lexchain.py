"""Cross-document lexical chains.

A chain threads related word occurrences across a document pair.  Four kinds
are built, in priority order: repetition (same lemma in both documents),
synonym (lemmas sharing a lexicon synonym group), semantic_proximity (lemmas
sharing a proximity group), and temporal (time expressions).  Each occurrence
belongs to at most one chain, and chains that do not span both documents are
dropped.

The lexicon file is JSON: {"synonyms": [[...], ...], "proximity": [[...], ...],
"temporal": [...]}; the stoplist is one lemma per line.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .corpus import Document
from .discourse import Edge, GraphFragment, GraphNode

CHAIN_KINDS = ("repetition", "synonym", "semantic_proximity", "temporal")

_YEAR_RE = re.compile(r"^\d{3,4}$")


class LexiconError(ValueError):
    pass


@dataclass(frozen=True)
class WordOccurrence:
    doc_id: str
    token_index: int
    surface: str
    lemma: str


@dataclass(frozen=True)
class LexicalChain:
    chain_id: int
    kind: str
    occurrences: tuple[WordOccurrence, ...]


class Lexicon:
    """Case-normalized lemma groups backing the synonym, proximity and
    temporal chain kinds."""

    def __init__(self, synonyms=(), proximity=(), temporal=()):
        self.synonym_sets = [frozenset(w.casefold() for w in group) for group in synonyms]
        self.proximity_sets = [frozenset(w.casefold() for w in group) for group in proximity]
        self.temporal = frozenset(w.casefold() for w in temporal)
        for name, sets in (("synonyms", self.synonym_sets), ("proximity", self.proximity_sets)):
            seen: set[str] = set()
            for group in sets:
                if group & seen:
                    raise LexiconError(f"{name} groups are not disjoint: {sorted(group & seen)}")
                seen |= group

    @classmethod
    def empty(cls) -> "Lexicon":
        return cls()

    def is_temporal(self, lemma: str) -> bool:
        lemma = lemma.casefold()
        return lemma in self.temporal or bool(_YEAR_RE.match(lemma))


def load_lexicon(path: str | Path) -> Lexicon:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return Lexicon(
        synonyms=data.get("synonyms", ()),
        proximity=data.get("proximity", ()),
        temporal=data.get("temporal", ()),
    )


def load_stoplist(path: str | Path) -> frozenset[str]:
    with open(path, encoding="utf-8") as fh:
        return frozenset(line.strip().casefold() for line in fh if line.strip())


def _occurrences(doc: Document) -> list[WordOccurrence]:
    return [WordOccurrence(doc.doc_id, t.index, t.surface, t.lemma.casefold()) for t in doc.tokens]


def build_chains(
    doc_a: Document,
    doc_b: Document,
    lexicon: Lexicon | None = None,
    stoplist: frozenset[str] = frozenset(),
) -> list[LexicalChain]:
    """Deterministic chain set over a document pair.

    Occurrences are claimed greedily in kind priority order
    (repetition > synonym > semantic_proximity > temporal), so the chains
    partition the occurrences they cover.
    """
    lexicon = lexicon or Lexicon.empty()
    occs_a = _occurrences(doc_a)
    occs_b = _occurrences(doc_b)
    claimed: set[tuple[str, int]] = set()
    chains: list[LexicalChain] = []

    def free(occ: WordOccurrence) -> bool:
        return (occ.doc_id, occ.token_index) not in claimed

    def emit(kind: str, members_a: list[WordOccurrence], members_b: list[WordOccurrence]) -> None:
        if not members_a or not members_b:
            return  # chains must span both documents
        occurrences = tuple(members_a + members_b)
        chains.append(LexicalChain(len(chains), kind, occurrences))
        claimed.update((o.doc_id, o.token_index) for o in occurrences)

    # repetition: every shared non-stoplist lemma
    lemmas_a = {o.lemma for o in occs_a} - stoplist
    lemmas_b = {o.lemma for o in occs_b} - stoplist
    for lemma in sorted(lemmas_a & lemmas_b):
        emit(
            "repetition",
            [o for o in occs_a if o.lemma == lemma and free(o)],
            [o for o in occs_b if o.lemma == lemma and free(o)],
        )

    # lexicon-driven kinds
    for kind, groups in (("synonym", lexicon.synonym_sets),
                         ("semantic_proximity", lexicon.proximity_sets)):
        for group in groups:
            emit(
                kind,
                [o for o in occs_a if o.lemma in group and free(o)],
                [o for o in occs_b if o.lemma in group and free(o)],
            )

    # temporal: per-expression chains over time-marking lemmas
    temporal_lemmas = sorted(
        {o.lemma for o in occs_a + occs_b if lexicon.is_temporal(o.lemma) and free(o)}
    )
    for lemma in temporal_lemmas:
        emit(
            "temporal",
            [o for o in occs_a if o.lemma == lemma and free(o)],
            [o for o in occs_b if o.lemma == lemma and free(o)],
        )

    return chains


def chain_word_id(doc_id: str, token_index: int) -> str:
    return f"{doc_id}/w{token_index}"


def chains_to_graph(chains: list[LexicalChain]) -> GraphFragment:
    """One node per occurrence; consecutive occurrences within a chain are
    linked in both directions (path topology), labeled with the chain kind."""
    nodes: dict[str, GraphNode] = {}
    edges: set[Edge] = set()
    for chain in chains:
        ids = []
        for occ in chain.occurrences:
            nid = chain_word_id(occ.doc_id, occ.token_index)
            nodes[nid] = GraphNode(
                nid,
                "chain_word",
                doc_id=occ.doc_id,
                token_index=occ.token_index,
                chain_id=chain.chain_id,
            )
            ids.append(nid)
        for u, v in zip(ids, ids[1:]):
            edges.add(Edge(u, v, chain.kind, "chain"))
            edges.add(Edge(v, u, chain.kind, "chain"))
    return GraphFragment(nodes, edges)
