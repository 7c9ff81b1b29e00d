import networkx as nx
import pytest

from discoref.corpus import Document, Token
from discoref.lexchain import (
    Lexicon,
    LexiconError,
    build_chains,
    chains_to_graph,
    load_lexicon,
    load_stoplist,
)


def doc(doc_id, words):
    """words: list of surfaces or (surface, lemma) pairs."""
    tokens = []
    for i, w in enumerate(words):
        surface, lemma = w if isinstance(w, tuple) else (w, w)
        tokens.append(Token(i, surface, lemma))
    return Document(doc_id, tuple(tokens))


class TestBuildChains:
    def test_repetition_chain_counts_all_occurrences(self):
        a = doc("a", [("Hong", "hong kong"), ("Kong", "hong kong"), "election"])
        b = doc("b", [("HongKong", "hong kong"), "vote"])
        chains = build_chains(a, b)
        rep = [c for c in chains if c.kind == "repetition" and
               c.occurrences[0].lemma == "hong kong"]
        assert len(rep) == 1
        assert len(rep[0].occurrences) == 3  # 2 in doc a, 1 in doc b
        assert [o.doc_id for o in rep[0].occurrences] == ["a", "a", "b"]

    def test_synonym_chain(self):
        lex = Lexicon(synonyms=[["first", "inaugural"]])
        a = doc("a", ["the", "first", "election"])
        b = doc("b", ["an", "inaugural", "vote"])
        chains = build_chains(a, b, lex)
        syn = [c for c in chains if c.kind == "synonym"]
        assert len(syn) == 1
        assert len(syn[0].occurrences) == 2

    def test_everything_filtered(self):
        a = doc("a", ["x", "y"])
        b = doc("b", ["x", "y"])
        chains = build_chains(a, b, Lexicon.empty(), stoplist=frozenset({"x", "y"}))
        assert chains == []

    def test_cross_document_requirement(self):
        a = doc("a", ["unique", "words"])
        b = doc("b", ["other", "stuff"])
        assert build_chains(a, b) == []

    def test_priority_repetition_over_synonym(self):
        lex = Lexicon(synonyms=[["vote", "ballot"]])
        a = doc("a", ["vote"])
        b = doc("b", ["vote", "ballot"])
        chains = build_chains(a, b, lex)
        # "vote" occurrences are claimed by repetition; the leftover "ballot"
        # occurrence has no cross-document partner, so no synonym chain
        assert [c.kind for c in chains] == ["repetition"]

    def test_temporal_chain_for_stoplisted_year(self):
        a = doc("a", ["riots", "1997"])
        b = doc("b", ["handover", "1997"])
        chains = build_chains(a, b, stoplist=frozenset({"1997"}))
        assert [c.kind for c in chains] == ["temporal"]

    def test_temporal_lexicon_entry(self):
        lex = Lexicon(temporal=["later"])
        a = doc("a", ["later", "x"])
        b = doc("b", ["later", "y"])
        chains = build_chains(a, b, lex, stoplist=frozenset({"later"}))
        assert [c.kind for c in chains] == ["temporal"]

    def test_occurrences_claimed_at_most_once(self):
        lex = Lexicon(synonyms=[["vote", "ballot"]], proximity=[["poll", "vote"]])
        with pytest.raises(LexiconError):
            # proximity and synonym groups may not overlap within... categories
            # are independent, so this is fine; overlap within one category fails
            Lexicon(synonyms=[["vote", "ballot"], ["ballot", "poll"]])
        a = doc("a", ["vote", "ballot", "poll"])
        b = doc("b", ["vote", "ballot", "poll"])
        chains = build_chains(a, b, lex)
        seen = set()
        for chain in chains:
            for occ in chain.occurrences:
                key = (occ.doc_id, occ.token_index)
                assert key not in seen
                seen.add(key)

    def test_symmetric_partition(self):
        lex = Lexicon(synonyms=[["first", "inaugural"]])
        a = doc("a", ["first", "vote", "1999"])
        b = doc("b", ["inaugural", "vote", "1999"])
        ab = build_chains(a, b, lex)
        ba = build_chains(b, a, lex)
        part_ab = {frozenset((o.doc_id, o.token_index) for o in c.occurrences) for c in ab}
        part_ba = {frozenset((o.doc_id, o.token_index) for o in c.occurrences) for c in ba}
        assert part_ab == part_ba

    def test_case_normalized(self):
        a = doc("a", [("Election", "Election")])
        b = doc("b", [("election", "election")])
        chains = build_chains(a, b)
        assert len(chains) == 1


class TestChainsToGraph:
    def test_path_topology_three_occurrences(self):
        a = doc("a", ["vote", "x", "vote"])
        b = doc("b", ["vote"])
        chains = build_chains(a, b)
        frag = chains_to_graph(chains)
        assert len(frag.nodes) == 3
        assert len(frag.edges) == 4  # 2 undirected links -> 4 directed edges

    def test_two_occurrences(self):
        chains = build_chains(doc("a", ["vote"]), doc("b", ["vote"]))
        frag = chains_to_graph(chains)
        assert len(frag.nodes) == 2
        assert len(frag.edges) == 2

    def test_disjoint_chains_disjoint_components(self):
        a = doc("a", ["vote", "riot"])
        b = doc("b", ["vote", "riot"])
        frag = chains_to_graph(build_chains(a, b))
        g = nx.Graph()
        g.add_nodes_from(frag.nodes)
        g.add_edges_from((e.src, e.dst) for e in frag.edges)
        assert nx.number_connected_components(g) == 2

    def test_every_edge_reversed(self):
        a = doc("a", ["vote", "x", "vote", "riot"])
        b = doc("b", ["vote", "riot"])
        frag = chains_to_graph(build_chains(a, b))
        for e in frag.edges:
            assert any(r.src == e.dst and r.dst == e.src and r.relation == e.relation
                       for r in frag.edges)

    def test_edge_labels_are_chain_kind(self):
        lex = Lexicon(synonyms=[["first", "inaugural"]])
        a = doc("a", ["first"])
        b = doc("b", ["inaugural"])
        frag = chains_to_graph(build_chains(a, b, lex))
        assert {e.relation for e in frag.edges} == {"synonym"}
        assert {e.origin for e in frag.edges} == {"chain"}


class TestLexiconIO:
    def test_load(self, tmp_path):
        path = tmp_path / "lex.json"
        path.write_text(
            '{"synonyms": [["first", "inaugural"]], "proximity": [["vote", "poll"]], '
            '"temporal": ["later"]}',
            encoding="utf-8",
        )
        lex = load_lexicon(path)
        assert lex.synonym_sets == [frozenset({"first", "inaugural"})]
        assert lex.is_temporal("later")
        assert lex.is_temporal("1997")
        assert not lex.is_temporal("vote")

    def test_stoplist(self, tmp_path):
        path = tmp_path / "stop.txt"
        path.write_text("The\nand\n\nof\n", encoding="utf-8")
        assert load_stoplist(path) == frozenset({"the", "and", "of"})
