import numpy as np
import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from discoref.discourse import (
    RELATION_LABELS,
    RELATION_LABELS_ORDERED,
    SELF_LABEL,
    STRUCT_LABEL,
    Edge,
    RstError,
    ablate_relation,
    build_tree,
    edu_of_mention,
    parse_rst,
    rst_graph_id,
    rst_to_graph,
    serialize_rst,
)


def to_networkx(fragment):
    g = nx.MultiDiGraph()
    g.add_nodes_from(fragment.nodes)
    for e in fragment.edges:
        g.add_edge(e.src, e.dst)
    return g


class TestParse:
    def test_smallest_two_edu_tree(self):
        tree = parse_rst("(Elaboration (N 0 4) (S 5 9))")
        assert len(tree.nodes) == 3
        assert [leaf.edu_span for leaf in tree.leaves()] == [(0, 4), (5, 9)]
        root = tree.nodes[tree.root_id]
        assert root.relation == "Elaboration"
        assert root.nuclearity == "nucleus"

    def test_unknown_relation(self):
        with pytest.raises(RstError, match="unknown relation 'Foo'"):
            parse_rst("(Foo (N 0 4) (S 5 9))")

    def test_nested_tree_partitions_range(self):
        text = "(Joint (N (Elaboration (N 0 2) (S 3 5))) (N (Cause (S 6 7) (N 8 11))))"
        tree = parse_rst(text)
        leaves = [leaf.edu_span for leaf in tree.leaves()]
        # partition property: contiguous, in-order, starting at zero
        assert leaves[0][0] == 0
        for (lo_a, hi_a), (lo_b, hi_b) in zip(leaves, leaves[1:]):
            assert lo_b == hi_a + 1
        assert leaves == [(0, 2), (3, 5), (6, 7), (8, 11)]

    def test_two_satellites_rejected(self):
        with pytest.raises(RstError, match="satellite"):
            parse_rst("(Contrast (S 0 4) (S 5 9))")

    def test_malformed_bracketing(self):
        for text in ["(Elaboration (N 0 4) (S 5 9)", "(Elaboration (N 0 4))",
                     "(Elaboration (N 0 4) (S 5 9)))", "", "(N 0)"]:
            with pytest.raises(RstError):
                parse_rst(text)

    def test_non_partitioning_rejected(self):
        with pytest.raises(RstError, match="partition"):
            parse_rst("(Elaboration (N 0 4) (S 6 9))")
        with pytest.raises(RstError, match="token 0"):
            parse_rst("(Elaboration (N 1 4) (S 5 9))")

    def test_single_leaf_tree(self):
        tree = parse_rst("(N 0 7)")
        assert len(tree.nodes) == 1
        assert tree.span() == (0, 7)

    def test_serialize_round_trip(self):
        text = "(Joint (N (Elaboration (N 0 2) (S 3 5))) (N 6 11))"
        assert serialize_rst(parse_rst(text)) == text

    @given(st.integers(min_value=1, max_value=40), st.integers(min_value=0, max_value=9999))
    @settings(max_examples=50, deadline=None)
    def test_round_trip_random_trees(self, length, seed):
        rng = np.random.default_rng(seed)
        if length == 1:
            spans = [(0, 0)]
        else:
            n_edus = int(rng.integers(2, min(8, length) + 1))
            cuts = sorted(rng.choice(np.arange(1, length), size=n_edus - 1,
                                     replace=False).tolist())
            bounds = [0] + cuts + [length]
            spans = [(bounds[i], bounds[i + 1] - 1) for i in range(n_edus)]
        tree = build_tree(spans, list(RELATION_LABELS_ORDERED), rng)
        assert parse_rst(serialize_rst(tree)) == tree


class TestRstToGraph:
    def test_satellite_points_to_nucleus(self):
        tree = parse_rst("(Elaboration (N 0 4) (S 5 9))")
        frag = rst_to_graph(tree, "d")
        nucleus, satellite = rst_graph_id("d", 1), rst_graph_id("d", 2)
        assert Edge(satellite, nucleus, "Elaboration", "rst") in frag.edges
        assert Edge(nucleus, satellite, "Elaboration", "rst") not in frag.edges

    def test_nucleus_nucleus_bidirectional(self):
        tree = parse_rst("(Joint (N 0 4) (N 5 9))")
        frag = rst_to_graph(tree, "d")
        a, b = rst_graph_id("d", 1), rst_graph_id("d", 2)
        assert Edge(a, b, "Joint", "rst") in frag.edges
        assert Edge(b, a, "Joint", "rst") in frag.edges

    def test_node_count_equals_tree(self):
        tree = parse_rst("(Joint (N (Cause (S 0 2) (N 3 5))) (N 6 9))")
        frag = rst_to_graph(tree, "d")
        assert len(frag.nodes) == len(tree.nodes)

    def test_struct_edges_bidirectional(self):
        tree = parse_rst("(Elaboration (N 0 4) (S 5 9))")
        frag = rst_to_graph(tree, "d")
        root, left = rst_graph_id("d", 0), rst_graph_id("d", 1)
        assert Edge(left, root, STRUCT_LABEL, "rst") in frag.edges
        assert Edge(root, left, STRUCT_LABEL, "rst") in frag.edges

    @given(st.integers(min_value=2, max_value=40), st.integers(min_value=0, max_value=9999))
    @settings(max_examples=40, deadline=None)
    def test_fragment_weakly_connected(self, length, seed):
        rng = np.random.default_rng(seed)
        n_edus = int(rng.integers(2, min(8, length) + 1))
        cuts = sorted(rng.choice(np.arange(1, length), size=n_edus - 1,
                                 replace=False).tolist())
        bounds = [0] + cuts + [length]
        spans = [(bounds[i], bounds[i + 1] - 1) for i in range(n_edus)]
        tree = build_tree(spans, list(RELATION_LABELS_ORDERED), rng)
        frag = rst_to_graph(tree, "d")
        assert nx.is_weakly_connected(to_networkx(frag))


class TestAblation:
    def fragment(self):
        return rst_to_graph(parse_rst("(Elaboration (N 0 4) (S 5 9))"), "d")

    def test_absent_relation_is_noop(self):
        frag = self.fragment()
        out = ablate_relation(frag, "Temporal")
        assert out.edges == frag.edges
        assert out.nodes == frag.nodes

    def test_removes_edges_and_adds_self_loops(self):
        frag = self.fragment()
        out = ablate_relation(frag, "Elaboration")
        assert not any(e.relation == "Elaboration" for e in out.edges)
        nucleus, satellite = rst_graph_id("d", 1), rst_graph_id("d", 2)
        assert Edge(nucleus, nucleus, SELF_LABEL, "rst") in out.edges
        assert Edge(satellite, satellite, SELF_LABEL, "rst") in out.edges

    def test_edge_count_accounting(self):
        frag = self.fragment()
        out = ablate_relation(frag, "Elaboration")
        removed = {e for e in frag.edges if e.relation == "Elaboration"}
        self_loops = {e for e in out.edges if e.relation == SELF_LABEL}
        assert len(out.edges) == len(frag.edges) - len(removed) + len(self_loops)
        assert set(out.nodes) == set(frag.nodes)

    def test_idempotent(self):
        frag = self.fragment()
        once = ablate_relation(frag, "Elaboration")
        twice = ablate_relation(once, "Elaboration")
        assert once.edges == twice.edges

    def test_only_rst_origin_edges_affected(self):
        frag = self.fragment()
        frag.edges.add(Edge("x", "y", "Elaboration", "chain"))
        frag.nodes["x"] = frag.nodes[rst_graph_id("d", 0)]
        frag.nodes["y"] = frag.nodes[rst_graph_id("d", 1)]
        out = ablate_relation(frag, "Elaboration")
        assert Edge("x", "y", "Elaboration", "chain") in out.edges

    def test_unknown_relation_rejected(self):
        with pytest.raises(RstError):
            ablate_relation(self.fragment(), "Struct")


class TestEduOfMention:
    tree = parse_rst("(Elaboration (N 0 4) (S 5 9))")

    def test_containment(self):
        assert edu_of_mention(self.tree, (2, 3)) == 1

    def test_straddle_uses_start_token(self):
        assert edu_of_mention(self.tree, (4, 6)) == 1

    def test_exact_edu(self):
        assert edu_of_mention(self.tree, (5, 9)) == 2

    def test_out_of_range(self):
        with pytest.raises(RstError):
            edu_of_mention(self.tree, (10, 12))


def test_relation_label_set_is_closed():
    assert len(RELATION_LABELS) == 18
    for label in ("Background", "Elaboration", "Attribution", "Same-Unit", "Joint",
                  "Explanation", "Enablement", "Cause", "Topic-Comment", "Contrast",
                  "Condition", "Comparison", "Evaluation", "Manner-Means", "Summary",
                  "Temporal", "Topic-Change", "Textual-Organization"):
        assert label in RELATION_LABELS
