"""Merge discourse fragments and chain fragments into one graph per
document pair, anchor mentions to their discourse units, and initialize
node features from token embeddings."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Document, EmbeddingTable, EventMention
from .discourse import (
    Edge,
    GraphFragment,
    GraphNode,
    RstTree,
    edu_of_mention,
    rst_graph_id,
    rst_to_graph,
    validate_tree_for_doc,
)
from .lexchain import Lexicon, build_chains, chains_to_graph

FUSION_LABEL = "Fusion"


class FusionError(RuntimeError):
    """Internal inconsistency while assembling a pair graph."""


@dataclass
class CorefGraph:
    nodes: dict[str, GraphNode]
    edges: set[Edge]
    doc_ids: tuple[str, ...]
    anchors: dict[str, str] = field(default_factory=dict)  # mention_id -> edu node id


@dataclass
class FeatureMatrix:
    """Per-node vectors; row order is fixed by sorted node id."""

    node_ids: tuple[str, ...]
    values: np.ndarray

    def row(self, node_id: str) -> int:
        return self.node_ids.index(node_id)


def edu_index(tree: RstTree, doc_id: str) -> dict[tuple[str, int], str]:
    """Map every (doc_id, token_index) covered by the tree to its leaf node id."""
    out: dict[tuple[str, int], str] = {}
    for leaf in tree.leaves():
        gid = rst_graph_id(doc_id, leaf.node_id)
        lo, hi = leaf.edu_span
        for idx in range(lo, hi + 1):
            out[(doc_id, idx)] = gid
    return out


def merge(
    rst_a: GraphFragment,
    rst_b: GraphFragment,
    chain_fragment: GraphFragment,
    occurrence_edus: dict[tuple[str, int], str],
) -> CorefGraph:
    """Union of the three fragments plus fusion edges: every chain word links
    to the discourse unit containing it, and units sharing a chain link to
    each other.  All fusion edges are bidirectional."""
    doc_ids = tuple(
        sorted({n.doc_id for n in list(rst_a.nodes.values()) + list(rst_b.nodes.values())})
    )
    overlap = (set(rst_a.nodes) & set(rst_b.nodes)) | (
        (set(rst_a.nodes) | set(rst_b.nodes)) & set(chain_fragment.nodes)
    )
    if overlap:
        raise FusionError(f"fragments share node ids: {sorted(overlap)[:5]}")
    nodes = {**rst_a.nodes, **rst_b.nodes, **chain_fragment.nodes}
    edges = set(rst_a.edges) | set(rst_b.edges) | set(chain_fragment.edges)

    chain_edus: dict[int, set[str]] = {}
    for node in chain_fragment.nodes.values():
        key = (node.doc_id, node.token_index)
        if key not in occurrence_edus:
            raise FusionError(f"chain occurrence {key} lies in no discourse unit")
        edu = occurrence_edus[key]
        edges.add(Edge(node.node_id, edu, FUSION_LABEL, "fusion"))
        edges.add(Edge(edu, node.node_id, FUSION_LABEL, "fusion"))
        chain_edus.setdefault(node.chain_id, set()).add(edu)
    for edus in chain_edus.values():
        ordered = sorted(edus)
        for i, u in enumerate(ordered):
            for v in ordered[i + 1:]:
                edges.add(Edge(u, v, FUSION_LABEL, "fusion"))
                edges.add(Edge(v, u, FUSION_LABEL, "fusion"))
    return CorefGraph(nodes, edges, doc_ids)


def build_pair_graph(
    doc_a: Document,
    doc_b: Document,
    tree_a: RstTree,
    tree_b: RstTree,
    lexicon: Lexicon | None = None,
    stoplist: frozenset[str] = frozenset(),
    ablate=None,
) -> CorefGraph:
    """Assemble the graph for a document pair: two discourse fragments bridged
    by cross-document lexical chains.  For a mention pair within a single
    document the graph is just that document's fragment."""
    from .discourse import ablate_relation

    validate_tree_for_doc(tree_a, len(doc_a))
    frag_a = rst_to_graph(tree_a, doc_a.doc_id)
    if ablate is not None:
        frag_a = ablate_relation(frag_a, ablate)
    if doc_a.doc_id == doc_b.doc_id:
        return CorefGraph(dict(frag_a.nodes), set(frag_a.edges), (doc_a.doc_id,))
    validate_tree_for_doc(tree_b, len(doc_b))
    frag_b = rst_to_graph(tree_b, doc_b.doc_id)
    if ablate is not None:
        frag_b = ablate_relation(frag_b, ablate)
    chains = build_chains(doc_a, doc_b, lexicon, stoplist)
    chain_frag = chains_to_graph(chains)
    occurrence_edus = {**edu_index(tree_a, doc_a.doc_id), **edu_index(tree_b, doc_b.doc_id)}
    return merge(frag_a, frag_b, chain_frag, occurrence_edus)


def attach_anchor(graph: CorefGraph, tree: RstTree, mention: EventMention) -> str:
    """Record the discourse unit holding the mention; returns the node id."""
    leaf = edu_of_mention(tree, mention.span)
    node_id = rst_graph_id(mention.doc_id, leaf)
    if node_id not in graph.nodes:
        raise FusionError(f"anchor {node_id} for mention {mention.mention_id} not in graph")
    graph.anchors[mention.mention_id] = node_id
    return node_id


def init_features(graph: CorefGraph, table: EmbeddingTable) -> FeatureMatrix:
    """Leaf units get the mean of their span's token vectors, chain words get
    their token's vector, and internal nodes get the mean of their children,
    computed bottom-up."""
    order = tuple(sorted(graph.nodes))
    values = np.zeros((len(order), table.dim))
    index = {nid: i for i, nid in enumerate(order)}
    resolved: dict[str, np.ndarray] = {}

    def feature(nid: str) -> np.ndarray:
        if nid in resolved:
            return resolved[nid]
        node = graph.nodes[nid]
        if node.kind == "edu_leaf":
            rows = table.doc(node.doc_id)
            lo, hi = node.edu_span
            if hi >= rows.shape[0]:
                raise FusionError(
                    f"unit span [{lo}, {hi}] exceeds embeddings for doc {node.doc_id!r}"
                )
            vec = rows[lo:hi + 1].mean(axis=0)
        elif node.kind == "chain_word":
            rows = table.doc(node.doc_id)
            if node.token_index >= rows.shape[0]:
                raise FusionError(
                    f"token {node.token_index} exceeds embeddings for doc {node.doc_id!r}"
                )
            vec = rows[node.token_index]
        else:
            left, right = node.children
            vec = (feature(left) + feature(right)) / 2.0
        resolved[nid] = vec
        return vec

    for nid in order:
        values[index[nid]] = feature(nid)
    return FeatureMatrix(order, values)


def is_connected(graph: CorefGraph) -> bool:
    """Weak connectivity of the merged graph."""
    if len(graph.nodes) <= 1:
        return True
    adj: dict[str, set[str]] = {n: set() for n in graph.nodes}
    for e in graph.edges:
        adj[e.src].add(e.dst)
        adj[e.dst].add(e.src)
    start = next(iter(graph.nodes))
    seen = {start}
    stack = [start]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return len(seen) == len(graph.nodes)


def dump_graph(graph: CorefGraph) -> dict:
    """JSON-ready view of a graph for inspection and fixtures."""

    def label(node: GraphNode) -> str:
        if node.kind == "edu_leaf":
            return f"{node.edu_span[0]}:{node.edu_span[1]}"
        if node.kind == "chain_word":
            return f"{node.doc_id}[{node.token_index}]"
        return "internal"

    return {
        "nodes": [
            {"id": n.node_id, "type": n.kind, "label": label(n)}
            for n in sorted(graph.nodes.values(), key=lambda n: n.node_id)
        ],
        "edges": [
            {"src": e.src, "dst": e.dst, "relation": e.relation, "origin": e.origin}
            for e in sorted(graph.edges, key=lambda e: (e.src, e.dst, e.relation, e.origin))
        ],
    }


def save_graph(graph: CorefGraph, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dump_graph(graph), fh, sort_keys=True, indent=2)
