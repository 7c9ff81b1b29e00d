"""Discourse trees and their conversion to graph fragments.

Trees are ingested from a bracketed serialization, one tree per document:

    (<Relation> (<N|S> <childOrSpan>) (<N|S> <childOrSpan>))

where a leaf span is two inclusive token indices, e.g. ``(N 0 4)``, and an
internal child nests another relation node.  A single-unit document is a
bare leaf, e.g. ``(N 0 5)``.

Edge direction in the derived fragment follows nuclearity: the satellite
points to the nucleus, and a nucleus-nucleus sibling pair is linked in both
directions.  Parent-child structural edges (label ``Struct``) are added in
both directions so that information can flow through the hierarchy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RELATION_LABELS_ORDERED = (
    "Background",
    "Elaboration",
    "Attribution",
    "Same-Unit",
    "Joint",
    "Explanation",
    "Enablement",
    "Cause",
    "Topic-Comment",
    "Contrast",
    "Condition",
    "Comparison",
    "Evaluation",
    "Manner-Means",
    "Summary",
    "Temporal",
    "Topic-Change",
    "Textual-Organization",
)
RELATION_LABELS = frozenset(RELATION_LABELS_ORDERED)

STRUCT_LABEL = "Struct"
SELF_LABEL = "Self"

NUCLEUS = "nucleus"
SATELLITE = "satellite"


class RstError(ValueError):
    """Malformed tree text or violated tree invariant."""


@dataclass(frozen=True)
class RstNode:
    node_id: int
    kind: str  # 'internal' | 'edu_leaf'
    nuclearity: str  # 'nucleus' | 'satellite'
    relation: str | None = None  # internal nodes: relation joining the children
    children: tuple[int, int] | None = None
    edu_span: tuple[int, int] | None = None  # leaves: inclusive token range


@dataclass(frozen=True)
class RstTree:
    nodes: dict[int, RstNode]
    root_id: int

    def leaves(self) -> list[RstNode]:
        """Leaves in textual (left-to-right) order."""
        out: list[RstNode] = []

        def walk(nid: int) -> None:
            node = self.nodes[nid]
            if node.kind == "edu_leaf":
                out.append(node)
            else:
                walk(node.children[0])
                walk(node.children[1])

        walk(self.root_id)
        return out

    def span(self) -> tuple[int, int]:
        leaves = self.leaves()
        return (leaves[0].edu_span[0], leaves[-1].edu_span[1])

    def __eq__(self, other) -> bool:
        if not isinstance(other, RstTree):
            return NotImplemented
        return self.root_id == other.root_id and self.nodes == other.nodes


# ---------------------------------------------------------------------------
# Parsing and serialization
# ---------------------------------------------------------------------------

def _tokenize(text: str) -> list[str]:
    return text.replace("(", " ( ").replace(")", " ) ").split()


def parse_rst(text: str) -> RstTree:
    """Parse the bracketed serialization into a validated tree."""
    toks = _tokenize(text)
    if not toks:
        raise RstError("empty tree text")
    pos = 0
    nodes: dict[int, RstNode] = {}
    next_id = 0

    def take() -> str:
        nonlocal pos
        if pos >= len(toks):
            raise RstError("malformed bracketing: unexpected end of input")
        tok = toks[pos]
        pos += 1
        return tok

    def peek() -> str | None:
        return toks[pos] if pos < len(toks) else None

    def alloc() -> int:
        nonlocal next_id
        nid = next_id
        next_id += 1
        return nid

    def parse_leaf(nuc: str) -> int:
        nid = alloc()
        try:
            start, end = int(take()), int(take())
        except ValueError as exc:
            raise RstError("malformed leaf: expected two integer token indices") from exc
        if start < 0 or end < start:
            raise RstError(f"invalid leaf span [{start}, {end}]")
        nodes[nid] = RstNode(nid, "edu_leaf", nuc, edu_span=(start, end))
        return nid

    def parse_internal(nuc: str) -> int:
        nid = alloc()
        if take() != "(":
            raise RstError("malformed bracketing: expected '('")
        rel = take()
        if rel in ("N", "S", "(", ")"):
            raise RstError(f"malformed tree: expected relation label, got {rel!r}")
        if rel not in RELATION_LABELS:
            raise RstError(f"unknown relation {rel!r}")
        left = parse_child()
        right = parse_child()
        if take() != ")":
            raise RstError("malformed bracketing: expected ')'")
        nodes[nid] = RstNode(nid, "internal", nuc, relation=rel, children=(left, right))
        return nid

    def parse_child() -> int:
        if take() != "(":
            raise RstError("malformed bracketing: expected '('")
        tag = take()
        if tag not in ("N", "S"):
            raise RstError(f"malformed tree: expected nuclearity tag N or S, got {tag!r}")
        nuc = NUCLEUS if tag == "N" else SATELLITE
        nid = parse_internal(nuc) if peek() == "(" else parse_leaf(nuc)
        if take() != ")":
            raise RstError("malformed bracketing: expected ')'")
        return nid

    if len(toks) >= 2 and toks[1] in ("N", "S"):
        # bare single-leaf tree, root is a leaf
        root = parse_child()
    else:
        root = parse_internal(NUCLEUS)
    if pos != len(toks):
        raise RstError("malformed bracketing: trailing input after tree")

    tree = RstTree(nodes, root)
    _validate_tree(tree)
    return tree


def _validate_tree(tree: RstTree) -> None:
    for node in tree.nodes.values():
        if node.kind == "internal":
            left, right = (tree.nodes[c] for c in node.children)
            if left.nuclearity == SATELLITE and right.nuclearity == SATELLITE:
                raise RstError(
                    f"sibling pair under node {node.node_id} has two satellites"
                )
    leaves = tree.leaves()
    if leaves[0].edu_span[0] != 0:
        raise RstError("leaf spans do not start at token 0")
    for prev, cur in zip(leaves, leaves[1:]):
        if cur.edu_span[0] != prev.edu_span[1] + 1:
            raise RstError(
                f"leaf spans do not partition the token range: {prev.edu_span} "
                f"followed by {cur.edu_span}"
            )


def serialize_rst(tree: RstTree) -> str:
    """Inverse of parse_rst (parse_rst(serialize_rst(t)) == t)."""

    def child(nid: int) -> str:
        node = tree.nodes[nid]
        tag = "N" if node.nuclearity == NUCLEUS else "S"
        if node.kind == "edu_leaf":
            return f"({tag} {node.edu_span[0]} {node.edu_span[1]})"
        return f"({tag} {inner(nid)})"

    def inner(nid: int) -> str:
        node = tree.nodes[nid]
        return f"({node.relation} {child(node.children[0])} {child(node.children[1])})"

    root = tree.nodes[tree.root_id]
    if root.kind == "edu_leaf":
        return f"(N {root.edu_span[0]} {root.edu_span[1]})"
    return inner(tree.root_id)


def validate_tree_for_doc(tree: RstTree, doc_length: int) -> None:
    """Check that the tree's leaves cover exactly [0, doc_length - 1]."""
    start, end = tree.span()
    if start != 0 or end != doc_length - 1:
        raise RstError(
            f"tree covers [{start}, {end}] but document has {doc_length} tokens"
        )


def build_tree(spans: list[tuple[int, int]], relations: list[str],
               rng: np.random.Generator) -> RstTree:
    """Assemble a random binary tree over the given in-order leaf spans."""
    nodes: dict[int, RstNode] = {}
    counter = [0]

    def alloc() -> int:
        counter[0] += 1
        return counter[0] - 1

    nuclearity_patterns = ((NUCLEUS, SATELLITE), (SATELLITE, NUCLEUS), (NUCLEUS, NUCLEUS))

    def build(lo: int, hi: int, nuc: str) -> int:
        nid = alloc()
        if lo == hi:
            nodes[nid] = RstNode(nid, "edu_leaf", nuc, edu_span=spans[lo])
            return nid
        split = int(rng.integers(lo, hi)) if hi > lo + 1 else lo
        rel = relations[int(rng.integers(0, len(relations)))]
        left_nuc, right_nuc = nuclearity_patterns[int(rng.integers(0, 3))]
        left = build(lo, split, left_nuc)
        right = build(split + 1, hi, right_nuc)
        nodes[nid] = RstNode(nid, "internal", nuc, relation=rel, children=(left, right))
        return nid

    root = build(0, len(spans) - 1, NUCLEUS)
    return RstTree(nodes, root)


# ---------------------------------------------------------------------------
# Graph fragments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GraphNode:
    node_id: str
    kind: str  # 'rst_internal' | 'edu_leaf' | 'chain_word'
    doc_id: str | None = None
    edu_span: tuple[int, int] | None = None
    token_index: int | None = None
    chain_id: int | None = None
    children: tuple[str, str] | None = None


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    relation: str
    origin: str  # 'rst' | 'chain' | 'fusion'


@dataclass
class GraphFragment:
    nodes: dict[str, GraphNode]
    edges: set[Edge]


def rst_graph_id(doc_id: str, node_id: int) -> str:
    return f"{doc_id}/n{node_id}"


def rst_to_graph(tree: RstTree, doc_id: str) -> GraphFragment:
    """One graph node per tree node; directed edges by nuclearity plus
    bidirectional parent-child Struct edges."""
    nodes: dict[str, GraphNode] = {}
    edges: set[Edge] = set()
    for node in tree.nodes.values():
        gid = rst_graph_id(doc_id, node.node_id)
        if node.kind == "edu_leaf":
            nodes[gid] = GraphNode(gid, "edu_leaf", doc_id=doc_id, edu_span=node.edu_span)
        else:
            child_ids = tuple(rst_graph_id(doc_id, c) for c in node.children)
            nodes[gid] = GraphNode(gid, "rst_internal", doc_id=doc_id, children=child_ids)
    for node in tree.nodes.values():
        if node.kind != "internal":
            continue
        gid = rst_graph_id(doc_id, node.node_id)
        left, right = (tree.nodes[c] for c in node.children)
        gleft, gright = (rst_graph_id(doc_id, c) for c in node.children)
        rel = node.relation
        if left.nuclearity == NUCLEUS and right.nuclearity == NUCLEUS:
            edges.add(Edge(gleft, gright, rel, "rst"))
            edges.add(Edge(gright, gleft, rel, "rst"))
        elif left.nuclearity == SATELLITE:
            edges.add(Edge(gleft, gright, rel, "rst"))
        else:
            edges.add(Edge(gright, gleft, rel, "rst"))
        for child in (gleft, gright):
            edges.add(Edge(child, gid, STRUCT_LABEL, "rst"))
            edges.add(Edge(gid, child, STRUCT_LABEL, "rst"))
    return GraphFragment(nodes, edges)


def ablate_relation(fragment: GraphFragment, relation: str) -> GraphFragment:
    """Drop every rst-origin edge carrying the relation; every node that lost
    an incident edge gains a self-loop.  Idempotent."""
    if relation not in RELATION_LABELS:
        raise RstError(f"unknown relation {relation!r}")
    removed = {e for e in fragment.edges if e.origin == "rst" and e.relation == relation}
    kept = set(fragment.edges) - removed
    affected = {e.src for e in removed} | {e.dst for e in removed}
    for node_id in affected:
        kept.add(Edge(node_id, node_id, SELF_LABEL, "rst"))
    return GraphFragment(dict(fragment.nodes), kept)


def edu_of_mention(tree: RstTree, span: tuple[int, int]) -> int:
    """Leaf containing the mention's head token.

    The head position is taken to be the span start, which also resolves
    mentions straddling a leaf boundary.
    """
    start, end = span
    if start < 0 or end < start:
        raise RstError(f"invalid mention span [{start}, {end}]")
    for leaf in tree.leaves():
        lo, hi = leaf.edu_span
        if lo <= start <= hi:
            return leaf.node_id
    raise RstError(f"mention span [{start}, {end}] lies outside the tree range {tree.span()}")
