"""Data model and corpus utilities.

Corpus files are JSON Lines, one record per mention:

    {"mention_id": ..., "doc_id": ..., "topic_id": ..., "subtopic_id": ...,
     "tokens": [{"surface": ..., "lemma": ...}, ...], "span": [start, end],
     "head_lemma": ..., "gold_cluster": ..., "event_type": ...}

A document is materialized from the first record carrying its doc_id.  Later
records for the same document may repeat the token list (it must then be
identical) or omit it.  Embedding files are JSON Lines of
{"doc_id": ..., "vectors": [[...], ...]} with one row per token.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class CorpusError(ValueError):
    """Malformed corpus input or violated corpus invariant."""


PAIR_MODES = ("wec_train", "wec_eval", "ecb_subtopic")


@dataclass(frozen=True)
class Token:
    index: int
    surface: str
    lemma: str


@dataclass(frozen=True)
class Document:
    doc_id: str
    tokens: tuple[Token, ...]
    topic_id: str | None = None
    subtopic_id: str | None = None
    language: str | None = None

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class EventMention:
    mention_id: str
    doc_id: str
    start: int
    end: int
    head_lemma: str
    gold_cluster: int
    event_type: str | None = None

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


@dataclass(frozen=True)
class MentionPair:
    """Unordered mention pair, canonicalized so that mention_a < mention_b."""

    mention_a: str
    mention_b: str
    label: bool | None = None

    def __post_init__(self):
        if self.mention_a == self.mention_b:
            raise CorpusError(f"pair of a mention with itself: {self.mention_a}")
        if self.mention_a > self.mention_b:
            a, b = self.mention_a, self.mention_b
            object.__setattr__(self, "mention_a", b)
            object.__setattr__(self, "mention_b", a)

    @property
    def key(self) -> tuple[str, str]:
        return (self.mention_a, self.mention_b)


class Corpus:
    """Immutable container of documents, mentions and gold clusters."""

    def __init__(self, documents: dict[str, Document], mentions: list[EventMention]):
        self.documents = dict(documents)
        self.mentions = list(mentions)
        self._by_id = {}
        for m in self.mentions:
            if m.mention_id in self._by_id:
                raise CorpusError(f"duplicate mention_id {m.mention_id!r}")
            if m.doc_id not in self.documents:
                raise CorpusError(f"mention {m.mention_id!r} references unknown doc {m.doc_id!r}")
            doc = self.documents[m.doc_id]
            if not (0 <= m.start <= m.end < len(doc)):
                raise CorpusError(
                    f"mention {m.mention_id!r} span [{m.start}, {m.end}] out of range "
                    f"for doc {m.doc_id!r} with {len(doc)} tokens"
                )
            self._by_id[m.mention_id] = m
        self._by_doc: dict[str, list[EventMention]] = {d: [] for d in self.documents}
        for m in self.mentions:
            self._by_doc[m.doc_id].append(m)

    def mention(self, mention_id: str) -> EventMention:
        return self._by_id[mention_id]

    def mentions_of_doc(self, doc_id: str) -> list[EventMention]:
        return list(self._by_doc[doc_id])

    def gold_clusters(self) -> dict[int, set[str]]:
        """Gold partition as {cluster_id: set of mention ids}."""
        out: dict[int, set[str]] = {}
        for m in self.mentions:
            out.setdefault(m.gold_cluster, set()).add(m.mention_id)
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, Corpus):
            return NotImplemented
        return self.documents == other.documents and self.mentions == other.mentions

    def __repr__(self) -> str:
        return f"Corpus(docs={len(self.documents)}, mentions={len(self.mentions)})"


def _token_from_record(i: int, item: dict, line_no: int) -> Token:
    surface = item.get("surface", "")
    if not surface:
        raise CorpusError(f"line {line_no}: token {i} has empty surface")
    return Token(index=i, surface=surface, lemma=item.get("lemma", surface))


def load_corpus(path: str | Path) -> Corpus:
    """Load and validate a JSON Lines corpus file."""
    documents: dict[str, Document] = {}
    raw_tokens: dict[str, list[dict]] = {}
    mentions: list[EventMention] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
            for key in ("mention_id", "doc_id", "span", "head_lemma", "gold_cluster"):
                if key not in rec:
                    raise CorpusError(f"line {line_no}: missing field {key!r}")
            doc_id = rec["doc_id"]
            tokens = rec.get("tokens")
            if doc_id not in documents:
                if tokens is None:
                    raise CorpusError(
                        f"line {line_no}: dangling doc_id {doc_id!r} (no tokens given "
                        "and document not previously defined)"
                    )
                documents[doc_id] = Document(
                    doc_id=doc_id,
                    tokens=tuple(_token_from_record(i, t, line_no) for i, t in enumerate(tokens)),
                    topic_id=rec.get("topic_id"),
                    subtopic_id=rec.get("subtopic_id"),
                    language=rec.get("language"),
                )
                raw_tokens[doc_id] = tokens
            elif tokens is not None and tokens != raw_tokens[doc_id]:
                raise CorpusError(f"line {line_no}: doc {doc_id!r} repeated with different tokens")
            doc = documents[doc_id]
            span = rec["span"]
            if not (isinstance(span, list) and len(span) == 2):
                raise CorpusError(f"line {line_no}: span must be a [start, end] pair")
            start, end = int(span[0]), int(span[1])
            mid = rec["mention_id"]
            if mid in seen_ids:
                raise CorpusError(f"line {line_no}: duplicate mention_id {mid!r}")
            seen_ids.add(mid)
            if not (0 <= start <= end < len(doc)):
                raise CorpusError(
                    f"line {line_no}: mention {mid!r} span [{start}, {end}] out of range "
                    f"for doc {doc_id!r} with {len(doc)} tokens"
                )
            if not rec["head_lemma"]:
                raise CorpusError(f"line {line_no}: mention {mid!r} has empty head_lemma")
            mentions.append(
                EventMention(
                    mention_id=mid,
                    doc_id=doc_id,
                    start=start,
                    end=end,
                    head_lemma=rec["head_lemma"],
                    gold_cluster=int(rec["gold_cluster"]),
                    event_type=rec.get("event_type"),
                )
            )
    return Corpus(documents, mentions)


def serialize_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus back out as JSON Lines, one record per mention."""
    with open(path, "w", encoding="utf-8") as fh:
        for m in corpus.mentions:
            doc = corpus.documents[m.doc_id]
            rec = {
                "mention_id": m.mention_id,
                "doc_id": m.doc_id,
                "tokens": [{"surface": t.surface, "lemma": t.lemma} for t in doc.tokens],
                "span": [m.start, m.end],
                "head_lemma": m.head_lemma,
                "gold_cluster": m.gold_cluster,
            }
            if doc.topic_id is not None:
                rec["topic_id"] = doc.topic_id
            if doc.subtopic_id is not None:
                rec["subtopic_id"] = doc.subtopic_id
            if doc.language is not None:
                rec["language"] = doc.language
            if m.event_type is not None:
                rec["event_type"] = m.event_type
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")


class EmbeddingTable:
    """Per-document token vectors with a uniform dimension."""

    def __init__(self, vectors: dict[str, np.ndarray]):
        dims = set()
        self.vectors: dict[str, np.ndarray] = {}
        for doc_id, arr in vectors.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.ndim != 2:
                raise CorpusError(f"embeddings for {doc_id!r} are not a 2-d array")
            if not np.all(np.isfinite(arr)):
                raise CorpusError(f"non-finite embedding values for doc {doc_id!r}")
            dims.add(arr.shape[1])
            self.vectors[doc_id] = arr
        if len(dims) > 1:
            raise CorpusError(f"inconsistent embedding dimensions: {sorted(dims)}")
        self.dim = dims.pop() if dims else 0

    def doc(self, doc_id: str) -> np.ndarray:
        if doc_id not in self.vectors:
            raise CorpusError(f"no embeddings for doc {doc_id!r}")
        return self.vectors[doc_id]

    def covers(self, corpus: Corpus) -> bool:
        return all(
            d in self.vectors and self.vectors[d].shape[0] == len(doc)
            for d, doc in corpus.documents.items()
        )


def load_embeddings(path: str | Path) -> EmbeddingTable:
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
            try:
                vectors[rec["doc_id"]] = np.asarray(rec["vectors"], dtype=np.float64)
            except (KeyError, ValueError) as exc:
                raise CorpusError(f"line {line_no}: bad embedding record ({exc})") from exc
    return EmbeddingTable(vectors)


def save_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc_id in table.vectors:
            rec = {"doc_id": doc_id, "vectors": table.vectors[doc_id].tolist()}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def hash_embed(token: Token | str, seed: int, dim: int) -> np.ndarray:
    """Deterministic unit-norm vector derived from a token surface.

    A pure function of (surface, seed, dim): the surface is hashed into an
    RNG seed and a standard-normal draw is normalized.  Distinct surfaces
    give vectors that are uncorrelated in expectation.
    """
    if dim < 1:
        raise ValueError("embedding dimension must be >= 1")
    surface = token.surface if isinstance(token, Token) else token
    digest = hashlib.blake2b(f"{seed}\x00{dim}\x00{surface}".encode(), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "big"))
    vec = rng.standard_normal(dim)
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        vec[0] = 1.0
        norm = 1.0
    return vec / norm

def hash_embedding_table(corpus: Corpus, dim: int, seed: int) -> EmbeddingTable:
    """Embed every token of every document with hash_embed."""
    cache: dict[str, np.ndarray] = {}
    vectors = {}
    for doc_id, doc in corpus.documents.items():
        rows = np.empty((len(doc), dim))
        for i, tok in enumerate(doc.tokens):
            if tok.surface not in cache:
                cache[tok.surface] = hash_embed(tok, seed, dim)
            rows[i] = cache[tok.surface]
        vectors[doc_id] = rows
    return EmbeddingTable(vectors)


def generate_pairs(
    corpus: Corpus,
    mode: str,
    neg_ratio: int = 10,
    seed: int = 0,
) -> list[MentionPair]:
    """Generate labeled mention pairs for training or evaluation.

    wec_train: all positive pairs plus min(neg_ratio * |pos|, available)
    negatives sampled by seeded shuffle of the lexicographically sorted
    candidate list.  wec_eval: every unordered pair, no ratio control.
    ecb_subtopic: all positives plus every negative whose two mentions share
    a subtopic_id.
    """
    if mode not in PAIR_MODES:
        raise ValueError(f"unknown pair mode {mode!r}; expected one of {PAIR_MODES}")
    mentions = sorted(corpus.mentions, key=lambda m: m.mention_id)
    positives = []
    negatives = []
    for a, b in itertools.combinations(mentions, 2):
        if a.gold_cluster == b.gold_cluster:
            positives.append(MentionPair(a.mention_id, b.mention_id, label=True))
        else:
            negatives.append(MentionPair(a.mention_id, b.mention_id, label=False))

    if mode == "wec_eval":
        pairs = positives + negatives
    elif mode == "wec_train":
        if neg_ratio < 1:
            raise ValueError("neg_ratio must be >= 1")
        budget = min(neg_ratio * len(positives), len(negatives))
        candidates = sorted(negatives, key=lambda p: p.key)
        random.Random(seed).shuffle(candidates)
        pairs = positives + candidates[:budget]
    else:  # ecb_subtopic
        def subtopic(m: EventMention) -> str:
            st = corpus.documents[m.doc_id].subtopic_id
            if st is None:
                raise CorpusError(
                    f"ecb_subtopic pairing requires subtopic ids; doc {m.doc_id!r} has none"
                )
            return st

        pairs = positives + [
            p
            for p in negatives
            if subtopic(corpus.mention(p.mention_a)) == subtopic(corpus.mention(p.mention_b))
        ]
    return sorted(pairs, key=lambda p: p.key)


def save_pairs(pairs: list[MentionPair], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            rec = {"a": p.mention_a, "b": p.mention_b, "label": p.label}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_pairs(path: str | Path) -> list[MentionPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rec = json.loads(line)
                pairs.append(MentionPair(rec["a"], rec["b"], label=rec.get("label")))
    return pairs


# ---------------------------------------------------------------------------
# Synthetic corpora
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Configuration for the planted-cluster synthetic corpus generator."""

    num_topics: int = 8
    clusters_per_topic: int = 5
    mentions_per_cluster: int = 4
    docs: int = 80
    doc_length: int = 40
    vocab_size: int = 8000
    overlap_rate_target: float = 0.35
    seed: int = 7
    embed_dim: int = 16

    def validate(self) -> None:
        for name in ("num_topics", "clusters_per_topic", "mentions_per_cluster",
                     "docs", "doc_length", "vocab_size", "embed_dim"):
            if getattr(self, name) < 1:
                raise CorpusError(f"SynthConfig.{name} must be >= 1")
        if not 0.0 <= self.overlap_rate_target <= 1.0:
            raise CorpusError("overlap_rate_target must lie in [0, 1]")


@dataclass
class SynthResult:
    corpus: Corpus
    embeddings: EmbeddingTable
    rst_trees: dict[str, str]  # doc_id -> serialized tree


@dataclass
class SynthSplits:
    """Training corpus plus a held-out corpus of fresh documents narrating
    the same planted clusters."""

    train: SynthResult
    heldout: SynthResult


# Mention spans are a 2-token cluster trigger plus one mention-specific token,
# so coreferent pairs are near-identical rather than identical and a trained
# scorer must tolerate the varying slot.
_SHARED_TRIGGER = 2
MENTION_SPAN = _SHARED_TRIGGER + 1


def _doc_plan(config: SynthConfig, n_clusters: int) -> list[tuple[int, int]]:
    """One (cluster, mentions hosted) entry per document, round-robin."""
    if config.docs < n_clusters:
        raise CorpusError(
            f"infeasible config: {config.docs} docs cannot host {n_clusters} clusters "
            "(each document narrates one cluster)"
        )
    if config.docs > n_clusters * config.mentions_per_cluster:
        raise CorpusError(
            f"infeasible config: {config.docs} docs but only "
            f"{n_clusters * config.mentions_per_cluster} mentions "
            "(every document must host at least one)"
        )
    docs_per_cluster = [config.docs // n_clusters] * n_clusters
    for i in range(config.docs % n_clusters):
        docs_per_cluster[i] += 1
    plan = []
    for c in range(n_clusters):
        nd = docs_per_cluster[c]
        if nd > config.mentions_per_cluster:
            raise CorpusError("infeasible config: more docs than mentions for a cluster")
        counts = [config.mentions_per_cluster // nd] * nd
        for i in range(config.mentions_per_cluster % nd):
            counts[i] += 1
        plan.extend((c, k) for k in counts)
    return plan


class _SynthWorld:
    """Shared cluster inventory (signatures, triggers, vocabulary pool) from
    which one or more corpora are emitted."""

    def __init__(self, config: SynthConfig, plans: list[list[tuple[int, int]]]):
        from . import discourse  # local import to avoid a cycle at module load

        self._discourse = discourse
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.n_clusters = config.num_topics * config.clusters_per_topic

        # Type accounting per doc hosting k mentions: the shared trigger
        # repeats k times but counts twice, each mention adds one private
        # type, so types = doc_length + 2 - 2k and the within-cluster overlap
        # is |signature| / mean types.
        ks = [k for plan in plans for _, k in plan]
        base_ks = [k for _, k in plans[0]]
        mean_types = float(np.mean([config.doc_length + 2 - 2 * k for k in base_ks]))
        self.sig_size = int(round(config.overlap_rate_target * mean_types))
        if self.sig_size < _SHARED_TRIGGER:
            raise CorpusError(
                "infeasible config: overlap_rate_target too low to carry a "
                f"{_SHARED_TRIGGER}-token trigger (signature would have {self.sig_size} lemmas)"
            )
        privates = 0
        for k in ks:
            p = config.doc_length - self.sig_size + _SHARED_TRIGGER - MENTION_SPAN * k
            if p < 0:
                raise CorpusError(
                    "infeasible config: doc_length too small for signature and triggers"
                )
            privates += p + k  # doc filler plus per-mention tokens
        needed = self.n_clusters * self.sig_size + privates
        if needed > config.vocab_size:
            raise CorpusError(
                f"infeasible config: needs {needed} distinct lemmas, "
                f"vocab has {config.vocab_size}"
            )
        self._pool = iter(self.rng.permutation(config.vocab_size))
        self.signatures = {c: self.draw(self.sig_size) for c in range(self.n_clusters)}
        self.triggers = {c: self.signatures[c][:_SHARED_TRIGGER] for c in range(self.n_clusters)}

    def draw(self, n: int) -> list[str]:
        return [f"w{next(self._pool):05d}" for _ in range(n)]

    def emit(self, plan: list[tuple[int, int]], doc_prefix: str,
             mention_prefix: str) -> SynthResult:
        config = self.config
        documents: dict[str, Document] = {}
        mentions: list[EventMention] = []
        trees: dict[str, str] = {}
        half = (config.clusters_per_topic + 1) // 2
        doc_no = mention_no = 0
        for ci, k in plan:
            topic_idx, within = divmod(ci, config.clusters_per_topic)
            doc_id = f"{doc_prefix}{doc_no:04d}"
            doc_no += 1
            n_priv = config.doc_length - self.sig_size + _SHARED_TRIGGER - MENTION_SPAN * k
            body = self.signatures[ci][_SHARED_TRIGGER:] + self.draw(n_priv)
            body = [body[i] for i in self.rng.permutation(len(body))]
            spans: list[tuple[int, int]] = []
            for _ in range(k):
                phrase = self.triggers[ci] + self.draw(1)
                pos = int(self.rng.integers(0, len(body) + 1))
                spans = [
                    (s + MENTION_SPAN, e + MENTION_SPAN) if s >= pos else (s, e)
                    for s, e in spans
                ]
                body[pos:pos] = phrase
                spans.append((pos, pos + MENTION_SPAN - 1))
            tokens = tuple(Token(i, w, w) for i, w in enumerate(body))
            documents[doc_id] = Document(
                doc_id=doc_id,
                tokens=tokens,
                topic_id=f"t{topic_idx}",
                subtopic_id=f"t{topic_idx}.s{0 if within < half else 1}",
            )
            for s, e in sorted(spans):
                mentions.append(
                    EventMention(
                        mention_id=f"{mention_prefix}{mention_no:04d}",
                        doc_id=doc_id,
                        start=s,
                        end=e,
                        head_lemma=self.triggers[ci][0],
                        gold_cluster=ci,
                    )
                )
                mention_no += 1
            trees[doc_id] = self._discourse.serialize_rst(_random_tree(len(tokens), self.rng))
        corpus = Corpus(documents, mentions)
        table = hash_embedding_table(corpus, config.embed_dim, config.seed)
        return SynthResult(corpus, table, trees)


def generate_synthetic(config: SynthConfig) -> SynthResult:
    """Generate a corpus with planted clusters, controlled lexical overlap,
    random discourse trees, and hash embeddings.

    Every document narrates exactly one cluster: its tokens are the cluster's
    shared signature vocabulary (which includes the mention trigger) plus
    document-private filler, so within-cluster document pairs hit the overlap
    target and cross-cluster pairs share nothing.
    """
    config.validate()
    n_clusters = config.num_topics * config.clusters_per_topic
    plan = _doc_plan(config, n_clusters)
    world = _SynthWorld(config, [plan])
    return world.emit(plan, "d", "m")


def generate_synthetic_splits(config: SynthConfig,
                              heldout_docs_per_cluster: int = 2) -> SynthSplits:
    """Training corpus per the config plus a held-out corpus of fresh
    documents (one mention each) narrating the same clusters.

    Cluster triggers and signatures are shared across the splits while all
    document filler and mention-specific tokens are new, so the held-out
    corpus contains unseen documents, graphs and pairs over the known event
    inventory.
    """
    config.validate()
    if heldout_docs_per_cluster < 2:
        raise CorpusError("need at least 2 held-out docs per cluster for cross-document pairs")
    n_clusters = config.num_topics * config.clusters_per_topic
    train_plan = _doc_plan(config, n_clusters)
    heldout_plan = [(c, 1) for c in range(n_clusters) for _ in range(heldout_docs_per_cluster)]
    world = _SynthWorld(config, [train_plan, heldout_plan])
    train = world.emit(train_plan, "d", "m")
    heldout = world.emit(heldout_plan, "h", "q")
    return SynthSplits(train, heldout)


def _random_tree(length: int, rng: np.random.Generator):
    """Random binary discourse tree over [0, length-1] with random relations."""
    from . import discourse

    if length == 1:
        return discourse.build_tree([(0, 0)], [], rng)
    max_edus = min(8, length)
    n_edus = int(rng.integers(2, max_edus + 1))
    cuts = sorted(rng.choice(np.arange(1, length), size=n_edus - 1, replace=False).tolist())
    bounds = [0] + cuts + [length]
    spans = [(bounds[i], bounds[i + 1] - 1) for i in range(n_edus)]
    return discourse.build_tree(spans, list(discourse.RELATION_LABELS_ORDERED), rng)
