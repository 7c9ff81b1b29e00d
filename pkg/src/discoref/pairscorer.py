"""Mention-pair scoring and the end-to-end training loop.

A mention is represented by the zero-padded concatenation of its token
vectors.  A pair is represented as [v_a, v_b, h'_a, h'_b] where h' are the
attention-layer outputs at the discourse units holding the two mentions;
a 3-layer MLP with a sigmoid head turns that into a coreference probability.
Training minimizes binary cross-entropy with mini-batch Adam, linear
warm-up, and decoupled weight decay.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus, Document, EmbeddingTable, EventMention, MentionPair
from .discourse import RstTree
from .fusion import CorefGraph, FeatureMatrix, attach_anchor, build_pair_graph, init_features
from .gnn import (
    GatGradients,
    GatParams,
    gat_backward,
    gat_forward,
    gat_forward_cached,
    gat_params_from_dict,
    gat_params_to_dict,
    init_gat_params,
)
from .lexchain import Lexicon


class ScorerError(ValueError):
    pass


class NumericError(RuntimeError):
    """Non-finite loss or gradient during training."""


@dataclass
class MlpParams:
    """Affine layers as (weight, bias) with ReLU between and a scalar output."""

    layers: list[tuple[np.ndarray, np.ndarray]]

    def __post_init__(self):
        for i, (w, b) in enumerate(self.layers):
            if w.shape[0] != b.shape[0]:
                raise ScorerError(f"layer {i}: weight/bias shapes disagree")
            if i > 0 and w.shape[1] != self.layers[i - 1][0].shape[0]:
                raise ScorerError(f"layer {i}: input dim does not compose with layer {i - 1}")
        if self.layers[-1][0].shape[0] != 1:
            raise ScorerError("final layer must have a single output")

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1]


def init_mlp_params(input_dim: int, seed: int = 0,
                    hidden: tuple[int, int] | None = None) -> MlpParams:
    """3-layer MLP, widths input -> input/2 -> input/4 -> 1 by default."""
    if hidden is None:
        hidden = (max(1, input_dim // 2), max(1, input_dim // 4))
    rng = np.random.default_rng(seed)
    dims = [input_dim, *hidden, 1]
    layers = []
    for d_in, d_out in zip(dims, dims[1:]):
        bound = 1.0 / math.sqrt(d_in)
        layers.append((
            rng.uniform(-bound, bound, size=(d_out, d_in)),
            rng.uniform(-bound, bound, size=d_out),
        ))
    return MlpParams(layers)


def mention_repr(doc: Document, mention: EventMention, table: EmbeddingTable,
                 max_len: int) -> np.ndarray:
    """Concatenated token vectors, truncated to max_len tokens and
    zero-padded to max_len * d."""
    rows = table.doc(doc.doc_id)
    out = np.zeros(max_len * table.dim)
    span = range(mention.start, min(mention.end + 1, mention.start + max_len))
    for slot, idx in enumerate(span):
        out[slot * table.dim:(slot + 1) * table.dim] = rows[idx]
    return out


def mlp_forward(x: np.ndarray, params: MlpParams) -> tuple[float, list]:
    """Returns the scalar logit and the activation cache for backward."""
    if x.shape != (params.input_dim,):
        raise ScorerError(f"input shape {x.shape} does not match MLP input {params.input_dim}")
    cache = [x]
    h = x
    last = len(params.layers) - 1
    for i, (w, b) in enumerate(params.layers):
        h = w @ h + b
        if i < last:
            h = np.maximum(h, 0.0)
        cache.append(h)
    return float(h[0]), cache


def mlp_backward(params: MlpParams, cache: list, dlogit: float):
    """Gradients for every layer plus the gradient w.r.t. the input."""
    grads = [None] * len(params.layers)
    dh = np.array([dlogit])
    last = len(params.layers) - 1
    for i in range(last, -1, -1):
        w, _ = params.layers[i]
        if i < last:
            dh = dh * (cache[i + 1] > 0)
        grads[i] = (np.outer(dh, cache[i]), dh.copy())
        dh = w.T @ dh
    return grads, dh


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def score_pair(pair_repr: np.ndarray, params: MlpParams) -> float:
    """Coreference probability in (0, 1), clipped away from exact 0/1."""
    logit, _ = mlp_forward(pair_repr, params)
    return float(np.clip(_sigmoid(logit), 1e-12, 1.0 - 1e-12))


def _bce(logit: float, label: float) -> tuple[float, float]:
    """Stable binary cross-entropy from the logit; returns (loss, dloss/dlogit)."""
    loss = max(logit, 0.0) - logit * label + math.log1p(math.exp(-abs(logit)))
    return loss, _sigmoid(logit) - label


def lemma_baseline(pair: MentionPair, corpus: Corpus) -> int:
    """1 iff the two mentions share a case-normalized head lemma."""
    a = corpus.mention(pair.mention_a).head_lemma.casefold()
    b = corpus.mention(pair.mention_b).head_lemma.casefold()
    return int(a == b)


def lemma_clusters(corpus: Corpus) -> dict[int, set[str]]:
    """Baseline partition: all mentions sharing a head lemma form a cluster."""
    groups: dict[str, set[str]] = {}
    for m in corpus.mentions:
        groups.setdefault(m.head_lemma.casefold(), set()).add(m.mention_id)
    return {i: members for i, (_, members) in enumerate(sorted(groups.items()))}


# ---------------------------------------------------------------------------
# Pipeline plumbing
# ---------------------------------------------------------------------------

@dataclass
class ModelConfig:
    gat_heads: int = 2
    gat_dim: int | None = None  # None: keep the embedding dimension
    gat_layers: int = 1
    max_mention_len: int = 8
    leaky_slope: float = 0.2
    mlp_hidden: tuple[int, int] | None = None

    def resolved_gat_dim(self, embed_dim: int) -> int:
        d = self.gat_dim if self.gat_dim is not None else embed_dim
        if self.gat_layers > 1 and d != embed_dim:
            raise ScorerError("stacked attention layers require gat_dim == embedding dim")
        return d

    def pair_dim(self, embed_dim: int) -> int:
        return 2 * self.max_mention_len * embed_dim + 2 * self.resolved_gat_dim(embed_dim)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    warmup_steps: int | None = None  # None: 10% of total steps
    batch_size: int = 128
    weight_decay: float = 0.01
    epochs: int = 10
    seed: int = 0

    def validate(self, total_steps: int) -> int:
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ScorerError("learning_rate and weight_decay must be non-negative")
        if self.batch_size < 1 or self.epochs < 1:
            raise ScorerError("batch_size and epochs must be positive")
        warmup = self.warmup_steps
        if warmup is None:
            warmup = max(1, math.ceil(0.1 * total_steps))
        if warmup > total_steps:
            raise ScorerError(f"warmup_steps {warmup} exceeds total steps {total_steps}")
        return warmup


@dataclass
class PipelineInputs:
    corpus: Corpus
    embeddings: EmbeddingTable
    trees: dict[str, RstTree]
    lexicon: Lexicon | None = None
    stoplist: frozenset[str] = frozenset()


class GraphBank:
    """Builds and caches the prepared graph for each document pair: merged
    graph, initial features, and anchor rows for the documents' mentions."""

    def __init__(self, inputs: PipelineInputs, ablate: str | None = None):
        self.inputs = inputs
        self.ablate = ablate
        self._cache: dict[tuple[str, ...], tuple[CorefGraph, FeatureMatrix, dict[str, int]]] = {}

    def key_for(self, mention_a: EventMention, mention_b: EventMention) -> tuple[str, ...]:
        if mention_a.doc_id == mention_b.doc_id:
            return (mention_a.doc_id,)
        return tuple(sorted((mention_a.doc_id, mention_b.doc_id)))

    def tree(self, doc_id: str) -> RstTree:
        if doc_id not in self.inputs.trees:
            raise ScorerError(f"missing discourse tree for doc {doc_id!r}")
        return self.inputs.trees[doc_id]

    def get(self, key: tuple[str, ...]):
        if key not in self._cache:
            docs = self.inputs.corpus.documents
            doc_a = docs[key[0]]
            doc_b = docs[key[-1]]
            graph = build_pair_graph(
                doc_a,
                doc_b,
                self.tree(doc_a.doc_id),
                self.tree(doc_b.doc_id),
                self.inputs.lexicon,
                self.inputs.stoplist,
                ablate=self.ablate,
            )
            for doc_id in key:
                for mention in self.inputs.corpus.mentions_of_doc(doc_id):
                    attach_anchor(graph, self.tree(doc_id), mention)
            feats = init_features(graph, self.inputs.embeddings)
            rows = {i: n for n, i in enumerate(feats.node_ids)}
            anchor_rows = {mid: rows[nid] for mid, nid in graph.anchors.items()}
            self._cache[key] = (graph, feats, anchor_rows)
        return self._cache[key]


class _Adam:
    """Adam with linear warm-up and decoupled weight decay."""

    def __init__(self, shapes, lr, weight_decay, warmup, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.lr, self.wd, self.warmup = lr, weight_decay, warmup
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        lr_t = self.lr * min(1.0, self.t / self.warmup)
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            mhat = m / (1 - self.beta1 ** self.t)
            vhat = v / (1 - self.beta2 ** self.t)
            p -= lr_t * (mhat / (np.sqrt(vhat) + self.eps) + self.wd * p)


@dataclass
class TrainResult:
    gat: GatParams
    mlp: MlpParams
    loss_history: list[float]


def _flatten_params(gat: GatParams, mlp: MlpParams) -> list[np.ndarray]:
    out = list(gat.weights) + list(gat.attn)
    for w, b in mlp.layers:
        out.extend((w, b))
    return out


def _pair_forward(x_a, x_b, h_out, row_a, row_b, mlp: MlpParams):
    x = np.concatenate([x_a, x_b, h_out[row_a], h_out[row_b]])
    logit, cache = mlp_forward(x, mlp)
    return x, logit, cache


def _gat_stack_forward(graph, feats, gat: GatParams, layers: int):
    caches = []
    cur = feats
    for _ in range(layers):
        cur, cache = gat_forward_cached(graph, cur, gat)
        caches.append(cache)
    return cur, caches


def _gat_stack_backward(caches, upstream, gat: GatParams):
    total = GatGradients(
        [np.zeros_like(w) for w in gat.weights],
        [np.zeros_like(a) for a in gat.attn],
    )
    grad = upstream
    for cache in reversed(caches):
        g, grad = gat_backward(cache, grad)
        for acc, dw in zip(total.weights, g.weights):
            acc += dw
        for acc, da in zip(total.attn, g.attn):
            acc += da
    return total, grad


def train(
    pairs: list[MentionPair],
    inputs: PipelineInputs,
    train_cfg: TrainConfig,
    model_cfg: ModelConfig | None = None,
) -> TrainResult:
    """Mini-batch training of the attention layer and the pair MLP.

    Deterministic under the config seed: parameters are seeded, and the
    per-epoch shuffle plus the in-batch accumulation order are fixed.
    """
    model_cfg = model_cfg or ModelConfig()
    labeled = sorted((p for p in pairs), key=lambda p: p.key)
    if any(p.label is None for p in labeled):
        raise ScorerError("training pairs must be labeled")
    if not labeled:
        raise ScorerError("no training pairs")
    d = inputs.embeddings.dim
    d_out = model_cfg.resolved_gat_dim(d)
    gat = init_gat_params(d, d_out, model_cfg.gat_heads, model_cfg.leaky_slope,
                          seed=train_cfg.seed)
    mlp = init_mlp_params(model_cfg.pair_dim(d), seed=train_cfg.seed + 1,
                          hidden=model_cfg.mlp_hidden)

    n = len(labeled)
    steps_per_epoch = math.ceil(n / train_cfg.batch_size)
    warmup = train_cfg.validate(train_cfg.epochs * steps_per_epoch)
    bank = GraphBank(inputs)
    mvec: dict[str, np.ndarray] = {}
    for m in inputs.corpus.mentions:
        mvec[m.mention_id] = mention_repr(
            inputs.corpus.documents[m.doc_id], m, inputs.embeddings, model_cfg.max_mention_len
        )

    params = _flatten_params(gat, mlp)
    adam = _Adam([p.shape for p in params], train_cfg.learning_rate,
                 train_cfg.weight_decay, warmup)
    rng = np.random.default_rng(train_cfg.seed)
    history: list[float] = []
    n_gat = len(gat.weights) + len(gat.attn)

    for epoch in range(train_cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for batch_no, lo in enumerate(range(0, n, train_cfg.batch_size)):
            batch = [labeled[i] for i in order[lo:lo + train_cfg.batch_size]]
            by_graph: dict[tuple[str, ...], list[MentionPair]] = {}
            for p in batch:
                key = bank.key_for(inputs.corpus.mention(p.mention_a),
                                   inputs.corpus.mention(p.mention_b))
                by_graph.setdefault(key, []).append(p)
            grads = [np.zeros_like(p) for p in params]
            batch_loss = 0.0
            scale = 1.0 / len(batch)
            for key in sorted(by_graph):
                graph, feats, anchor_rows = bank.get(key)
                h_out, caches = _gat_stack_forward(graph, feats, gat, model_cfg.gat_layers)
                upstream = np.zeros_like(h_out.values)
                for p in sorted(by_graph[key], key=lambda q: q.key):
                    ra, rb = anchor_rows[p.mention_a], anchor_rows[p.mention_b]
                    x, logit, cache = _pair_forward(
                        mvec[p.mention_a], mvec[p.mention_b], h_out.values, ra, rb, mlp
                    )
                    loss, dlogit = _bce(logit, float(p.label))
                    if not math.isfinite(loss):
                        raise NumericError(
                            f"non-finite loss in epoch {epoch} batch {batch_no} "
                            f"on pair ({p.mention_a}, {p.mention_b})"
                        )
                    batch_loss += loss * scale
                    mlp_grads, dx = mlp_backward(mlp, cache, dlogit * scale)
                    for li, (dw, db) in enumerate(mlp_grads):
                        grads[n_gat + 2 * li] += dw
                        grads[n_gat + 2 * li + 1] += db
                    hd = h_out.values.shape[1]
                    upstream[ra] += dx[-2 * hd:-hd]
                    upstream[rb] += dx[-hd:]
                gat_grads, _ = _gat_stack_backward(caches, upstream, gat)
                for gi, dw in enumerate(gat_grads.weights):
                    grads[gi] += dw
                for gi, da in enumerate(gat_grads.attn):
                    grads[len(gat.weights) + gi] += da
            adam.step(params, grads)
            epoch_loss += batch_loss
        history.append(epoch_loss / steps_per_epoch)
    return TrainResult(gat, mlp, history)


def predict(
    pairs: list[MentionPair],
    gat: GatParams,
    mlp: MlpParams,
    inputs: PipelineInputs,
    model_cfg: ModelConfig | None = None,
    workers: int = 1,
    ablate: str | None = None,
) -> list[tuple[str, str, float]]:
    """One score per pair, ordered by pair id.  Pure per-pair function, so the
    result is independent of input pair order; graph work is fanned out to a
    bounded worker pool when workers > 1."""
    model_cfg = model_cfg or ModelConfig()
    bank = GraphBank(inputs, ablate=ablate)
    mvec: dict[str, np.ndarray] = {}
    by_graph: dict[tuple[str, ...], list[MentionPair]] = {}
    for p in sorted(set(pairs), key=lambda q: q.key):
        ma, mb = inputs.corpus.mention(p.mention_a), inputs.corpus.mention(p.mention_b)
        by_graph.setdefault(bank.key_for(ma, mb), []).append(p)
        for m in (ma, mb):
            if m.mention_id not in mvec:
                mvec[m.mention_id] = mention_repr(
                    inputs.corpus.documents[m.doc_id], m, inputs.embeddings,
                    model_cfg.max_mention_len,
                )

    def score_graph(key: tuple[str, ...]) -> list[tuple[str, str, float]]:
        graph, feats, anchor_rows = bank.get(key)
        h_out = feats
        for _ in range(model_cfg.gat_layers):
            h_out = gat_forward(graph, h_out, gat)
        out = []
        for p in by_graph[key]:
            ra, rb = anchor_rows[p.mention_a], anchor_rows[p.mention_b]
            x = np.concatenate([mvec[p.mention_a], mvec[p.mention_b],
                                h_out.values[ra], h_out.values[rb]])
            out.append((p.mention_a, p.mention_b, score_pair(x, mlp)))
        return out

    keys = sorted(by_graph)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(score_graph, keys))
    else:
        chunks = [score_graph(k) for k in keys]
    scored = [row for chunk in chunks for row in chunk]
    return sorted(scored, key=lambda r: (r[0], r[1]))


# ---------------------------------------------------------------------------
# Checkpoints and score tables
# ---------------------------------------------------------------------------

def save_checkpoint(gat: GatParams, mlp: MlpParams, path: str | Path,
                    extra: dict | None = None) -> None:
    data = {
        "gat": gat_params_to_dict(gat),
        "mlp": {
            "layers": [
                {"weight": w.tolist(), "bias": b.tolist(), "shape": list(w.shape)}
                for w, b in mlp.layers
            ]
        },
    }
    if extra:
        data["extra"] = extra
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, sort_keys=True)


def load_checkpoint(path: str | Path) -> tuple[GatParams, MlpParams, dict]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    gat = gat_params_from_dict(data["gat"])
    layers = []
    for layer in data["mlp"]["layers"]:
        w = np.asarray(layer["weight"], dtype=np.float64)
        b = np.asarray(layer["bias"], dtype=np.float64)
        if list(w.shape) != layer["shape"]:
            raise ScorerError(f"checkpoint layer shape mismatch: {layer['shape']} vs {w.shape}")
        layers.append((w, b))
    return gat, MlpParams(layers), data.get("extra", {})


def save_scores(rows: list[tuple[str, str, float]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("mention_a\tmention_b\tscore\n")
        for a, b, s in rows:
            fh.write(f"{a}\t{b}\t{s:.12g}\n")


def load_scores(path: str | Path) -> dict[tuple[str, str], float]:
    scores: dict[tuple[str, str], float] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if header.strip() != "mention_a\tmention_b\tscore":
            raise ScorerError("score table must start with a mention_a/mention_b/score header")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            a, b, s = line.split("\t")
            scores[(a, b)] = float(s)
    return scores
