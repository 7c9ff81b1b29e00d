"""Multi-head graph attention over a pair graph.

The update for node i with head-averaged aggregation is

    h'_i = ReLU( (1/K) sum_k sum_{j in N(i)} alpha^k_ij W_k h_j )

with attention

    alpha^k_ij = softmax_j( LeakyReLU( a_k^T [W_k h_i || W_k h_j] ) )

where N(i) is the set of in-neighbors of i (messages flow along edge
direction, so a satellite's content reaches its nucleus) plus i itself:
a self-loop is inserted for every node so the softmax is always defined.

``gat_forward`` is the edge-list implementation used by the pipeline;
``dense_oracle`` recomputes the same map over full masked m-by-m matrices
and exists for verification.  ``gat_gradients`` gives exact derivatives of
the forward map for training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fusion import CorefGraph, FeatureMatrix


class GnnError(ValueError):
    pass


@dataclass
class GatParams:
    """Per-head projection matrices (d_out, d_in) and attention vectors
    (2 * d_out,)."""

    weights: list[np.ndarray]
    attn: list[np.ndarray]
    leaky_slope: float = 0.2

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.attn):
            raise GnnError("need one attention vector per head")
        d_out, d_in = self.weights[0].shape
        for w in self.weights:
            if w.shape != (d_out, d_in) or not np.all(np.isfinite(w)):
                raise GnnError("head projection matrices must share a finite (d_out, d_in) shape")
        for a in self.attn:
            if a.shape != (2 * d_out,) or not np.all(np.isfinite(a)):
                raise GnnError("attention vectors must be finite with length 2 * d_out")

    @property
    def num_heads(self) -> int:
        return len(self.weights)

    @property
    def d_in(self) -> int:
        return self.weights[0].shape[1]

    @property
    def d_out(self) -> int:
        return self.weights[0].shape[0]


@dataclass
class GatGradients:
    weights: list[np.ndarray]
    attn: list[np.ndarray]


@dataclass
class AttentionMatrix:
    """Per-head normalized weights keyed by (node, in-neighbor)."""

    weights: tuple[dict[tuple[str, str], float], ...]


def init_gat_params(d_in: int, d_out: int, num_heads: int,
                    leaky_slope: float = 0.2, seed: int = 0) -> GatParams:
    """Seeded uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    rng = np.random.default_rng(seed)
    bound_w = 1.0 / np.sqrt(d_in)
    bound_a = 1.0 / np.sqrt(2 * d_out)
    weights = [rng.uniform(-bound_w, bound_w, size=(d_out, d_in)) for _ in range(num_heads)]
    attn = [rng.uniform(-bound_a, bound_a, size=2 * d_out) for _ in range(num_heads)]
    return GatParams(weights, attn, leaky_slope)


def _neighbor_arrays(graph: CorefGraph, order: tuple[str, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Deduplicated (receiver, sender) index pairs, self-loops included,
    sorted for deterministic accumulation."""
    index = {nid: i for i, nid in enumerate(order)}
    pairs = {(i, i) for i in range(len(order))}
    for e in graph.edges:
        pairs.add((index[e.dst], index[e.src]))
    arr = np.array(sorted(pairs), dtype=np.intp)
    return arr[:, 0], arr[:, 1]


def _leaky(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, x, slope * x)


def _leaky_grad(x: np.ndarray, slope: float) -> np.ndarray:
    # subgradient at exactly 0 is taken as 0
    return np.where(x > 0, 1.0, np.where(x < 0, slope, 0.0))


def _check_features(features: FeatureMatrix, params: GatParams) -> None:
    if features.values.shape[1] != params.d_in:
        raise GnnError(
            f"feature dim {features.values.shape[1]} does not match projection input {params.d_in}"
        )
    if not np.all(np.isfinite(features.values)):
        raise GnnError("non-finite node features")


def _forward_head(H, Z, a, recv, send, slope, m):
    """Single-head attention; returns (alpha, logits, aggregated output)."""
    d_out = Z.shape[1]
    s = Z[recv] @ a[:d_out] + Z[send] @ a[d_out:]
    e = _leaky(s, slope)
    mx = np.full(m, -np.inf)
    np.maximum.at(mx, recv, e)
    ex = np.exp(e - mx[recv])
    den = np.zeros(m)
    np.add.at(den, recv, ex)
    alpha = ex / den[recv]
    out = np.zeros((m, d_out))
    np.add.at(out, recv, alpha[:, None] * Z[send])
    return alpha, s, out


def _forward(graph: CorefGraph, features: FeatureMatrix, params: GatParams):
    _check_features(features, params)
    order = features.node_ids
    m = len(order)
    recv, send = _neighbor_arrays(graph, order)
    H = features.values
    acc = np.zeros((m, params.d_out))
    per_head = []
    for W, a in zip(params.weights, params.attn):
        Z = H @ W.T
        alpha, s, out = _forward_head(H, Z, a, recv, send, params.leaky_slope, m)
        per_head.append((Z, alpha, s))
        acc += out
    pre = acc / params.num_heads
    return np.maximum(pre, 0.0), pre, per_head, recv, send


def gat_forward(graph: CorefGraph, features: FeatureMatrix, params: GatParams) -> FeatureMatrix:
    out, _, _, _, _ = _forward(graph, features, params)
    return FeatureMatrix(features.node_ids, out)


def attention_weights(graph: CorefGraph, features: FeatureMatrix,
                      params: GatParams) -> AttentionMatrix:
    _, _, per_head, recv, send = _forward(graph, features, params)
    order = features.node_ids
    maps = []
    for _, alpha, _ in per_head:
        maps.append({
            (order[r], order[s]): float(w) for r, s, w in zip(recv, send, alpha)
        })
    return AttentionMatrix(tuple(maps))


def dense_oracle(graph: CorefGraph, features: FeatureMatrix, params: GatParams) -> FeatureMatrix:
    """Reference forward pass over full masked m-by-m matrices."""
    _check_features(features, params)
    order = features.node_ids
    index = {nid: i for i, nid in enumerate(order)}
    m = len(order)
    H = features.values
    mask = np.eye(m, dtype=bool)
    for e in graph.edges:
        mask[index[e.dst], index[e.src]] = True
    acc = np.zeros((m, params.d_out))
    for W, a in zip(params.weights, params.attn):
        Z = H @ W.T
        d_out = Z.shape[1]
        scores = (Z @ a[:d_out])[:, None] + (Z @ a[d_out:])[None, :]
        logits = _leaky(scores, params.leaky_slope)
        logits = np.where(mask, logits, -np.inf)
        logits = logits - logits.max(axis=1, keepdims=True)
        expd = np.where(mask, np.exp(logits), 0.0)
        alpha = expd / expd.sum(axis=1, keepdims=True)
        acc += alpha @ Z
    return FeatureMatrix(order, np.maximum(acc / params.num_heads, 0.0))


def gat_forward_cached(graph: CorefGraph, features: FeatureMatrix, params: GatParams):
    """Forward pass retaining intermediates for gat_backward."""
    out, pre, per_head, recv, send = _forward(graph, features, params)
    cache = {
        "H": features.values,
        "pre": pre,
        "per_head": per_head,
        "recv": recv,
        "send": send,
        "params": params,
    }
    return FeatureMatrix(features.node_ids, out), cache


def gat_backward(cache: dict, upstream: np.ndarray) -> tuple[GatGradients, np.ndarray]:
    """Exact gradients of the forward map given d(loss)/d(output)."""
    params: GatParams = cache["params"]
    H, pre = cache["H"], cache["pre"]
    recv, send = cache["recv"], cache["send"]
    m = H.shape[0]
    K = params.num_heads
    g = upstream * (pre > 0)
    dW_list, da_list = [], []
    dH = np.zeros_like(H)
    for (Z, alpha, s), W, a in zip(cache["per_head"], params.weights, params.attn):
        d_out = Z.shape[1]
        gk = g / K
        dZ = np.zeros_like(Z)
        # through the weighted aggregation sum_j alpha_ij z_j
        dalpha = np.sum(gk[recv] * Z[send], axis=1)
        np.add.at(dZ, send, alpha[:, None] * gk[recv])
        # softmax backward, grouped by receiver
        t = alpha * dalpha
        tsum = np.zeros(m)
        np.add.at(tsum, recv, t)
        de = alpha * (dalpha - tsum[recv])
        ds = de * _leaky_grad(s, params.leaky_slope)
        # logits s = a1 . z_recv + a2 . z_send
        a1, a2 = a[:d_out], a[d_out:]
        da = np.concatenate([(ds[:, None] * Z[recv]).sum(axis=0),
                             (ds[:, None] * Z[send]).sum(axis=0)])
        np.add.at(dZ, recv, ds[:, None] * a1[None, :])
        np.add.at(dZ, send, ds[:, None] * a2[None, :])
        dW_list.append(dZ.T @ H)
        da_list.append(da)
        dH += dZ @ W
    return GatGradients(dW_list, da_list), dH


def gat_gradients(
    graph: CorefGraph,
    features: FeatureMatrix,
    params: GatParams,
    upstream: np.ndarray,
) -> tuple[GatGradients, np.ndarray]:
    """Gradients w.r.t. parameters and input features for a given upstream."""
    if upstream.shape != (features.values.shape[0], params.d_out):
        raise GnnError(
            f"upstream shape {upstream.shape} does not match output "
            f"({features.values.shape[0]}, {params.d_out})"
        )
    _, cache = gat_forward_cached(graph, features, params)
    return gat_backward(cache, upstream)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def gat_params_to_dict(params: GatParams) -> dict:
    return {
        "num_heads": params.num_heads,
        "d_in": params.d_in,
        "d_out": params.d_out,
        "leaky_slope": params.leaky_slope,
        "weights": [w.tolist() for w in params.weights],
        "attn": [a.tolist() for a in params.attn],
    }


def gat_params_from_dict(data: dict) -> GatParams:
    weights = [np.asarray(w, dtype=np.float64) for w in data["weights"]]
    attn = [np.asarray(a, dtype=np.float64) for a in data["attn"]]
    params = GatParams(weights, attn, float(data["leaky_slope"]))
    declared = (data["num_heads"], data["d_out"], data["d_in"])
    if (params.num_heads, params.d_out, params.d_in) != declared:
        raise GnnError(
            f"checkpoint shape mismatch: declared {declared}, "
            f"got ({params.num_heads}, {params.d_out}, {params.d_in})"
        )
    return params
