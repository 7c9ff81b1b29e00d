"""Coreference metrics and corpus analysis.

MUC is the link-based measure (Vilain et al.), B3 averages per-mention
precision/recall, and CEAF-e aligns gold and system clusters one-to-one to
maximize total phi4 similarity; CoNLL F1 is the mean of the three F1s.
Also here: Fleiss' kappa, the lexical overlap rate between two documents,
corpus statistics (ambiguity, diversity, cluster-size histogram), and
bucketed evaluation by overlap rate and document length.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .clustering import ClusterSet, agglomerate
from .corpus import Corpus, Document


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class PRF:
    recall: float
    precision: float
    f1: float

    @classmethod
    def from_counts(cls, r_num: float, r_den: float, p_num: float, p_den: float) -> "PRF":
        r = r_num / r_den if r_den > 0 else 0.0
        p = p_num / p_den if p_den > 0 else 0.0
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(r, p, f1)


@dataclass(frozen=True)
class MetricReport:
    muc: PRF
    b3: PRF
    ceaf: PRF
    conll_f1: float

    def to_dict(self) -> dict:
        def prf(x: PRF) -> dict:
            return {"r": x.recall, "p": x.precision, "f1": x.f1}

        return {"muc": prf(self.muc), "b3": prf(self.b3), "ceaf": prf(self.ceaf),
                "conll_f1": self.conll_f1}

    @classmethod
    def from_dict(cls, data: dict) -> "MetricReport":
        def prf(d: dict) -> PRF:
            return PRF(d["r"], d["p"], d["f1"])

        return cls(prf(data["muc"]), prf(data["b3"]), prf(data["ceaf"]), data["conll_f1"])


def _check_universe(gold: ClusterSet, sys: ClusterSet) -> None:
    if gold.mentions() != sys.mentions():
        missing = gold.mentions() ^ sys.mentions()
        raise MetricsError(f"mention universes differ on {len(missing)} mentions")


def _vilain(a: ClusterSet, b: ClusterSet) -> tuple[int, int]:
    bmap = b.mention_to_cluster()
    num = den = 0
    for members in a.clusters.values():
        parts = {bmap[m] for m in members}
        num += len(members) - len(parts)
        den += len(members) - 1
    return num, den


def muc(gold: ClusterSet, sys: ClusterSet) -> PRF:
    """Link-based measure; all-singleton inputs score (0, 0, 0) by convention."""
    _check_universe(gold, sys)
    r_num, r_den = _vilain(gold, sys)
    p_num, p_den = _vilain(sys, gold)
    return PRF.from_counts(r_num, r_den, p_num, p_den)


def b_cubed(gold: ClusterSet, sys: ClusterSet) -> PRF:
    """Per-mention precision/recall averages."""
    _check_universe(gold, sys)
    gmap = gold.mention_to_cluster()
    smap = sys.mention_to_cluster()
    r_sum = p_sum = 0.0
    mentions = gold.mentions()
    for m in mentions:
        g = gold.clusters[gmap[m]]
        s = sys.clusters[smap[m]]
        inter = len(g & s)
        r_sum += inter / len(g)
        p_sum += inter / len(s)
    n = len(mentions)
    return PRF.from_counts(r_sum, n, p_sum, n)


def entity_similarity(a: frozenset[str], b: frozenset[str]) -> float:
    """phi4: 2 |a & b| / (|a| + |b|)."""
    return 2.0 * len(a & b) / (len(a) + len(b))


def ceaf_e(gold: ClusterSet, sys: ClusterSet) -> PRF:
    """Entity-based CEAF under the optimal one-to-one cluster alignment."""
    _check_universe(gold, sys)
    g = [gold.clusters[c] for c in sorted(gold.clusters)]
    s = [sys.clusters[c] for c in sorted(sys.clusters)]
    sim = np.array([[entity_similarity(gc, sc) for sc in s] for gc in g])
    rows, cols = linear_sum_assignment(-sim)
    total = float(sim[rows, cols].sum())
    return PRF.from_counts(total, len(g), total, len(s))


def conll_f1(report_or_f1s) -> float:
    """Mean of the MUC, B3 and CEAF F1 values."""
    if isinstance(report_or_f1s, MetricReport):
        vals = (report_or_f1s.muc.f1, report_or_f1s.b3.f1, report_or_f1s.ceaf.f1)
    else:
        vals = tuple(report_or_f1s)
    return sum(vals) / 3.0


def evaluate(gold: ClusterSet, sys: ClusterSet) -> MetricReport:
    m, b, c = muc(gold, sys), b_cubed(gold, sys), ceaf_e(gold, sys)
    return MetricReport(m, b, c, conll_f1((m.f1, b.f1, c.f1)))


def fleiss_kappa(ratings) -> float:
    """Chance-corrected multi-rater agreement over an items-by-categories
    count matrix with a constant rater count per item."""
    counts = np.asarray(ratings, dtype=np.float64)
    if counts.ndim != 2 or counts.shape[0] < 2 or counts.shape[1] < 2:
        raise MetricsError("need at least 2 items and 2 categories")
    row_sums = counts.sum(axis=1)
    n = row_sums[0]
    if n < 2:
        raise MetricsError("need at least 2 raters per item")
    if not np.allclose(row_sums, n):
        raise MetricsError("every item must have the same number of ratings")
    n_items = counts.shape[0]
    p_cat = counts.sum(axis=0) / (n_items * n)
    p_item = ((counts ** 2).sum(axis=1) - n) / (n * (n - 1))
    p_bar = float(p_item.mean())
    p_exp = float((p_cat ** 2).sum())
    if p_exp >= 1.0 - 1e-12:
        if p_bar >= 1.0 - 1e-12:
            return 1.0
        raise MetricsError("degenerate ratings: chance agreement is 1 but observed is not")
    return (p_bar - p_exp) / (1.0 - p_exp)


def lexical_overlap_rate(doc_a: Document, doc_b: Document) -> float:
    """Shared case-normalized word types over the mean type count."""
    types_a = {t.surface.casefold() for t in doc_a.tokens}
    types_b = {t.surface.casefold() for t in doc_b.tokens}
    if not types_a or not types_b:
        raise MetricsError("cannot compute overlap for an empty document")
    return len(types_a & types_b) / ((len(types_a) + len(types_b)) / 2.0)


HISTOGRAM_THRESHOLDS = (2, 5, 10, 20, 50)


def corpus_stats(corpus: Corpus) -> dict:
    """Mention/cluster counts, ambiguity (mean clusters per head lemma),
    diversity (mean unique head lemmas per cluster), and the cluster-size
    histogram."""
    clusters = corpus.gold_clusters()
    lemma_clusters: dict[str, set[int]] = {}
    cluster_lemmas: dict[int, set[str]] = {}
    for m in corpus.mentions:
        lemma = m.head_lemma.casefold()
        lemma_clusters.setdefault(lemma, set()).add(m.gold_cluster)
        cluster_lemmas.setdefault(m.gold_cluster, set()).add(lemma)
    sizes = [len(v) for v in clusters.values()]
    return {
        "mentions": len(corpus.mentions),
        "clusters": len(clusters),
        "singleton_clusters": sum(1 for s in sizes if s == 1),
        "ambiguity": float(np.mean([len(v) for v in lemma_clusters.values()])),
        "diversity": float(np.mean([len(v) for v in cluster_lemmas.values()])),
        "cluster_size_histogram": {
            f">={t}": sum(1 for s in sizes if s >= t) for t in HISTOGRAM_THRESHOLDS
        },
    }


# ---------------------------------------------------------------------------
# Bucketed analysis
# ---------------------------------------------------------------------------

OVERLAP_EDGES = (0.0, 0.1, 0.3, 0.5, 1.0)
LENGTH_EDGES = (512, 1024)


def overlap_bucket(rate: float, edges=OVERLAP_EDGES) -> str:
    labels = [
        f"{int(lo * 100)}-{int(hi * 100)}%" for lo, hi in zip(edges, edges[1:])
    ]
    for (lo, hi), label in zip(zip(edges, edges[1:]), labels):
        if lo <= rate < hi:
            return label
    return labels[-1]  # rate == top edge


def length_bucket(words: int, edges=LENGTH_EDGES) -> str:
    lo, hi = edges
    if words < lo:
        return f"<{lo}"
    if words <= hi:
        return f"{lo}-{hi}"
    return f">{hi}"


def bucketed_eval(
    corpus: Corpus,
    gold: ClusterSet,
    scores: dict[tuple[str, str], float],
    overlap_edges=OVERLAP_EDGES,
    length_edges=LENGTH_EDGES,
    filter_threshold: float = 0.5,
    stop_threshold: float = 0.7,
) -> dict[str, dict[str, MetricReport]]:
    """Per-bucket metric reports.

    Pairs are assigned by the overlap rate of their two documents and by the
    longer document's word count; each bucket is clustered and scored over
    the mention universe its pairs induce.  Empty buckets are absent.
    """
    overlap_cache: dict[tuple[str, str], float] = {}

    def pair_overlap(doc_a: str, doc_b: str) -> float:
        key = (doc_a, doc_b) if doc_a <= doc_b else (doc_b, doc_a)
        if key not in overlap_cache:
            overlap_cache[key] = lexical_overlap_rate(
                corpus.documents[key[0]], corpus.documents[key[1]]
            )
        return overlap_cache[key]

    assignments: dict[str, dict[str, dict[tuple[str, str], float]]] = {
        "overlap": {},
        "length": {},
    }
    for (a, b), score in scores.items():
        doc_a = corpus.mention(a).doc_id
        doc_b = corpus.mention(b).doc_id
        ob = overlap_bucket(pair_overlap(doc_a, doc_b), overlap_edges)
        lb = length_bucket(
            max(len(corpus.documents[doc_a]), len(corpus.documents[doc_b])), length_edges
        )
        assignments["overlap"].setdefault(ob, {})[(a, b)] = score
        assignments["length"].setdefault(lb, {})[(a, b)] = score

    out: dict[str, dict[str, MetricReport]] = {"overlap": {}, "length": {}}
    for dim, buckets in assignments.items():
        for label, bucket_scores in buckets.items():
            universe = {m for pair in bucket_scores for m in pair}
            sys = agglomerate(universe, bucket_scores, filter_threshold, stop_threshold)
            out[dim][label] = evaluate(gold.restrict(universe), sys)
    return out


# ---------------------------------------------------------------------------
# Report formatting
# ---------------------------------------------------------------------------

def format_report(reports: dict[str, MetricReport]) -> str:
    """Plain-text table with one row per system and R/P/F1 columns per metric."""
    header = (
        f"{'':16s}  {'MUC':^20s}  {'B3':^20s}  {'CEAF':^20s}  {'CoNLL':>6s}\n"
        f"{'':16s}  {'R':>6s}{'P':>7s}{'F1':>7s}  {'R':>6s}{'P':>7s}{'F1':>7s}  "
        f"{'R':>6s}{'P':>7s}{'F1':>7s}  {'F1':>6s}"
    )
    lines = [header]
    for name, rep in reports.items():
        cells = []
        for prf in (rep.muc, rep.b3, rep.ceaf):
            cells.append(f"{prf.recall:6.3f}{prf.precision:7.3f}{prf.f1:7.3f}")
        lines.append(f"{name:16s}  {cells[0]}  {cells[1]}  {cells[2]}  {rep.conll_f1:6.3f}")
    return "\n".join(lines)


def save_report(report: MetricReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_report(path: str | Path) -> MetricReport:
    with open(path, encoding="utf-8") as fh:
        return MetricReport.from_dict(json.load(fh))
