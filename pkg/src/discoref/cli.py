"""Command-line orchestration of the pipeline.

Subcommands read and write files under an output directory so runs are
composable and reproducible:

    gen-synth       write synthetic train + held-out corpora, embeddings, trees
    pairs           generate labeled mention pairs
    build-graphs    dump merged pair graphs as JSON for inspection
    train           train the attention layer and pair MLP, write a checkpoint
    predict         score pairs into a TSV table
    cluster         agglomerate a score table into clusters
    score           evaluate system clusters against gold and print the table
    stats           corpus statistics
    analyze         metric reports bucketed by lexical overlap and doc length
    ablate          re-run predict+cluster+score with one relation removed
    baseline-lemma  head-lemma baseline predictions, clusters and report

Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import clustering, corpus, discourse, fusion, gnn, lexchain, metrics, pairscorer


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    # paths
    corpus_path: str | None = None
    embeddings_path: str | None = None
    rst_dir: str | None = None
    lexicon_path: str | None = None
    stoplist_path: str | None = None
    checkpoint_path: str | None = None
    output_dir: str = "out"
    # embedding provider
    hash_embed_dim: int | None = None
    hash_embed_seed: int = 0
    # model
    gat_heads: int = 2
    gat_dim: int | None = None
    gat_layers: int = 1
    max_mention_len: int = 8
    leaky_slope: float = 0.2
    mlp_hidden: tuple[int, int] | None = None
    # training
    learning_rate: float = 1e-5
    warmup_steps: int | None = None
    batch_size: int = 128
    weight_decay: float = 0.01
    epochs: int = 10
    # pairing
    pair_mode: str = "wec_train"
    neg_ratio: int = 10
    # clustering
    filter_threshold: float = 0.5
    stop_threshold: float = 0.7
    within_topic: bool = False
    # analysis buckets
    overlap_edges: tuple[float, ...] = metrics.OVERLAP_EDGES
    length_edges: tuple[int, ...] = metrics.LENGTH_EDGES
    # misc
    seed: int = 7
    workers: int = 1
    synth: corpus.SynthConfig = field(default_factory=corpus.SynthConfig)

    def validate(self) -> None:
        for name in ("filter_threshold", "stop_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.pair_mode not in corpus.PAIR_MODES:
            raise ConfigError(f"pair_mode must be one of {corpus.PAIR_MODES}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")


def load_config(path: str | Path | None) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is None:
        return cfg
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc.msg}") from exc
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if key == "synth":
            synth_known = {f.name for f in dataclasses.fields(corpus.SynthConfig)}
            bad = set(value) - synth_known
            if bad:
                raise ConfigError(f"unknown synth config keys {sorted(bad)}")
            value = corpus.SynthConfig(**value)
        if key in ("mlp_hidden", "overlap_edges", "length_edges") and value is not None:
            value = tuple(value)
        setattr(cfg, key, value)
    cfg.validate()
    return cfg


def _parse_hash_embed(text: str) -> tuple[int, int]:
    """Parse 'd=<n>,seed=<n>' (comma or whitespace separated)."""
    out = {}
    for part in text.replace(",", " ").split():
        if "=" not in part:
            raise ConfigError(f"bad --hash-embed item {part!r}, expected key=value")
        key, value = part.split("=", 1)
        if key not in ("d", "seed"):
            raise ConfigError(f"--hash-embed keys are d and seed, got {key!r}")
        out[key] = int(value)
    if "d" not in out:
        raise ConfigError("--hash-embed needs d=<n>")
    return out["d"], out.get("seed", 0)


# ---------------------------------------------------------------------------
# Shared loading helpers
# ---------------------------------------------------------------------------

def _load_corpus(cfg: PipelineConfig) -> corpus.Corpus:
    if not cfg.corpus_path:
        raise ConfigError("corpus_path is required for this subcommand")
    return corpus.load_corpus(cfg.corpus_path)


def _load_embeddings(cfg: PipelineConfig, corp: corpus.Corpus) -> corpus.EmbeddingTable:
    if cfg.hash_embed_dim is not None:
        return corpus.hash_embedding_table(corp, cfg.hash_embed_dim, cfg.hash_embed_seed)
    if not cfg.embeddings_path:
        raise ConfigError("embeddings_path or --hash-embed is required")
    table = corpus.load_embeddings(cfg.embeddings_path)
    if not table.covers(corp):
        raise corpus.CorpusError("embedding file does not cover every document token")
    return table


def _load_trees(cfg: PipelineConfig, corp: corpus.Corpus) -> dict[str, discourse.RstTree]:
    if not cfg.rst_dir:
        raise ConfigError("rst_dir is required for this subcommand")
    trees = {}
    root = Path(cfg.rst_dir)
    for doc_id in corp.documents:
        path = root / f"{doc_id}.rst"
        if not path.exists():
            raise corpus.CorpusError(f"missing discourse tree file {path}")
        trees[doc_id] = discourse.parse_rst(path.read_text(encoding="utf-8"))
    return trees


def _load_inputs(cfg: PipelineConfig) -> pairscorer.PipelineInputs:
    corp = _load_corpus(cfg)
    table = _load_embeddings(cfg, corp)
    trees = _load_trees(cfg, corp)
    lexicon = lexchain.load_lexicon(cfg.lexicon_path) if cfg.lexicon_path else None
    stoplist = lexchain.load_stoplist(cfg.stoplist_path) if cfg.stoplist_path else frozenset()
    return pairscorer.PipelineInputs(corp, table, trees, lexicon, stoplist)


def _model_config(cfg: PipelineConfig) -> pairscorer.ModelConfig:
    return pairscorer.ModelConfig(
        gat_heads=cfg.gat_heads,
        gat_dim=cfg.gat_dim,
        gat_layers=cfg.gat_layers,
        max_mention_len=cfg.max_mention_len,
        leaky_slope=cfg.leaky_slope,
        mlp_hidden=cfg.mlp_hidden,
    )


def _out(cfg: PipelineConfig, name: str) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _write_synth(result: corpus.SynthResult, out: Path, prefix: str) -> None:
    corpus.serialize_corpus(result.corpus, out / f"{prefix}corpus.jsonl")
    corpus.save_embeddings(result.embeddings, out / f"{prefix}embeddings.jsonl")
    rst_dir = out / f"{prefix}rst"
    rst_dir.mkdir(parents=True, exist_ok=True)
    for doc_id, text in result.rst_trees.items():
        (rst_dir / f"{doc_id}.rst").write_text(text + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen_synth(cfg: PipelineConfig, args) -> int:
    synth_cfg = cfg.synth
    if args.seed is not None:
        synth_cfg = dataclasses.replace(synth_cfg, seed=args.seed)
    splits = corpus.generate_synthetic_splits(synth_cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_synth(splits.train, out, "")
    _write_synth(splits.heldout, out, "heldout_")
    print(f"wrote train corpus ({len(splits.train.corpus.mentions)} mentions) and "
          f"held-out corpus ({len(splits.heldout.corpus.mentions)} mentions) to {out}")
    return 0


def cmd_pairs(cfg: PipelineConfig, args) -> int:
    corp = _load_corpus(cfg)
    pairs = corpus.generate_pairs(corp, cfg.pair_mode, cfg.neg_ratio, cfg.seed)
    path = _out(cfg, args.output)
    corpus.save_pairs(pairs, path)
    n_pos = sum(1 for p in pairs if p.label)
    print(f"wrote {len(pairs)} pairs ({n_pos} positive) to {path}")
    return 0


def cmd_build_graphs(cfg: PipelineConfig, args) -> int:
    inputs = _load_inputs(cfg)
    pairs = corpus.load_pairs(args.pairs)
    bank = pairscorer.GraphBank(inputs, ablate=args.ablate_relation)
    out = _out(cfg, "graphs")
    out.mkdir(parents=True, exist_ok=True)
    seen = set()
    for p in pairs:
        key = bank.key_for(inputs.corpus.mention(p.mention_a), inputs.corpus.mention(p.mention_b))
        if key in seen:
            continue
        seen.add(key)
        graph, _, _ = bank.get(key)
        fusion.save_graph(graph, out / ("__".join(key) + ".json"))
    print(f"wrote {len(seen)} pair graphs to {out}")
    return 0


def cmd_train(cfg: PipelineConfig, args) -> int:
    inputs = _load_inputs(cfg)
    pairs = corpus.load_pairs(args.pairs)
    train_cfg = pairscorer.TrainConfig(
        learning_rate=cfg.learning_rate,
        warmup_steps=cfg.warmup_steps,
        batch_size=cfg.batch_size,
        weight_decay=cfg.weight_decay,
        epochs=cfg.epochs,
        seed=cfg.seed,
    )
    result = pairscorer.train(pairs, inputs, train_cfg, _model_config(cfg))
    path = Path(cfg.checkpoint_path) if cfg.checkpoint_path else _out(cfg, "checkpoint.json")
    pairscorer.save_checkpoint(result.gat, result.mlp, path,
                               extra={"loss_history": result.loss_history})
    print(f"trained {cfg.epochs} epochs, final loss {result.loss_history[-1]:.6f}, "
          f"checkpoint at {path}")
    return 0


def _checkpoint(cfg: PipelineConfig):
    path = Path(cfg.checkpoint_path) if cfg.checkpoint_path else Path(cfg.output_dir) / "checkpoint.json"
    if not path.exists():
        raise corpus.CorpusError(f"checkpoint not found at {path}")
    gat, mlp, _ = pairscorer.load_checkpoint(path)
    return gat, mlp


def cmd_predict(cfg: PipelineConfig, args) -> int:
    inputs = _load_inputs(cfg)
    pairs = corpus.load_pairs(args.pairs)
    gat, mlp = _checkpoint(cfg)
    rows = pairscorer.predict(pairs, gat, mlp, inputs, _model_config(cfg),
                              workers=cfg.workers, ablate=args.ablate_relation)
    path = _out(cfg, args.output)
    pairscorer.save_scores(rows, path)
    print(f"wrote {len(rows)} scores to {path}")
    return 0


def _cluster_scores(cfg: PipelineConfig, corp: corpus.Corpus,
                    scores: dict[tuple[str, str], float]) -> clustering.ClusterSet:
    mention_ids = {m.mention_id for m in corp.mentions}
    if not cfg.within_topic:
        return clustering.agglomerate(mention_ids, scores,
                                      cfg.filter_threshold, cfg.stop_threshold)
    by_topic: dict[str, set[str]] = {}
    for m in corp.mentions:
        topic = corp.documents[m.doc_id].topic_id or ""
        by_topic.setdefault(topic, set()).add(m.mention_id)
    merged: dict[int, frozenset[str]] = {}
    offset = 0
    for topic in sorted(by_topic):
        topic_scores = {
            (a, b): s for (a, b), s in scores.items()
            if a in by_topic[topic] and b in by_topic[topic]
        }
        part = clustering.agglomerate(by_topic[topic], topic_scores,
                                      cfg.filter_threshold, cfg.stop_threshold)
        for cid in sorted(part.clusters):
            merged[offset] = part.clusters[cid]
            offset += 1
    return clustering.ClusterSet(merged)


def cmd_cluster(cfg: PipelineConfig, args) -> int:
    corp = _load_corpus(cfg)
    scores = pairscorer.load_scores(args.scores)
    clusters = _cluster_scores(cfg, corp, scores)
    path = _out(cfg, args.output)
    clustering.save_clusters(clusters, path)
    print(f"wrote {len(clusters)} clusters to {path}")
    return 0


def cmd_score(cfg: PipelineConfig, args) -> int:
    corp = _load_corpus(cfg)
    sys_clusters = clustering.load_clusters(args.clusters)
    gold = clustering.ClusterSet.from_mapping(corp.gold_clusters())
    report = metrics.evaluate(gold, sys_clusters)
    metrics.save_report(report, _out(cfg, args.output))
    print(metrics.format_report({args.name: report}))
    print(f"CoNLL F1: {report.conll_f1:.3f}")
    return 0


def cmd_stats(cfg: PipelineConfig, args) -> int:
    corp = _load_corpus(cfg)
    stats = metrics.corpus_stats(corp)
    path = _out(cfg, "stats.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(stats, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(json.dumps(stats, sort_keys=True, indent=2))
    return 0


def cmd_analyze(cfg: PipelineConfig, args) -> int:
    corp = _load_corpus(cfg)
    scores = pairscorer.load_scores(args.scores)
    gold = clustering.ClusterSet.from_mapping(corp.gold_clusters())
    buckets = metrics.bucketed_eval(
        corp, gold, scores,
        overlap_edges=cfg.overlap_edges,
        length_edges=cfg.length_edges,
        filter_threshold=cfg.filter_threshold,
        stop_threshold=cfg.stop_threshold,
    )
    payload = {
        dim: {label: rep.to_dict() for label, rep in per.items()}
        for dim, per in buckets.items()
    }
    path = _out(cfg, "analysis.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    for dim, per in buckets.items():
        print(f"[{dim}]")
        print(metrics.format_report(dict(sorted(per.items()))))
    return 0


def cmd_ablate(cfg: PipelineConfig, args) -> int:
    if args.ablate_relation is None:
        raise ConfigError("ablate requires --ablate-relation <label>")
    inputs = _load_inputs(cfg)
    pairs = corpus.load_pairs(args.pairs)
    gat, mlp = _checkpoint(cfg)
    gold = clustering.ClusterSet.from_mapping(inputs.corpus.gold_clusters())
    model_cfg = _model_config(cfg)

    def run(ablate: str | None) -> metrics.MetricReport:
        rows = pairscorer.predict(pairs, gat, mlp, inputs, model_cfg,
                                  workers=cfg.workers, ablate=ablate)
        scores = {(a, b): s for a, b, s in rows}
        clusters = _cluster_scores(cfg, inputs.corpus, scores)
        return metrics.evaluate(gold, clusters)

    base = run(None)
    ablated = run(args.ablate_relation)
    delta = {
        "relation": args.ablate_relation,
        "base": base.to_dict(),
        "ablated": ablated.to_dict(),
        "conll_f1_delta": ablated.conll_f1 - base.conll_f1,
    }
    path = _out(cfg, "ablation.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(delta, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(metrics.format_report({"full": base, f"-{args.ablate_relation}": ablated}))
    print(f"CoNLL F1 delta: {delta['conll_f1_delta']:+.3f}")
    return 0


def cmd_baseline_lemma(cfg: PipelineConfig, args) -> int:
    corp = _load_corpus(cfg)
    pairs = corpus.generate_pairs(corp, "wec_eval", seed=cfg.seed)
    rows = [(p.mention_a, p.mention_b, float(pairscorer.lemma_baseline(p, corp)))
            for p in pairs]
    pairscorer.save_scores(rows, _out(cfg, "baseline_scores.tsv"))
    clusters = clustering.ClusterSet.from_mapping(pairscorer.lemma_clusters(corp))
    clustering.save_clusters(clusters, _out(cfg, "baseline_clusters.jsonl"))
    gold = clustering.ClusterSet.from_mapping(corp.gold_clusters())
    report = metrics.evaluate(gold, clusters)
    metrics.save_report(report, _out(cfg, "baseline_report.json"))
    print(metrics.format_report({"lemma": report}))
    print(f"CoNLL F1: {report.conll_f1:.3f}")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

COMMANDS = {
    "gen-synth": cmd_gen_synth,
    "pairs": cmd_pairs,
    "build-graphs": cmd_build_graphs,
    "train": cmd_train,
    "predict": cmd_predict,
    "cluster": cmd_cluster,
    "score": cmd_score,
    "stats": cmd_stats,
    "analyze": cmd_analyze,
    "ablate": cmd_ablate,
    "baseline-lemma": cmd_baseline_lemma,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="discoref",
                                     description="discourse-informed event coreference")
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--workers", type=int, default=None, help="worker pool size")
    parser.add_argument("--within-topic", action="store_true",
                        help="cluster each topic separately")
    parser.add_argument("--hash-embed", type=str, default=None, metavar="d=<n>,seed=<n>",
                        help="use the deterministic hash embedder")
    parser.add_argument("--ablate-relation", type=str, default=None,
                        help="rhetorical relation to remove from discourse fragments")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("gen-synth", help="generate synthetic corpora")
    sp = sub.add_parser("pairs", help="generate mention pairs")
    sp.add_argument("--output", default="pairs.jsonl")
    sp = sub.add_parser("build-graphs", help="dump pair graphs")
    sp.add_argument("--pairs", required=True)
    sp = sub.add_parser("train", help="train the model")
    sp.add_argument("--pairs", required=True)
    sp = sub.add_parser("predict", help="score pairs")
    sp.add_argument("--pairs", required=True)
    sp.add_argument("--output", default="scores.tsv")
    sp = sub.add_parser("cluster", help="cluster scored pairs")
    sp.add_argument("--scores", required=True)
    sp.add_argument("--output", default="clusters.jsonl")
    sp = sub.add_parser("score", help="evaluate clusters against gold")
    sp.add_argument("--clusters", required=True)
    sp.add_argument("--output", default="report.json")
    sp.add_argument("--name", default="system")
    sp = sub.add_parser("stats", help="corpus statistics")
    sp = sub.add_parser("analyze", help="bucketed evaluation")
    sp.add_argument("--scores", required=True)
    sp = sub.add_parser("ablate", help="relation-ablation comparison")
    sp.add_argument("--pairs", required=True)
    sp = sub.add_parser("baseline-lemma", help="head-lemma baseline")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None and args.command != "gen-synth":
            cfg.seed = args.seed
        if args.workers is not None:
            cfg.workers = args.workers
        if args.within_topic:
            cfg.within_topic = True
        if args.hash_embed:
            cfg.hash_embed_dim, cfg.hash_embed_seed = _parse_hash_embed(args.hash_embed)
        cfg.validate()
        if args.ablate_relation is not None and args.ablate_relation not in discourse.RELATION_LABELS:
            raise ConfigError(f"unknown relation {args.ablate_relation!r}")
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except (corpus.CorpusError, discourse.RstError, lexchain.LexiconError,
            fusion.FusionError, clustering.ClusterError, metrics.MetricsError,
            pairscorer.ScorerError, gnn.GnnError, OSError) as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return 3
    except (pairscorer.NumericError, FloatingPointError) as exc:
        print(f"error: numeric: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
