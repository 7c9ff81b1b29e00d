import json

import pytest

from discoref.cli import _parse_hash_embed, ConfigError, load_config, main
from discoref.metrics import load_report


def write_config(tmp_path, out_dir, **overrides):
    cfg = {
        "output_dir": str(out_dir),
        "corpus_path": str(out_dir / "corpus.jsonl"),
        "embeddings_path": str(out_dir / "embeddings.jsonl"),
        "rst_dir": str(out_dir / "rst"),
        "max_mention_len": 3,
        "learning_rate": 1e-3,
        "batch_size": 32,
        "epochs": 2,
        "seed": 5,
        "synth": {
            "num_topics": 2,
            "clusters_per_topic": 2,
            "mentions_per_cluster": 4,
            "docs": 8,
            "doc_length": 24,
            "vocab_size": 3000,
            "seed": 5,
            "embed_dim": 6,
        },
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


@pytest.fixture
def pipeline(tmp_path):
    out = tmp_path / "out"
    config = write_config(tmp_path, out)
    assert main(["--config", str(config), "gen-synth"]) == 0
    assert main(["--config", str(config), "pairs", "--output", "pairs.jsonl"]) == 0
    return config, out


class TestGenSynth:
    def test_deterministic_outputs(self, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        cfg_a = write_config(tmp_path, out_a)
        main(["--config", str(cfg_a), "gen-synth"])
        cfg_b = write_config(tmp_path, out_b)
        cfg_b.rename(tmp_path / "config_b.json")
        cfg_b = tmp_path / "config_b.json"
        main(["--config", str(cfg_b), "gen-synth"])
        for name in ("corpus.jsonl", "embeddings.jsonl", "heldout_corpus.jsonl"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
        trees_a = sorted((out_a / "rst").iterdir())
        trees_b = sorted((out_b / "rst").iterdir())
        assert [p.name for p in trees_a] == [p.name for p in trees_b]
        assert all(a.read_bytes() == b.read_bytes() for a, b in zip(trees_a, trees_b))

    def test_seed_flag_changes_output(self, tmp_path):
        out = tmp_path / "o1"
        config = write_config(tmp_path, out)
        main(["--config", str(config), "gen-synth"])
        first = (out / "corpus.jsonl").read_bytes()
        main(["--config", str(config), "--seed", "99", "gen-synth"])
        assert (out / "corpus.jsonl").read_bytes() != first


class TestChain:
    def test_full_chain_and_score(self, pipeline):
        config, out = pipeline
        assert main(["--config", str(config), "train",
                     "--pairs", str(out / "pairs.jsonl")]) == 0
        assert (out / "checkpoint.json").exists()
        assert main(["--config", str(config), "predict",
                     "--pairs", str(out / "pairs.jsonl")]) == 0
        assert main(["--config", str(config), "cluster",
                     "--scores", str(out / "scores.tsv")]) == 0
        assert main(["--config", str(config), "score",
                     "--clusters", str(out / "clusters.jsonl")]) == 0
        report = load_report(out / "report.json")
        assert 0.0 <= report.conll_f1 <= 1.0

    def test_score_of_gold_clusters_is_perfect(self, pipeline, capsys):
        config, out = pipeline
        from discoref.clustering import ClusterSet, save_clusters
        from discoref.corpus import load_corpus

        corp = load_corpus(out / "corpus.jsonl")
        save_clusters(ClusterSet.from_mapping(corp.gold_clusters()),
                      out / "gold_clusters.jsonl")
        assert main(["--config", str(config), "score",
                     "--clusters", str(out / "gold_clusters.jsonl")]) == 0
        captured = capsys.readouterr().out
        assert "CoNLL F1: 1.000" in captured

    def test_stats_and_baseline(self, pipeline, capsys):
        config, out = pipeline
        assert main(["--config", str(config), "stats"]) == 0
        stats = json.loads((out / "stats.json").read_text())
        assert stats["clusters"] == 4 and stats["mentions"] == 16
        assert main(["--config", str(config), "baseline-lemma"]) == 0
        assert (out / "baseline_report.json").exists()
        assert (out / "baseline_scores.tsv").exists()
        report = load_report(out / "baseline_report.json")
        assert 0.0 <= report.conll_f1 <= 1.0

    def test_analyze(self, pipeline):
        config, out = pipeline
        main(["--config", str(config), "train", "--pairs", str(out / "pairs.jsonl")])
        main(["--config", str(config), "predict", "--pairs", str(out / "pairs.jsonl")])
        assert main(["--config", str(config), "analyze",
                     "--scores", str(out / "scores.tsv")]) == 0
        analysis = json.loads((out / "analysis.json").read_text())
        assert set(analysis) == {"overlap", "length"}
        assert "<512" in analysis["length"]

    def test_ablate_emits_delta(self, pipeline):
        config, out = pipeline
        main(["--config", str(config), "train", "--pairs", str(out / "pairs.jsonl")])
        assert main(["--config", str(config), "--ablate-relation", "Elaboration",
                     "ablate", "--pairs", str(out / "pairs.jsonl")]) == 0
        delta = json.loads((out / "ablation.json").read_text())
        assert delta["relation"] == "Elaboration"
        assert set(delta) >= {"base", "ablated", "conll_f1_delta"}

    def test_build_graphs(self, pipeline):
        config, out = pipeline
        assert main(["--config", str(config), "build-graphs",
                     "--pairs", str(out / "pairs.jsonl")]) == 0
        graphs = list((out / "graphs").iterdir())
        assert graphs
        payload = json.loads(graphs[0].read_text())
        assert set(payload) == {"nodes", "edges"}

    def test_predict_idempotent(self, pipeline):
        config, out = pipeline
        main(["--config", str(config), "train", "--pairs", str(out / "pairs.jsonl")])
        main(["--config", str(config), "predict", "--pairs", str(out / "pairs.jsonl")])
        first = (out / "scores.tsv").read_bytes()
        main(["--config", str(config), "predict", "--pairs", str(out / "pairs.jsonl")])
        assert (out / "scores.tsv").read_bytes() == first

    def test_hash_embed_flag(self, pipeline):
        config, out = pipeline
        assert main(["--config", str(config), "--hash-embed", "d=6,seed=5",
                     "train", "--pairs", str(out / "pairs.jsonl")]) == 0


class TestErrors:
    def test_missing_config_file_is_config_error(self):
        assert main(["--config", "/nonexistent/config.json", "stats"]) == 2

    def test_bad_config_key(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{"no_such_key": 1}', encoding="utf-8")
        assert main(["--config", str(path), "stats"]) == 2

    def test_bad_threshold(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{"filter_threshold": 2.0}', encoding="utf-8")
        assert main(["--config", str(path), "stats"]) == 2

    def test_missing_corpus_is_data_error(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"corpus_path": str(tmp_path / "nope.jsonl")}),
                        encoding="utf-8")
        assert main(["--config", str(path), "stats"]) == 3

    def test_malformed_corpus_is_data_error(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{not json\n", encoding="utf-8")
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"corpus_path": str(bad)}), encoding="utf-8")
        assert main(["--config", str(path), "stats"]) == 3

    def test_unknown_ablate_relation(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{}", encoding="utf-8")
        assert main(["--config", str(path), "--ablate-relation", "Bogus",
                     "stats"]) == 2

    def test_parse_hash_embed(self):
        assert _parse_hash_embed("d=16,seed=7") == (16, 7)
        assert _parse_hash_embed("d=8 seed=0") == (8, 0)
        assert _parse_hash_embed("d=8") == (8, 0)
        with pytest.raises(ConfigError):
            _parse_hash_embed("dim=8")
        with pytest.raises(ConfigError):
            _parse_hash_embed("seed=3")

    def test_load_config_defaults(self):
        cfg = load_config(None)
        assert cfg.learning_rate == 1e-5
        assert cfg.batch_size == 128
        assert cfg.weight_decay == 0.01
        assert cfg.epochs == 10
        assert cfg.filter_threshold == 0.5
        assert cfg.stop_threshold == 0.7
