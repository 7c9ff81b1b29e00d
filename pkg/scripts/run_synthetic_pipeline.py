#!/usr/bin/env python3
"""Run the full pipeline on a synthetic corpus and print the metric table.

Generates a training corpus plus a held-out corpus of fresh documents over
the same planted clusters, trains the scorer, and evaluates the clustering
on the held-out split. Also reports the head-lemma baseline and, if asked,
a rhetorical-relation ablation.

    python scripts/run_synthetic_pipeline.py --seed 7 --out /tmp/synth-run
    python scripts/run_synthetic_pipeline.py --seed 7 --ablate Elaboration
"""

import argparse
import json
import sys
import tempfile
from pathlib import Path

from discoref.cli import main as cli


def run(argv):
    code = cli(argv)
    if code != 0:
        sys.exit(code)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--out", type=str, default=None)
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--ablate", type=str, default=None,
                        help="also run with this rhetorical relation removed")
    args = parser.parse_args()

    out = Path(args.out) if args.out else Path(tempfile.mkdtemp(prefix="discoref-"))
    out.mkdir(parents=True, exist_ok=True)

    train_cfg = {
        "output_dir": str(out),
        "corpus_path": str(out / "corpus.jsonl"),
        "embeddings_path": str(out / "embeddings.jsonl"),
        "rst_dir": str(out / "rst"),
        "max_mention_len": 3,
        "learning_rate": 1e-3,
        "batch_size": 32,
        "epochs": args.epochs,
        "seed": args.seed,
        "workers": args.workers,
        "synth": {"seed": args.seed},
    }
    heldout_cfg = dict(train_cfg)
    heldout_cfg.update({
        "corpus_path": str(out / "heldout_corpus.jsonl"),
        "embeddings_path": str(out / "heldout_embeddings.jsonl"),
        "rst_dir": str(out / "heldout_rst"),
        "pair_mode": "wec_eval",
    })
    train_config = out / "train_config.json"
    train_config.write_text(json.dumps(train_cfg, indent=2), encoding="utf-8")
    heldout_config = out / "heldout_config.json"
    heldout_config.write_text(json.dumps(heldout_cfg, indent=2), encoding="utf-8")

    print(f"== workspace: {out}")
    run(["--config", str(train_config), "gen-synth"])
    run(["--config", str(train_config), "stats"])
    run(["--config", str(train_config), "pairs", "--output", "pairs.jsonl"])
    run(["--config", str(train_config), "train", "--pairs", str(out / "pairs.jsonl")])

    print("== held-out evaluation")
    run(["--config", str(heldout_config), "pairs", "--output", "heldout_pairs.jsonl"])
    run(["--config", str(heldout_config), "predict",
         "--pairs", str(out / "heldout_pairs.jsonl"), "--output", "heldout_scores.tsv"])
    run(["--config", str(heldout_config), "cluster",
         "--scores", str(out / "heldout_scores.tsv"), "--output", "heldout_clusters.jsonl"])
    run(["--config", str(heldout_config), "score",
         "--clusters", str(out / "heldout_clusters.jsonl"), "--output", "heldout_report.json"])

    print("== head-lemma baseline (held-out)")
    run(["--config", str(heldout_config), "baseline-lemma"])

    print("== bucketed analysis (held-out)")
    run(["--config", str(heldout_config), "analyze",
         "--scores", str(out / "heldout_scores.tsv")])

    if args.ablate:
        print(f"== ablation: {args.ablate} (held-out)")
        run(["--config", str(heldout_config), "--ablate-relation", args.ablate,
             "ablate", "--pairs", str(out / "heldout_pairs.jsonl")])


if __name__ == "__main__":
    main()
