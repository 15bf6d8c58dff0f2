#!/usr/bin/env python3
"""Full-corpus bi-modal retrieval experiment (optional; needs external data).

This reproduces the full evaluation protocol on the 14-class bi-modal
remote-sensing corpus: 10 seen / 4 unseen classes (unseen: runway,
storage_tanks, tennis_court, river), 14,000 triplets per anchor type,
fixed 300-d word vectors or the learned 128-d latent variant, and
mAP / P@100 for all four retrieval directions.

It does NOT ship the data: you must supply

  --store      manifest of externally extracted CNN features (e.g.
               ResNet-101 pooled features, one row per sketch/image; see
               README for the manifest format)
  --semantics  word2vec vectors, one line per class (underscores for
               multi-word names)

With full-corpus ResNet-101 features the published operating point for the
fixed-300 variant is sketch->image mAP around 0.68; desk-scale fixtures
will not reproduce that.
"""

import argparse
import json
from pathlib import Path

from zsketch.feature_store import load_store, make_split
from zsketch.retrieval import evaluate
from zsketch.semantics import load_word_vectors
from zsketch.trainer import TrainConfig, train

DEFAULT_UNSEEN = "runway,storage_tanks,tennis_court,river"
DIRECTIONS = ("sketch2image", "image2sketch", "sketch2sketch", "image2image")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--store", required=True)
    parser.add_argument("--semantics", required=True)
    parser.add_argument("--unseen", default=DEFAULT_UNSEEN)
    parser.add_argument("--variant", choices=["fixed300", "latent128"],
                        default="fixed300")
    parser.add_argument("--epochs", type=int, default=60)
    parser.add_argument("--learning-rate", type=float, default=0.02)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--out", help="write the report JSON here")
    args = parser.parse_args()

    store = load_store(args.store)
    semantics = load_word_vectors(args.semantics, store.class_set)
    split = make_split(store, [c for c in args.unseen.split(",") if c])
    cfg = TrainConfig(
        variant=args.variant,
        max_epochs=args.epochs,
        learning_rate=args.learning_rate,
        seed=args.seed,
    )
    print(f"training {args.variant} on {len(split.train_instances)} instances "
          f"({len(split.seen_classes)} seen classes)")
    model = train(store, split, semantics, cfg,
                  progress=lambda e, t: print(f"  epoch {e}: total {t:.4f}"))

    unseen_idx = store.indices_where(labels=split.unseen_classes)
    results = {}
    for direction in DIRECTIONS:
        report = evaluate(model, store, unseen_idx, direction, k=100)
        results[direction] = {"mAP": report.map_score, "P@100": report.p_at_k}
        print(f"{direction:14s} mAP {report.map_score:.3f}  "
              f"P@100 {report.p_at_k:.3f}")
    if args.out:
        Path(args.out).write_text(json.dumps(results, indent=2) + "\n")


if __name__ == "__main__":
    main()
