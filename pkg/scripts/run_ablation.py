#!/usr/bin/env python3
"""Per-loss-term ablation on the synthetic benchmark.

Trains the full objective and each leave-one-out variant under one fixed
joint-schedule budget, then reports unseen sketch->image retrieval for
each.  Expect the full objective on top, with the cross-projection and
cross-entropy ablations behind it.
"""

import argparse
import time

from zsketch.feature_store import make_split
from zsketch.losses import TERMS, LossConfig
from zsketch.retrieval import evaluate
from zsketch.synthetic import make_synthetic_dataset
from zsketch.trainer import TrainConfig, train


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--dataset-seed", type=int, default=20260811)
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--triplets", type=int, default=2000)
    parser.add_argument("--learning-rate", type=float, default=0.002)
    args = parser.parse_args()

    store, semantics, unseen = make_synthetic_dataset(seed=args.dataset_seed)
    split = make_split(store, unseen)
    unseen_idx = store.indices_where(labels=unseen)

    variants = [("full", set(TERMS))]
    variants += [(f"no-{t}", set(TERMS) - {t}) for t in TERMS]
    print(f"{'variant':10s} {'mAP(s2i,unseen)':>16s} {'seconds':>8s}")
    for name, enabled in variants:
        cfg = TrainConfig(
            triplets_per_anchor_type=args.triplets,
            max_epochs=args.epochs,
            learning_rate=args.learning_rate,
            seed=args.seed,
            schedule="joint",
            loss=LossConfig(enabled=frozenset(enabled)),
        )
        t0 = time.perf_counter()
        try:
            model = train(store, split, semantics, cfg)
        except Exception as exc:
            print(f"{name:10s} {'diverged':>16s} {time.perf_counter()-t0:8.1f}  ({exc})")
            continue
        report = evaluate(model, store, unseen_idx, "sketch2image", k=100)
        print(f"{name:10s} {report.map_score:16.4f} {time.perf_counter()-t0:8.1f}")


if __name__ == "__main__":
    main()
