#!/usr/bin/env python3
"""Start a retrieval service on a 1400-item fixture store for the frontend
integration test.

Usage: python3 fixture_service.py PORT WORKDIR
Writes WORKDIR/fixture_meta.json (featurizer config) before serving.
"""

import json
import sys
from pathlib import Path

import numpy as np
import uvicorn

from zsketch.feature_store import FeatureStore, make_split
from zsketch.featurizer import FeaturizerConfig, PixelImage, featurize_tree, write_pgm
from zsketch.semantics import SemanticTable
from zsketch.service import ServiceState, build_app
from zsketch.trainer import TrainConfig, train

N_CLASSES = 14
PER_CLASS = 50  # per modality: 14 * 50 * 2 = 1400 items
SIZE = 32


def build_tree(root: Path, rng: np.random.Generator):
    for kind in ("sketch", "image"):
        for ci in range(N_CLASSES):
            d = root / kind / f"c{ci:02d}"
            d.mkdir(parents=True, exist_ok=True)
            for j in range(PER_CLASS):
                rows = np.arange(SIZE)[:, None]
                cols = np.arange(SIZE)[None, :]
                pattern = ((rows * (ci % 5 + 1) + cols * (ci % 7 + 1)) // 4) % 2
                pixels = np.clip(pattern * 0.8 + rng.random((SIZE, SIZE)) * 0.2, 0, 1)
                write_pgm(d / f"{j:03d}.pgm", PixelImage(SIZE, SIZE, pixels))


def main():
    port, workdir = int(sys.argv[1]), Path(sys.argv[2])
    rng = np.random.default_rng(1234)
    build_tree(workdir / "thumbs", rng)
    cfg = FeaturizerConfig()
    instances = []
    for kind in ("sketch", "image"):
        got, _ = featurize_tree(workdir / "thumbs" / kind, cfg, kind)
        instances.extend(got)
    classes = sorted({i.label for i in instances})
    store = FeatureStore(
        instances, classes, cfg.output_dim,
        featurizer_meta={"config": cfg.to_dict(), "hash": cfg.hash()},
    )
    split = make_split(store, classes[-2:])
    semantics = SemanticTable(
        {c: np.eye(len(classes))[i] * 2.0 for i, c in enumerate(classes)}
    )
    model = train(store, split, semantics, TrainConfig(
        triplets_per_anchor_type=300, batch_size=16, learning_rate=0.01,
        max_epochs=2, seed=3, hidden_dims=(32, 16, 8),
    ))
    (workdir / "fixture_meta.json").write_text(json.dumps({
        "featurizer_config": cfg.to_dict(),
        "classes": classes,
        "items": len(store),
    }))
    state = ServiceState(model, store, thumbnail_dir=workdir / "thumbs")
    uvicorn.run(build_app(state), host="127.0.0.1", port=port, log_level="error")


if __name__ == "__main__":
    main()
