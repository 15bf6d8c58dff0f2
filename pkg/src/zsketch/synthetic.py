"""Synthetic bi-modal Gaussian-cluster datasets for tests and demos.

Each class is a Gaussian cluster around a class mean; each modality adds
its own constant offset, so the raw feature spaces of the two modalities
are shifted copies of the same class layout.  Semantic vectors are
mutually orthogonal by construction.
"""

from __future__ import annotations

import numpy as np

from .feature_store import FeatureStore, IMAGE, Instance, SKETCH
from .semantics import SemanticTable


def class_names(n: int) -> list[str]:
    return [f"class{i:02d}" for i in range(n)]


def make_synthetic_dataset(
    n_classes: int = 8,
    n_unseen: int = 2,
    d_in: int = 32,
    n_per_class_per_modality: int = 50,
    seed: int = 0,
    class_scale: float = 4.0,
    modality_scale: float = 1.5,
    noise: float = 0.35,
    semantic_scale: float = 2.0,
) -> tuple[FeatureStore, SemanticTable, list[str]]:
    """Returns (store, semantics, unseen_class_names).

    Seen-class means sit on orthonormal directions scaled by
    ``class_scale``; unseen-class means are placed inside the span of
    the seen means (normalized sums of seen direction pairs) so that a
    modality alignment learned on seen data extends to them — the
    zero-shot transfer is geometric, not memorized.  The modality
    offset is drawn per class and per modality: a single global offset
    per modality would be cancelled exactly by the first batch-norm
    layer, leaving nothing cross-modal to learn.  Semantic vectors are
    scaled one-hot (hence mutually orthogonal), one dimension per class.
    """
    n_seen = n_classes - n_unseen
    if not 0 < n_unseen < n_classes:
        raise ValueError("need 0 < n_unseen < n_classes")
    if n_seen > d_in:
        raise ValueError("need d_in >= number of seen classes")
    rng = np.random.default_rng(seed)
    names = class_names(n_classes)
    basis, _ = np.linalg.qr(rng.normal(size=(d_in, d_in)))
    seen_dirs = basis[:, :n_seen].T
    unseen_dirs = []
    for j in range(n_unseen):
        pair = seen_dirs[(2 * j) % n_seen] + seen_dirs[(2 * j + 1) % n_seen]
        unseen_dirs.append(pair / np.linalg.norm(pair))
    means = np.concatenate([seen_dirs, np.stack(unseen_dirs)]) * class_scale
    offsets = {
        m: rng.normal(size=(n_classes, d_in)) / np.sqrt(d_in) * modality_scale
        for m in (SKETCH, IMAGE)
    }
    instances = []
    for ci, name in enumerate(names):
        for modality in (SKETCH, IMAGE):
            samples = (
                means[ci]
                + offsets[modality][ci]
                + rng.normal(size=(n_per_class_per_modality, d_in)) * noise
            )
            for j in range(n_per_class_per_modality):
                instances.append(
                    Instance(f"{modality}:{name}/{j:04d}", modality, name, samples[j])
                )
    store = FeatureStore(instances, names, d_in)
    semantics = SemanticTable(
        {name: np.eye(n_classes)[i] * semantic_scale for i, name in enumerate(names)}
    )
    return store, semantics, names[-n_unseen:]


def write_word_vector_file(table: SemanticTable, path) -> None:
    """Dump a table in the whitespace text format the loader reads."""
    with open(path, "w") as fh:
        for name in table.classes():
            vec = " ".join(repr(float(v)) for v in table[name])
            fh.write(f"{name} {vec}\n")
