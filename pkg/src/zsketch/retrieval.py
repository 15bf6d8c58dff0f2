"""Shared-space embedding index, exact kNN, and mAP / P@K evaluation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import net
from .errors import DimensionMismatchError, RetrievalError
from .feature_store import FeatureStore, IMAGE, SKETCH
from .trainer import TrainedModel, model_fingerprint

DIRECTIONS = {
    "sketch2image": (SKETCH, IMAGE),
    "image2sketch": (IMAGE, SKETCH),
    "sketch2sketch": (SKETCH, SKETCH),
    "image2image": (IMAGE, IMAGE),
}


@dataclass
class IndexEntry:
    id: str
    modality: str
    label: str


class EmbeddingIndex:
    """Immutable unified-space vectors plus metadata, kNN-queryable."""

    def __init__(
        self,
        entries: Sequence[IndexEntry],
        embeddings: np.ndarray,
        model_fingerprint: str = "",
    ):
        if len(entries) != embeddings.shape[0]:
            raise RetrievalError("entry/embedding count mismatch")
        ids = [e.id for e in entries]
        if len(set(ids)) != len(ids):
            raise RetrievalError("duplicate ids in index")
        if embeddings.size and not np.all(np.isfinite(embeddings)):
            raise RetrievalError("non-finite embedding in index")
        self.entries = list(entries)
        self.embeddings = np.asarray(embeddings, dtype=np.float64)
        self.embeddings.setflags(write=False)
        self.model_fingerprint = model_fingerprint

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]


@dataclass(frozen=True)
class RetrievalResult:
    query_id: str | None
    query_modality: str
    ids: tuple[str, ...]
    labels: tuple[str, ...]
    distances: tuple[float, ...]  # squared Euclidean, non-decreasing


@dataclass
class EvalReport:
    direction: str
    map_score: float
    p_at_k: float
    k: int
    per_class_ap: dict[str, float]
    n_queries: int
    gallery_size: int
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "mAP": self.map_score,
            f"P@{self.k}": self.p_at_k,
            "k": self.k,
            "per_class_ap": self.per_class_ap,
            "n_queries": self.n_queries,
            "gallery_size": self.gallery_size,
            "flags": self.flags,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def embed_instances(model: TrainedModel, features: np.ndarray, modality: str) -> np.ndarray:
    """Eval-mode forward through the matching encoder."""
    enc = model.encoder_s if modality == SKETCH else model.encoder_i
    if features.shape[0] == 0:
        return np.zeros((0, model.d_out))
    if features.shape[1] != model.d_in:
        raise DimensionMismatchError(
            f"features dim {features.shape[1]} != model d_in {model.d_in}"
        )
    out, _ = net.forward(enc, features, train=False)
    return out


def embed_all(
    model: TrainedModel, store: FeatureStore, indices: Sequence[int] | None = None
) -> EmbeddingIndex:
    """Embed the given store instances (all of them by default)."""
    if indices is None:
        indices = range(len(store))
    indices = list(indices)
    entries = [
        IndexEntry(store.instances[i].id, store.instances[i].modality,
                   store.instances[i].label)
        for i in indices
    ]
    if not indices:
        return EmbeddingIndex(entries, np.zeros((0, model.d_out)),
                              model_fingerprint(model))
    vecs = np.zeros((len(indices), model.d_out))
    for modality in (SKETCH, IMAGE):
        rows = [r for r, e in enumerate(entries) if e.modality == modality]
        if rows:
            feats = store.feature_matrix([indices[r] for r in rows])
            vecs[rows] = embed_instances(model, feats, modality)
    return EmbeddingIndex(entries, vecs, model_fingerprint(model))


def knn(
    index: EmbeddingIndex,
    query: np.ndarray,
    k: int,
    modality: str | None = None,
    exclude_id: str | None = None,
    query_id: str | None = None,
    query_modality: str = SKETCH,
) -> RetrievalResult:
    """Exact squared-Euclidean kNN; ties broken by ascending id."""
    if k < 1:
        raise RetrievalError(f"k must be >= 1, got {k}")
    query = np.asarray(query, dtype=np.float64).reshape(-1)
    if query.shape[0] != index.dim:
        raise DimensionMismatchError(
            f"query dim {query.shape[0]} != index dim {index.dim}"
        )
    rows = [
        r for r, e in enumerate(index.entries)
        if (modality is None or e.modality == modality)
        and (exclude_id is None or e.id != exclude_id)
    ]
    if not rows:
        raise RetrievalError("empty gallery after filtering")
    gallery = index.embeddings[rows]
    diff = gallery - query
    d2 = np.einsum("ij,ij->i", diff, diff)
    order = sorted(range(len(rows)), key=lambda r: (d2[r], index.entries[rows[r]].id))
    top = order[: min(k, len(rows))]
    return RetrievalResult(
        query_id=query_id,
        query_modality=query_modality,
        ids=tuple(index.entries[rows[r]].id for r in top),
        labels=tuple(index.entries[rows[r]].label for r in top),
        distances=tuple(float(d2[r]) for r in top),
    )


def average_precision(relevance: Sequence[bool]) -> tuple[float, bool]:
    """AP over a full ranked gallery: mean precision at each relevant rank.

    Returns (ap, degenerate): zero relevant items yields (0.0, True).
    """
    rel = np.asarray(relevance, dtype=bool)
    n_rel = int(rel.sum())
    if n_rel == 0:
        return 0.0, True
    ranks = np.flatnonzero(rel) + 1
    hits = np.arange(1, n_rel + 1)
    return float(np.mean(hits / ranks)), False


def precision_at_k(relevance: Sequence[bool], k: int) -> float:
    rel = np.asarray(relevance, dtype=bool)
    top = rel[: min(k, len(rel))]
    return float(top.sum() / len(top)) if len(top) else 0.0


def evaluate_index(
    index: EmbeddingIndex, direction: str, k: int = 100
) -> EvalReport:
    """Rank the full target gallery for every query-modality entry.

    Relevance is label equality; uni-modal directions exclude the query
    itself from the gallery.  Galleries smaller than ``k`` compute
    precision over the whole gallery and flag the report.
    """
    if direction not in DIRECTIONS:
        raise RetrievalError(f"unknown direction {direction!r}")
    query_mod, target_mod = DIRECTIONS[direction]
    query_rows = [r for r, e in enumerate(index.entries) if e.modality == query_mod]
    gallery_rows = [r for r, e in enumerate(index.entries) if e.modality == target_mod]
    if not query_rows or not gallery_rows:
        raise RetrievalError(f"direction {direction}: empty query or gallery set")
    uni_modal = query_mod == target_mod
    gallery_size = len(gallery_rows) - (1 if uni_modal else 0)
    if gallery_size < 1:
        raise RetrievalError(f"direction {direction}: gallery too small")

    flags = []
    if uni_modal:
        flags.append("query_excluded_from_gallery")
    if gallery_size < k:
        flags.append("small_gallery_precision_over_full_ranking")

    gal = index.embeddings[gallery_rows]
    gal_sq = np.einsum("ij,ij->i", gal, gal)
    gal_ids = np.array([index.entries[r].id for r in gallery_rows])
    gal_labels = np.array([index.entries[r].label for r in gallery_rows])
    # lexicographic (distance, id) sort needs ids in a sortable tie array
    tie_order = np.argsort(gal_ids, kind="stable")
    ap_by_query = []
    p_by_query = []
    per_class: dict[str, list[float]] = {}
    warned = False
    for r in query_rows:
        q = index.embeddings[r]
        d2 = gal_sq - 2.0 * (gal @ q) + q @ q
        keep = np.ones(len(gallery_rows), dtype=bool)
        if uni_modal:
            keep = gal_ids != index.entries[r].id
        # sort by distance then id: apply id pre-sort, then stable distance sort
        cand = tie_order[keep[tie_order]]
        order = cand[np.argsort(d2[cand], kind="stable")]
        rel = gal_labels[order] == index.entries[r].label
        ap, degenerate = average_precision(rel)
        warned = warned or degenerate
        ap_by_query.append(ap)
        p_by_query.append(precision_at_k(rel, k))
        per_class.setdefault(index.entries[r].label, []).append(ap)
    if warned:
        flags.append("query_with_zero_relevant_items")
    return EvalReport(
        direction=direction,
        map_score=float(np.mean(ap_by_query)),
        p_at_k=float(np.mean(p_by_query)),
        k=k,
        per_class_ap={c: float(np.mean(v)) for c, v in sorted(per_class.items())},
        n_queries=len(query_rows),
        gallery_size=gallery_size,
        flags=flags,
    )


def evaluate(
    model: TrainedModel,
    store: FeatureStore,
    instance_indices: Sequence[int],
    direction: str,
    k: int = 100,
) -> EvalReport:
    """Embed the given instances and evaluate retrieval over them."""
    index = embed_all(model, store, instance_indices)
    return evaluate_index(index, direction, k)


def export_embeddings(index: EmbeddingIndex, path: str | Path):
    """CSV export ``id,modality,label,v1..vd`` for external visualization."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["id", "modality", "label"] + [f"v{i+1}" for i in range(index.dim)]
        )
        for entry, vec in zip(index.entries, index.embeddings):
            writer.writerow([entry.id, entry.modality, entry.label]
                            + [repr(float(v)) for v in vec])
