import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zsketch.errors import RetrievalError
from zsketch.feature_store import make_split
from zsketch.net import Affine
from zsketch.retrieval import (
    EmbeddingIndex,
    IndexEntry,
    average_precision,
    embed_all,
    evaluate,
    evaluate_index,
    export_embeddings,
    knn,
    precision_at_k,
)
from zsketch.synthetic import make_synthetic_dataset
from zsketch.trainer import TrainConfig, train
from .oracles import brute_force_knn, enumerate_average_precision, enumerate_precision_at_k


def index_from(ids, labels, modalities, vectors):
    entries = [IndexEntry(i, m, l) for i, m, l in zip(ids, modalities, labels)]
    return EmbeddingIndex(entries, np.asarray(vectors, dtype=float))


# ---- knn ---------------------------------------------------------------------

def test_knn_hand_computed_distances():
    index = index_from(
        ["a", "b", "c"], ["x", "x", "x"], ["image"] * 3,
        [[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]],
    )
    result = knn(index, np.array([0.9, 0.0]), k=2)
    assert result.ids == ("b", "a")
    assert result.distances == pytest.approx((0.01, 0.81), abs=1e-12)


def test_knn_k_larger_than_gallery():
    index = index_from(["a", "b"], ["x", "x"], ["image"] * 2, [[0, 0], [1, 0]])
    result = knn(index, np.array([0.0, 0.0]), k=10)
    assert len(result.ids) == 2


def test_knn_tie_broken_by_ascending_id():
    index = index_from(
        ["z-last", "a-first"], ["x", "x"], ["image"] * 2, [[1, 0], [1, 0]]
    )
    result = knn(index, np.array([0.0, 0.0]), k=2)
    assert result.ids == ("a-first", "z-last")


def test_knn_modality_filter_and_exclusion():
    index = index_from(
        ["s1", "i1", "i2"], ["c", "c", "c"], ["sketch", "image", "image"],
        [[0, 0], [0.1, 0], [5, 0]],
    )
    result = knn(index, np.array([0.0, 0.0]), k=5, modality="image")
    assert result.ids == ("i1", "i2")
    with pytest.raises(RetrievalError):
        knn(index, np.array([0.0, 0.0]), k=5, modality="sketch", exclude_id="s1")


def test_empty_gallery_after_filter():
    index = index_from(["s1"], ["c"], ["sketch"], [[0, 0]])
    with pytest.raises(RetrievalError):
        knn(index, np.array([0.0, 0.0]), k=1, modality="image")


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_knn_matches_brute_force_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 40))
    vectors = rng.normal(size=(n, 3))
    ids = [f"id{i:03d}" for i in range(n)]
    index = index_from(ids, ["c"] * n, ["image"] * n, vectors)
    query = rng.normal(size=3)
    k = int(rng.integers(1, n + 1))
    result = knn(index, query, k=k)
    expect_ids, expect_d2 = brute_force_knn(ids, ["c"] * n, vectors, query, k)
    assert list(result.ids) == expect_ids
    np.testing.assert_allclose(result.distances, expect_d2, rtol=1e-9)


# ---- metrics -----------------------------------------------------------------

def test_average_precision_enumerated_example():
    ap, degenerate = average_precision([True, False, True, False])
    assert not degenerate
    assert ap == pytest.approx((1.0 + 2.0 / 3.0) / 2.0, abs=1e-12)
    assert ap == pytest.approx(enumerate_average_precision([1, 0, 1, 0]), abs=1e-15)


def test_average_precision_all_relevant():
    ap, degenerate = average_precision([True] * 5)
    assert ap == 1.0 and not degenerate


def test_average_precision_none_relevant():
    ap, degenerate = average_precision([False] * 4)
    assert ap == 0.0 and degenerate


@settings(max_examples=40, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=30))
def test_average_precision_matches_enumeration(flags):
    ap, _ = average_precision(flags)
    assert ap == pytest.approx(enumerate_average_precision(flags), abs=1e-12)
    assert precision_at_k(flags, 7) == pytest.approx(
        enumerate_precision_at_k(flags, 7), abs=1e-12
    )


# ---- evaluate ----------------------------------------------------------------

def clustered_index(rng, n_classes=3, per=8, spread=0.01, centers_scale=10.0):
    entries, vectors = [], []
    centers = rng.normal(size=(n_classes, 4)) * centers_scale
    for c in range(n_classes):
        for m in ("sketch", "image"):
            for j in range(per):
                entries.append(IndexEntry(f"{m}{c}-{j}", m, f"class{c}"))
                vectors.append(centers[c] + rng.normal(size=4) * spread)
    return EmbeddingIndex(entries, np.array(vectors))


def test_perfectly_clustered_embeddings_give_map_one():
    rng = np.random.default_rng(0)
    index = clustered_index(rng)
    report = evaluate_index(index, "sketch2image", k=5)
    assert report.map_score == 1.0
    assert report.p_at_k == 1.0
    assert set(report.per_class_ap) == {"class0", "class1", "class2"}


def test_random_embeddings_score_near_one_over_c():
    maps = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        entries, vectors = [], []
        for c in range(5):
            for m in ("sketch", "image"):
                for j in range(20):
                    entries.append(IndexEntry(f"{m}{c}-{j}", m, f"class{c}"))
                    vectors.append(rng.normal(size=6))
        report = evaluate_index(EmbeddingIndex(entries, np.array(vectors)),
                                "sketch2image", k=10)
        maps.append(report.map_score)
    assert abs(np.mean(maps) - 0.2) < 0.05


def test_reports_invariant_under_rotation_and_scaling():
    rng = np.random.default_rng(1)
    index = clustered_index(rng, spread=0.5, centers_scale=3.0)
    rot, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    transformed = EmbeddingIndex(
        index.entries, 2.5 * (index.embeddings @ rot.T), index.model_fingerprint
    )
    for direction in ("sketch2image", "image2image"):
        a = evaluate_index(index, direction, k=7).to_dict()
        b = evaluate_index(transformed, direction, k=7).to_dict()
        assert a == b


def test_uni_modal_excludes_query():
    entries = [IndexEntry(f"s{j}", "sketch", "c") for j in range(3)]
    index = EmbeddingIndex(entries, np.zeros((3, 2)))
    report = evaluate_index(index, "sketch2sketch", k=2)
    assert report.gallery_size == 2
    assert "query_excluded_from_gallery" in report.flags


def test_small_gallery_precision_is_flagged():
    rng = np.random.default_rng(2)
    index = clustered_index(rng, per=3)
    report = evaluate_index(index, "sketch2image", k=100)
    assert "small_gallery_precision_over_full_ranking" in report.flags
    # precision over the whole 9-item gallery: 3 relevant of 9, ranking aside
    assert report.p_at_k == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_empty_direction_is_an_error():
    entries = [IndexEntry("s0", "sketch", "c")]
    index = EmbeddingIndex(entries, np.zeros((1, 2)))
    with pytest.raises(RetrievalError):
        evaluate_index(index, "sketch2image", k=5)
    with pytest.raises(RetrievalError):
        evaluate_index(index, "bogus2bogus", k=5)


# ---- embedding ---------------------------------------------------------------

def trained_toy_model():
    store, sem, unseen = make_synthetic_dataset(
        n_classes=4, n_unseen=1, d_in=10, n_per_class_per_modality=6, seed=1
    )
    split = make_split(store, unseen)
    cfg = TrainConfig(triplets_per_anchor_type=30, batch_size=8, max_epochs=2,
                      learning_rate=0.01, seed=2, hidden_dims=(12, 10, 8))
    return store, split, train(store, split, sem, cfg)


def test_embed_all_routes_and_is_deterministic():
    store, split, model = trained_toy_model()
    a = embed_all(model, store)
    b = embed_all(model, store)
    assert np.array_equal(a.embeddings, b.embeddings)
    assert len(a) == len(store)
    assert a.model_fingerprint == b.model_fingerprint

    # sketches go through the sketch encoder, images through the other one
    from zsketch.retrieval import embed_instances

    si = [i for i, inst in enumerate(store.instances) if inst.modality == "sketch"]
    feats = store.feature_matrix(si)
    expected = embed_instances(model, feats, "sketch")
    rows = [r for r, e in enumerate(a.entries) if e.modality == "sketch"]
    np.testing.assert_allclose(a.embeddings[rows], expected, atol=1e-12)


def test_embed_all_empty_index():
    store, split, model = trained_toy_model()
    index = embed_all(model, store, [])
    assert len(index) == 0


def test_eval_embedding_matches_hand_composed_map():
    """Eval-mode encoder output equals the explicit composition of its
    affine layers, running-stat normalization, and leaky ReLU."""
    from zsketch.net import forward

    store, split, model = trained_toy_model()
    enc = model.encoder_s
    x = store.feature_matrix([0])
    out, _ = forward(enc, x, train=False)
    h = x
    for i, layer in enumerate(enc.layers):
        h = h @ layer.weight.T + (layer.bias if layer.bias is not None else 0.0)
        if i < len(enc.norms):
            bn = enc.norms[i]
            h = bn.gamma * (h - bn.running_mean) / np.sqrt(bn.running_var + enc.eps) + bn.beta
            h = np.where(h > 0, h, enc.slope * h)
    np.testing.assert_allclose(out, h, atol=1e-10)


def test_evaluate_runs_on_store_slices():
    store, split, model = trained_toy_model()
    report = evaluate(model, store, split.test_instances, "sketch2image", k=5)
    assert 0.0 <= report.map_score <= 1.0
    assert report.n_queries == 6


def test_export_embeddings_format(tmp_path):
    store, split, model = trained_toy_model()
    index = embed_all(model, store, [0, 1])
    path = tmp_path / "emb.csv"
    export_embeddings(index, path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["id", "modality", "label"] + [f"v{i+1}" for i in range(model.d_out)]
    assert len(rows) == 3
    back = np.array([float(v) for v in rows[1][3:]])
    np.testing.assert_array_equal(back, index.embeddings[0])
